"""Reaction-diffusion-advection right-hand side and its time integration.

The model is ``du/dt = F(u, theta) - d L u - alpha A_adv u`` with logistic
local growth ``F_i = gamma(theta_i) u_i (1 - u_i) - delta u_i``. Integration
is classical fixed-step RK4. Because ``A_adv`` does not preserve positivity,
negative components are clamped to zero after each step (optional, counted).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .advection import AdvectionMatrix
from .environment import EnvField, ThermalResponse, growth_rate
from .errors import DivergenceError

__all__ = [
    "SpeciesParams",
    "Trajectory",
    "SteadyState",
    "reaction",
    "rhs",
    "integrate",
    "steady_state",
    "extinct_nodes",
    "save_trajectory_csv",
    "save_steady_state_csv",
]

DEFAULT_DT = 0.01
DEFAULT_T_MAX = 500.0
DEFAULT_TOL = 1e-9
EXTINCTION_TOL = 1e-6


@dataclass(frozen=True)
class SpeciesParams:
    thermal: ThermalResponse = field(default_factory=ThermalResponse)
    delta: float = 0.5
    d: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("delta", "d", "alpha"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    def replace(self, **changes) -> "SpeciesParams":
        kw = {"thermal": self.thermal, "delta": self.delta, "d": self.d,
              "alpha": self.alpha}
        kw.update(changes)
        return SpeciesParams(**kw)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (n_saved, N)
    converged: bool
    clamp_events: int
    residual: float  # final projected ||rhs||_inf

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class SteadyState:
    u: np.ndarray
    converged: bool
    residual: float
    t_final: float
    clamp_events: int


def _theta(theta) -> np.ndarray:
    return theta.theta if isinstance(theta, EnvField) else np.asarray(theta, dtype=float)


def _adv(adv) -> np.ndarray:
    return adv.as_float() if isinstance(adv, AdvectionMatrix) else np.asarray(adv, dtype=float)


def reaction(u, theta, p: SpeciesParams) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    t = _theta(theta)
    if u.shape != t.shape:
        raise ValueError(f"density shape {u.shape} does not match field shape {t.shape}")
    gam = growth_rate(t, p.thermal)
    return gam * u * (1.0 - u) - p.delta * u


def rhs(u, theta, p: SpeciesParams, L, adv) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    lap = np.asarray(L, dtype=float)
    a = _adv(adv)
    if lap.shape != (u.size, u.size) or a.shape != lap.shape:
        raise ValueError("operator dimensions do not match density vector")
    return reaction(u, theta, p) - p.d * (lap @ u) - p.alpha * (a @ u)


class _Model:
    """Precomputed pieces of the right-hand side for repeated evaluation."""

    def __init__(self, theta, p: SpeciesParams, L, adv):
        self.gamma = np.atleast_1d(growth_rate(_theta(theta), p.thermal))
        self.delta = p.delta
        lap = np.asarray(L, dtype=float)
        a = _adv(adv)
        n = self.gamma.size
        if lap.shape != (n, n) or a.shape != (n, n):
            raise ValueError("operator dimensions do not match field length")
        self.transport = -p.d * lap - p.alpha * a

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.gamma * u * (1.0 - u) - self.delta * u + self.transport @ u


def _residual(u, k, clamp: bool) -> float:
    if clamp:
        # a clamped component pushing further negative is at rest
        k = np.where((u <= 0.0) & (k < 0.0), 0.0, k)
    return float(np.max(np.abs(k))) if k.size else 0.0


def integrate(u0, t_max: float, dt: float, theta, p: SpeciesParams, L, adv, *,
              clamp: bool = True, tol: float | None = DEFAULT_TOL,
              save_every: int = 100, t0: float = 0.0) -> Trajectory:
    """Fixed-step RK4 from ``t0`` to ``t0 + t_max``.

    States are recorded every ``save_every`` steps and at the end. With
    ``tol`` set, integration stops early once the (clamp-projected) sup-norm
    of the right-hand side drops below it; after a step that clamped, the
    step rate ``|u_new - u_old|_inf / dt`` is used instead. ``tol=None``
    disables early exit.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    u = np.array(u0, dtype=float, copy=True)
    if np.any(u < 0):
        raise ValueError("initial densities must be nonnegative")
    f = _Model(theta, p, L, adv)
    if u.shape != f.gamma.shape:
        raise ValueError("initial state length does not match field")
    n_steps = int(round(t_max / dt))
    save_every = max(1, int(save_every))

    times = [t0]
    states = [u.copy()]
    clamps = 0
    converged = False
    step = 0
    k1 = f(u)
    res = _residual(u, k1, clamp)
    # overflow is reported as DivergenceError below, not as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            if tol is not None and res < tol:
                converged = True
                break
            if step >= n_steps:
                break
            k2 = f(u + 0.5 * dt * k1)
            k3 = f(u + 0.5 * dt * k2)
            k4 = f(u + dt * k3)
            prev = u
            u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            step += 1
            if not np.all(np.isfinite(u)):
                raise DivergenceError(step, t0 + step * dt)
            clamped = False
            if clamp:
                neg = u < 0.0
                if neg.any():
                    clamps += int(neg.sum())
                    u[neg] = 0.0
                    clamped = True
            if step % save_every == 0:
                times.append(t0 + step * dt)
                states.append(u.copy())
            k1 = f(u)
            if clamped:
                # the clamped map settles where rhs is O(dt), not zero, so
                # measure how far the step actually moved the state instead
                res = float(np.max(np.abs(u - prev))) / dt
            else:
                res = _residual(u, k1, clamp)
    if times[-1] != t0 + step * dt:
        times.append(t0 + step * dt)
        states.append(u.copy())
    return Trajectory(np.asarray(times), np.asarray(states), converged, clamps, res)


def steady_state(u0, theta, p: SpeciesParams, L, adv, tol: float = DEFAULT_TOL, *,
                 t_max: float = DEFAULT_T_MAX, dt: float = DEFAULT_DT,
                 max_rounds: int = 3, clamp: bool = True) -> SteadyState:
    """Integrate until the residual drops below ``tol``.

    Round ``k`` (0-based) runs for ``t_max * 2**k`` more time units, starting
    where the previous round stopped. Running out of rounds is reported via
    ``converged=False``, not raised.
    """
    u = np.asarray(u0, dtype=float)
    t = 0.0
    clamps = 0
    traj = None
    for k in range(max_rounds):
        traj = integrate(u, t_max * 2 ** k, dt, theta, p, L, adv, clamp=clamp,
                         tol=tol, save_every=10 ** 9, t0=t)
        u = traj.final
        t = float(traj.times[-1])
        clamps += traj.clamp_events
        if traj.converged:
            break
    return SteadyState(u.copy(), traj.converged, traj.residual, t, clamps)


def extinct_nodes(u, tol: float = EXTINCTION_TOL) -> set[int]:
    u = np.asarray(u, dtype=float)
    return {int(i) for i in np.flatnonzero(u < tol)}


def save_trajectory_csv(traj: Trajectory, path) -> None:
    lines = ["time,node_id,u"]
    for t, row in zip(traj.times.tolist(), traj.states.tolist()):
        lines += [f"{t!r},{i},{v!r}" for i, v in enumerate(row)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def save_steady_state_csv(u, theta, path, tol: float = EXTINCTION_TOL) -> None:
    t = _theta(theta)
    lines = ["node_id,theta,u_star,extinct_flag"]
    lines += [f"{i},{ti!r},{ui!r},{int(ui < tol)}"
              for i, (ti, ui) in enumerate(zip(t.tolist(), np.asarray(u).tolist()))]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
