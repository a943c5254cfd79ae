"""Per-node environmental fields and the thermal growth response."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import HabitatGraph, laplacian, make_rng

__all__ = [
    "ThermalResponse",
    "EnvField",
    "growth_rate",
    "uniform_field",
    "gaussian_random_field",
    "smoothing_matrix",
    "rescale",
    "morans_i",
    "save_field",
    "load_field",
]

# Temperature window used when a field spec gives none (degrees C).
DEFAULT_INTERVAL = (15.0, 35.0)


@dataclass(frozen=True)
class ThermalResponse:
    """Gaussian thermal performance curve.

    Attributes
    ----------
    gamma_opt : float
        Peak per-capita birth rate, reached at ``theta_opt``.
    s_u : float
        Thermal breadth (degrees C), the width of the Gaussian.
    theta_opt : float
        Optimal temperature (degrees C).
    """

    gamma_opt: float = 3.0
    s_u: float = 2.0
    theta_opt: float = 25.0

    def __post_init__(self):
        # zero peak rate is allowed: it switches local growth off (pure transport)
        if not self.gamma_opt >= 0:
            raise ValueError(f"gamma_opt must be nonnegative, got {self.gamma_opt}")
        if not self.s_u > 0:
            raise ValueError(f"s_u must be positive, got {self.s_u}")
        if not np.isfinite(self.theta_opt):
            raise ValueError("theta_opt must be finite")


def growth_rate(theta, resp: ThermalResponse):
    """``gamma_opt * exp(-(theta - theta_opt)**2 / (2 s_u**2))``; scalar or array."""
    theta = np.asarray(theta, dtype=float)
    out = resp.gamma_opt * np.exp(-((theta - resp.theta_opt) ** 2) / (2.0 * resp.s_u ** 2))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EnvField:
    """Node temperatures plus how they were produced.

    ``provenance`` is ``"uniform"``, ``"grf"`` or ``"explicit"``. ``interval``
    is set once the field has been rescaled. ``degenerate`` flags a constant
    field that could not be rescaled affinely.
    """

    theta: np.ndarray
    provenance: str = "explicit"
    sigma: float | None = None
    seed: int | None = None
    interval: tuple[float, float] | None = None
    degenerate: bool = False

    def __post_init__(self):
        t = np.array(self.theta, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(t)):
            raise ValueError("field values must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "theta", t)

    def __len__(self):
        return self.theta.size

    def metadata(self) -> dict:
        return {"provenance": self.provenance, "sigma": self.sigma, "seed": self.seed,
                "interval": list(self.interval) if self.interval else None,
                "degenerate": self.degenerate, "n_nodes": len(self)}


def uniform_field(n: int, low: float, high: float, seed: int) -> EnvField:
    if n < 1:
        raise ValueError("n must be positive")
    if low > high:
        raise ValueError(f"low ({low}) exceeds high ({high})")
    theta = make_rng(seed).uniform(low, high, size=n)
    return EnvField(theta, provenance="uniform", seed=seed, interval=(low, high))


def smoothing_matrix(g: HabitatGraph, sigma: float) -> np.ndarray:
    """``expm(-sigma**2 L / 2)`` via the symmetric eigendecomposition of ``L``."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    n = g.n_nodes
    if sigma == 0 or g.n_edges == 0:
        return np.eye(n)
    evals, evecs = np.linalg.eigh(laplacian(g))
    evals = np.clip(evals, 0.0, None)
    return (evecs * np.exp(-0.5 * sigma ** 2 * evals)) @ evecs.T


def gaussian_random_field(g: HabitatGraph, sigma: float, seed: int) -> EnvField:
    """Zero-mean field ``expm(-sigma**2 L / 2) @ xi`` with ``xi ~ N(0, I)``.

    The result is unscaled; pass it through :func:`rescale` to map it onto
    a temperature window. ``sigma = 0`` (or an edgeless graph) returns ``xi``
    unchanged.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    xi = make_rng(seed).standard_normal(g.n_nodes)
    if sigma == 0 or g.n_edges == 0:
        theta = xi
    else:
        theta = smoothing_matrix(g, sigma) @ xi
    return EnvField(theta, provenance="grf", sigma=float(sigma), seed=seed)


def rescale(f: EnvField, a: float, b: float) -> EnvField:
    """Affine map of ``f`` onto ``[a, b]`` (min to ``a``, max to ``b``).

    A constant field has no affine preimage; it is mapped to the midpoint
    ``(a + b) / 2`` and returned with ``degenerate=True``.
    """
    if a > b:
        raise ValueError(f"interval start {a} exceeds end {b}")
    t = f.theta
    lo, hi = t.min(), t.max()
    if hi == lo:
        warnings.warn("constant field rescaled to interval midpoint", RuntimeWarning,
                      stacklevel=2)
        out = np.full_like(t, 0.5 * (a + b))
        degenerate = True
    else:
        out = a + (b - a) * (t - lo) / (hi - lo)
        # pin the extremes so min/max hit the bounds exactly
        out[t == lo] = a
        out[t == hi] = b
        degenerate = False
    return EnvField(out, provenance=f.provenance, sigma=f.sigma, seed=f.seed,
                    interval=(float(a), float(b)), degenerate=degenerate)


def morans_i(g: HabitatGraph, values) -> float:
    """Moran's I of ``values`` with the adjacency matrix as spatial weights."""
    x = np.asarray(values, dtype=float)
    if x.size != g.n_nodes:
        raise ValueError("values length does not match graph")
    w = g.adjacency.astype(float)
    total = w.sum()
    z = x - x.mean()
    denom = z @ z
    if total == 0 or denom == 0:
        raise ValueError("Moran's I undefined for edgeless graphs or constant values")
    return float(x.size / total * (z @ w @ z) / denom)


def save_field(f: EnvField, path) -> None:
    """Write ``node_id,theta`` CSV plus a ``.json`` sidecar with provenance."""
    path = Path(path)
    rows = ["node_id,theta"] + [f"{i},{v!r}" for i, v in enumerate(f.theta.tolist())]
    path.write_text("\n".join(rows) + "\n")
    path.with_suffix(".json").write_text(json.dumps(f.metadata(), indent=2, sort_keys=True))


def load_field(path) -> EnvField:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    ids = data[:, 0].astype(int)
    if not np.array_equal(ids, np.arange(ids.size)):
        raise ValueError(f"{path}: node ids must be 0..N-1 in order")
    meta = {}
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    interval = meta.get("interval")
    return EnvField(data[:, 1], provenance=meta.get("provenance", "explicit"),
                    sigma=meta.get("sigma"), seed=meta.get("seed"),
                    interval=tuple(interval) if interval else None,
                    degenerate=meta.get("degenerate", False))
