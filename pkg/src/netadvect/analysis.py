"""Persistence analysis around the extinction state and summary statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .advection import AdvectionMatrix, DirectedFlow
from .environment import EnvField, growth_rate
from .errors import EigenSolverError

__all__ = [
    "LinearizedSystem",
    "PersistenceVerdict",
    "UndefinedCorrelationError",
    "linearized_matrix",
    "principal_eigenvalue",
    "classify_persistence",
    "node_equilibrium_root",
    "indegree_abundance_correlation",
    "niche_distance_profile",
    "niche_order",
]

CRITICAL_TOL = 1e-8


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class LinearizedSystem:
    """Jacobian at ``u = 0``: ``M = diag(r) - d L - alpha A_adv``, ``r_i = gamma_i - delta``."""

    m: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class PersistenceVerdict:
    lambda1: float
    classification: str  # "extinct" | "persistent" | "critical"


def linearized_matrix(theta, p, L, adv) -> LinearizedSystem:
    t = theta.theta if isinstance(theta, EnvField) else np.asarray(theta, dtype=float)
    lap = np.asarray(L, dtype=float)
    a = adv.as_float() if isinstance(adv, AdvectionMatrix) else np.asarray(adv, dtype=float)
    n = t.size
    if lap.shape != (n, n) or a.shape != (n, n):
        raise ValueError("operator dimensions do not match field length")
    r = np.atleast_1d(growth_rate(t, p.thermal)) - p.delta
    m = np.diag(r) - p.d * lap - p.alpha * a
    return LinearizedSystem(m, r)


def principal_eigenvalue(m, *, residual_tol: float = 1e-8):
    """Largest real part over the spectrum of a dense real matrix.

    Returns ``(lambda1, phi)``. ``phi`` is a real unit eigenvector (largest
    component positive) when the rightmost eigenvalue is real and simple,
    otherwise ``None``. Eigenvalues come from LAPACK ``geev`` (Hessenberg
    reduction followed by shifted QR).
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    try:
        evals, evecs = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"QR iteration failed: {exc}") from exc
    k = int(np.argmax(evals.real))
    lam = evals[k]
    lambda1 = float(lam.real)
    scale = max(1.0, float(np.max(np.abs(evals))))
    others = np.delete(evals, k)
    is_real = abs(lam.imag) <= 1e-12 * scale
    is_simple = others.size == 0 or np.min(np.abs(others - lam)) > 1e-9 * scale
    phi = None
    if is_real and is_simple:
        v = evecs[:, k].real
        v = v / np.linalg.norm(v)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        if np.linalg.norm(m @ v - lambda1 * v) <= residual_tol * max(1.0, np.linalg.norm(m, 2)):
            phi = v
    return lambda1, phi


def classify_persistence(lambda1: float, tol: float = CRITICAL_TOL) -> PersistenceVerdict:
    if not math.isfinite(lambda1):
        raise ValueError("lambda1 must be finite")
    if lambda1 < -tol:
        cls = "extinct"
    elif lambda1 > tol:
        cls = "persistent"
    else:
        cls = "critical"
    return PersistenceVerdict(float(lambda1), cls)


def node_equilibrium_root(r_i: float, gamma_i: float, alpha: float, inflow: float) -> float:
    """Nonnegative root of ``u (r - alpha) - gamma u**2 + alpha * inflow = 0``.

    Uses the cancellation-free form of the quadratic formula on whichever
    side of zero ``r - alpha`` falls.
    """
    if not gamma_i > 0:
        raise ValueError(f"gamma_i must be positive, got {gamma_i}")
    if alpha < 0 or inflow < 0:
        raise ValueError("alpha and inflow must be nonnegative")
    b = r_i - alpha
    c = alpha * inflow
    sq = math.sqrt(b * b + 4.0 * gamma_i * c)
    if b >= 0:
        return (b + sq) / (2.0 * gamma_i)
    if c == 0:
        return 0.0
    return 2.0 * c / (sq - b)


def indegree_abundance_correlation(flow: DirectedFlow, u) -> float:
    """Pearson correlation between directed in-degree and density."""
    x = flow.in_degree().astype(float)
    y = np.asarray(u, dtype=float)
    if x.shape != y.shape:
        raise ValueError("density length does not match flow")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(xc @ xc)
    sy = math.sqrt(yc @ yc)
    if sx == 0 or sy == 0:
        raise UndefinedCorrelationError("correlation undefined: a vector has zero variance")
    return float((xc @ yc) / (sx * sy))


def niche_order(theta, theta_opt: float) -> np.ndarray:
    """Node ids sorted by ``|theta_i - theta_opt|`` (ties by id)."""
    t = theta.theta if isinstance(theta, EnvField) else np.asarray(theta, dtype=float)
    return np.argsort(np.abs(t - theta_opt), kind="stable")


def niche_distance_profile(u, theta, theta_opt: float) -> list[tuple[float, float]]:
    """``(|theta_i - theta_opt|, u_i)`` pairs sorted by distance."""
    t = theta.theta if isinstance(theta, EnvField) else np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape != t.shape:
        raise ValueError("density length does not match field")
    dist = np.abs(t - theta_opt)
    return [(float(dist[i]), float(u[i])) for i in niche_order(t, theta_opt)]
