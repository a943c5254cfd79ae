"""Gradient-directed flow and the discrete advection operator.

Every patch with at least one neighbour points a single directed edge at the
neighbour whose temperature is closest to the species optimum. The advection
matrix is built from that directed subgraph as ``A_dir - A_dir.T`` with the
diagonal chosen so each column sums to zero; the model applies it as
``-alpha * A_adv @ u``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .environment import EnvField
from .graph import HabitatGraph

__all__ = [
    "DirectedFlow",
    "AdvectionMatrix",
    "build_directed_flow",
    "build_advection_matrix",
    "advective_term",
    "node_balance_matrix",
    "field_hash",
    "save_flow",
    "save_advection_csv",
]


def _theta_array(theta) -> np.ndarray:
    if isinstance(theta, EnvField):
        return theta.theta
    return np.asarray(theta, dtype=float).reshape(-1)


def field_hash(theta) -> str:
    """Short SHA-256 digest of the float64 bytes of a field."""
    t = np.ascontiguousarray(_theta_array(theta), dtype="<f8")
    return hashlib.sha256(t.tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class DirectedFlow:
    """Best-neighbour subgraph: ``a_dir[i, p(i)] = 1``."""

    a_dir: np.ndarray
    theta_opt: float | None = None
    source_hash: str | None = None

    def __post_init__(self):
        a = np.array(self.a_dir, dtype=np.int8, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("a_dir must be square")
        a.setflags(write=False)
        object.__setattr__(self, "a_dir", a)

    @property
    def n_nodes(self) -> int:
        return self.a_dir.shape[0]

    def in_degree(self) -> np.ndarray:
        return self.a_dir.sum(axis=0).astype(np.int64)

    def out_degree(self) -> np.ndarray:
        return self.a_dir.sum(axis=1).astype(np.int64)

    def targets(self) -> np.ndarray:
        """``p(i)`` for every node, ``-1`` where the node has no out-edge."""
        out = np.full(self.n_nodes, -1, dtype=np.int64)
        rows, cols = np.nonzero(self.a_dir)
        out[rows] = cols
        return out

    def edges(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.a_dir)
        return [(int(i), int(j)) for i, j in zip(rows, cols)]


@dataclass(frozen=True)
class AdvectionMatrix:
    """Integer advection operator; use :meth:`as_float` for dynamics."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.int64, copy=True)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def n_nodes(self) -> int:
        return self.entries.shape[0]

    def as_float(self) -> np.ndarray:
        return self.entries.astype(float)


def build_directed_flow(g: HabitatGraph, theta, theta_opt: float) -> DirectedFlow:
    """Point each non-isolated node at its neighbour nearest ``theta_opt``.

    Ties go to the lowest neighbour id. A node's own temperature plays no
    part: a node already at the optimum still emits an edge. Isolated nodes
    emit nothing.
    """
    t = _theta_array(theta)
    n = g.n_nodes
    if t.size != n:
        raise ValueError(f"field has {t.size} values but graph has {n} nodes")
    a_dir = np.zeros((n, n), dtype=np.int8)
    dev = np.abs(t - theta_opt)
    for i in range(n):
        nbrs = np.flatnonzero(g.adjacency[i])
        if nbrs.size == 0:
            continue
        # argmin returns the first minimum and nbrs is sorted, so ties -> lowest id
        a_dir[i, nbrs[np.argmin(dev[nbrs])]] = 1
    return DirectedFlow(a_dir, theta_opt=float(theta_opt), source_hash=field_hash(t))


def build_advection_matrix(flow: DirectedFlow) -> AdvectionMatrix:
    """Off-diagonal ``A_dir - A_dir.T``; diagonal set so every column sums to 0.

    Works in int64, so the zero column sums are exact.
    """
    a = flow.a_dir.astype(np.int64)
    adv = a - a.T
    np.fill_diagonal(adv, 0)
    np.fill_diagonal(adv, -adv.sum(axis=0))
    return AdvectionMatrix(adv)


def _matrix(adv) -> np.ndarray:
    if isinstance(adv, AdvectionMatrix):
        return adv.as_float()
    return np.asarray(adv, dtype=float)


def advective_term(adv, u, alpha: float) -> np.ndarray:
    """Rate contribution ``-alpha * A_adv @ u``."""
    m = _matrix(adv)
    u = np.asarray(u, dtype=float)
    if u.shape != (m.shape[0],):
        raise ValueError(f"density has shape {u.shape}, operator is {m.shape}")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return -alpha * (m @ u)


def node_balance_matrix(flow: DirectedFlow) -> np.ndarray:
    """Outflow-minus-inflow operator ``diag(out_degree) - A_dir.T``.

    ``-alpha * B @ u`` gives node ``i`` the rate ``alpha * (sum_{j->i} u_j - u_i)``
    (for out-degree one), the per-node balance used in the node-specific
    persistence argument. Columns sum to zero, so it also conserves mass,
    but unlike :func:`build_advection_matrix` it keeps densities nonnegative.
    """
    a = flow.a_dir.astype(float)
    return np.diag(a.sum(axis=1)) - a.T


def save_flow(flow: DirectedFlow, path) -> None:
    header = {"n_nodes": flow.n_nodes, "theta_opt": flow.theta_opt,
              "field_hash": flow.source_hash}
    lines = ["# " + json.dumps(header, sort_keys=True)]
    lines += [f"{i} {j}" for i, j in flow.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def save_advection_csv(adv: AdvectionMatrix, path) -> None:
    np.savetxt(path, adv.entries, fmt="%d", delimiter=",")
