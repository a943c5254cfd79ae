"""Undirected habitat networks: construction, generators, Laplacian, corridor loss.

Nodes are patches ``0..N-1``; edges are dispersal corridors. All random
generators draw from :func:`numpy.random.default_rng` (PCG64 seeded through
``SeedSequence``), so a given ``(params, seed)`` pair reproduces the same
graph bit for bit on any platform numpy supports.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "HabitatGraph",
    "CorridorRemoval",
    "from_edges",
    "neighbors",
    "degree",
    "laplacian",
    "is_connected",
    "gen_grid",
    "gen_erdos_renyi",
    "gen_watts_strogatz",
    "gen_star",
    "remove_corridors",
    "save_edgelist",
    "load_edgelist",
]

# Upper bound on reseeding attempts when a Watts-Strogatz draw is disconnected.
WS_MAX_TRIES = 1000


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator with an explicit integer seed."""
    if seed is None or isinstance(seed, bool) or int(seed) != seed:
        raise ValueError(f"seed must be an integer, got {seed!r}")
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class HabitatGraph:
    """Undirected, unweighted patch network.

    ``adjacency`` is a symmetric 0/1 ``int8`` matrix with zero diagonal. It is
    stored read-only; operations that change topology return a new graph.
    ``generator``, ``params`` and ``seed`` record provenance for serialization.
    """

    adjacency: np.ndarray
    generator: str = "explicit"
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.int8, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a)):
            raise ValueError("adjacency must have a zero diagonal")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(np.triu(self.adjacency).sum())

    def edges(self) -> list[tuple[int, int]]:
        """Edges as ``(i, j)`` with ``i < j``, in row-major order."""
        rows, cols = np.nonzero(np.triu(self.adjacency))
        return [(int(i), int(j)) for i, j in zip(rows, cols)]

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)

    def _check_node(self, i: int) -> int:
        if not 0 <= i < self.n_nodes:
            raise ValueError(f"node id {i} out of range for {self.n_nodes} nodes")
        return int(i)


def from_edges(n_nodes: int, edges, **provenance) -> HabitatGraph:
    """Build a graph from an iterable of ``(i, j)`` pairs (order irrelevant)."""
    if n_nodes < 1:
        raise ValueError("a graph needs at least one node")
    a = np.zeros((n_nodes, n_nodes), dtype=np.int8)
    for i, j in edges:
        if i == j:
            raise ValueError(f"self-loop at node {i}")
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise ValueError(f"edge ({i}, {j}) out of range for {n_nodes} nodes")
        a[i, j] = a[j, i] = 1
    return HabitatGraph(a, **provenance)


def neighbors(g: HabitatGraph, i: int) -> set[int]:
    i = g._check_node(i)
    return {int(j) for j in np.flatnonzero(g.adjacency[i])}


def degree(g: HabitatGraph, i: int) -> int:
    i = g._check_node(i)
    return int(g.adjacency[i].sum())


def laplacian(g: HabitatGraph) -> np.ndarray:
    """Combinatorial Laplacian ``D - A`` as a float matrix (exact integers)."""
    a = g.adjacency.astype(np.int64)
    lap = np.diag(a.sum(axis=1)) - a
    return lap.astype(float)


def is_connected(g: HabitatGraph) -> bool:
    n = g.n_nodes
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(g.adjacency[u]):
                if not seen[v]:
                    seen[v] = True
                    nxt.append(int(v))
        frontier = nxt
    return bool(seen.all())


def gen_grid(rows: int, cols: int) -> HabitatGraph:
    """4-neighbour lattice; node ``(r, c)`` has id ``r * cols + c``."""
    if rows < 1 or cols < 1:
        raise ValueError(f"grid dimensions must be positive, got {rows}x{cols}")
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                edges.append((k, k + 1))
            if r + 1 < rows:
                edges.append((k, k + cols))
    return from_edges(rows * cols, edges, generator="grid",
                      params={"rows": rows, "cols": cols})


def gen_erdos_renyi(n: int, p: float, seed: int) -> HabitatGraph:
    """G(n, p): each unordered pair ``i < j`` is linked independently.

    Pairs are visited in row-major upper-triangular order, one uniform draw
    each. Disconnected outputs are returned as-is.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must lie in [0, 1], got {p}")
    rng = make_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    a = np.zeros((n, n), dtype=np.int8)
    a[iu[keep], ju[keep]] = 1
    a = a + a.T
    return HabitatGraph(a, generator="erdos_renyi",
                        params={"n": n, "p": p}, seed=seed)


def _watts_strogatz_once(n: int, k: int, beta: float,
                         rng: np.random.Generator) -> np.ndarray:
    a = np.zeros((n, n), dtype=np.int8)
    for i in range(n):
        for j in range(1, k + 1):
            t = (i + j) % n
            a[i, t] = a[t, i] = 1
    # Rewire lattice edges (i, i+j) layer by layer, keeping i as the anchor.
    for j in range(1, k + 1):
        for i in range(n):
            if rng.random() >= beta:
                continue
            t = (i + j) % n
            if not a[i, t]:
                continue
            free = np.flatnonzero(a[i] == 0)
            free = free[free != i]
            if free.size == 0:
                continue
            w = int(free[rng.integers(free.size)])
            a[i, t] = a[t, i] = 0
            a[i, w] = a[w, i] = 1
    return a


def gen_watts_strogatz(n: int, k: int, beta: float, seed: int) -> HabitatGraph:
    """Small-world graph with ``k`` lattice neighbours on *each* side.

    Every node starts with degree ``2k``; rewiring moves edge endpoints but
    never creates or destroys an edge, so the result has exactly ``n * k``
    edges. If the draw is disconnected the seed is incremented and the draw
    repeated; the seed actually used is stored in ``params["effective_seed"]``.
    """
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    if 2 * k >= n:
        raise ValueError(f"k={k} too large for n={n}: need 2k < n")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"rewiring probability must lie in [0, 1], got {beta}")
    for attempt in range(WS_MAX_TRIES):
        a = _watts_strogatz_once(n, k, beta, make_rng(seed + attempt))
        g = HabitatGraph(a, generator="watts_strogatz",
                         params={"n": n, "k": k, "beta": beta,
                                 "effective_seed": seed + attempt},
                         seed=seed)
        if is_connected(g):
            return g
    raise RuntimeError(f"no connected Watts-Strogatz draw after {WS_MAX_TRIES} seeds")


def gen_star(n_leaves: int) -> HabitatGraph:
    """Star with centre 0 and leaves ``1..n_leaves``."""
    return from_edges(n_leaves + 1, [(0, j) for j in range(1, n_leaves + 1)],
                      generator="star", params={"n_leaves": n_leaves})


@dataclass(frozen=True)
class CorridorRemoval:
    graph: HabitatGraph
    removed: list[tuple[int, int]]
    quota: int
    n_incident: int  # edges touching a target node before removal


def remove_corridors(g: HabitatGraph, target_nodes, rho: float,
                     seed: int) -> CorridorRemoval:
    """Delete ``round(rho * |E|)`` edges, those touching ``target_nodes`` first.

    Incident edges are removed in a seeded random order; if the quota is
    larger than the incident set, the remaining quota is taken from the other
    edges, also in seeded random order. Halves round up.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"corridor-loss fraction must lie in [0, 1], got {rho}")
    targets = {g._check_node(t) for t in target_nodes}
    edges = g.edges()
    quota = int(math.floor(rho * len(edges) + 0.5))
    incident = [e for e in edges if e[0] in targets or e[1] in targets]
    others = [e for e in edges if e[0] not in targets and e[1] not in targets]
    rng = make_rng(seed)
    order = ([incident[k] for k in rng.permutation(len(incident))]
             + [others[k] for k in rng.permutation(len(others))])
    removed = order[:quota]
    a = np.array(g.adjacency, dtype=np.int8)
    for i, j in removed:
        a[i, j] = a[j, i] = 0
    params = dict(g.params, rho=rho, removal_seed=seed,
                  targets=sorted(targets))
    pruned = HabitatGraph(a, generator=g.generator, params=params, seed=g.seed)
    return CorridorRemoval(pruned, removed, quota, len(incident))


def save_edgelist(g: HabitatGraph, path) -> None:
    """Write ``# {json header}`` followed by one ``i j`` line per edge."""
    header = {"n_nodes": g.n_nodes, "generator": g.generator,
              "params": g.params, "seed": g.seed}
    lines = ["# " + json.dumps(header, sort_keys=True)]
    lines += [f"{i} {j}" for i, j in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_edgelist(path) -> HabitatGraph:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing JSON header line")
    header = json.loads(text[0][1:])
    edges = []
    for lineno, line in enumerate(text[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'i j', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return from_edges(int(header["n_nodes"]), edges,
                      generator=header.get("generator", "explicit"),
                      params=header.get("params", {}), seed=header.get("seed"))
