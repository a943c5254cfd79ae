"""Config-driven experiment harness.

Four experiment kinds share one JSON config layout:

* ``hotspot``: one network, one field, one steady state; reports the
  in-degree/abundance correlation and the extinct-node set.
* ``niche_tracking``: local-only (``d = alpha = 0``) and full-model steady
  states on the same network and field.
* ``advection_sweep``: several topologies sharing one field, swept over an
  ``alpha`` grid.
* ``corridor_sweep``: corridors touching the near-optimal nodes are removed
  at each loss fraction ``rho`` and the niche-distance profile is recorded.

Results are long-format CSV tables plus ``summary.json`` and
``provenance.json``. Every file carries the config hash; the CSVs and the
summary are byte-identical across reruns of the same config.
"""
from __future__ import annotations

import copy
import csv
import datetime as _dt
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .advection import build_advection_matrix, build_directed_flow
from .analysis import (
    UndefinedCorrelationError, classify_persistence, indegree_abundance_correlation,
    linearized_matrix, niche_order, principal_eigenvalue,
)
from .dynamics import EXTINCTION_TOL, SpeciesParams, steady_state
from .environment import (
    DEFAULT_INTERVAL, EnvField, ThermalResponse, gaussian_random_field, growth_rate,
    morans_i, rescale, uniform_field,
)
from .errors import ConfigError, ResultConflictError
from .graph import (
    HabitatGraph, gen_erdos_renyi, gen_grid, gen_star, gen_watts_strogatz, laplacian,
    remove_corridors,
)

__all__ = [
    "SCHEMA_VERSION",
    "KINDS",
    "NetworkSpec",
    "FieldSpec",
    "IntegratorSpec",
    "SweepSpec",
    "ExperimentConfig",
    "Table",
    "ExperimentResult",
    "default_config",
    "load_config",
    "apply_overrides",
    "build_network",
    "build_field",
    "optimal_nodes",
    "run_hotspot",
    "run_niche_tracking",
    "run_advection_sweep",
    "run_corridor_sweep",
    "run_experiment",
    "write_result",
]

SCHEMA_VERSION = 1
KINDS = ("hotspot", "niche_tracking", "advection_sweep", "corridor_sweep")

_GENERATORS = {
    "watts_strogatz": (gen_watts_strogatz, ("n", "k", "beta"), True),
    "erdos_renyi": (gen_erdos_renyi, ("n", "p"), True),
    "grid": (gen_grid, ("rows", "cols"), False),
    "star": (gen_star, ("n_leaves",), False),
}


@dataclass
class NetworkSpec:
    generator: str
    params: dict
    seed: int | None = None
    label: str | None = None

    def name(self) -> str:
        return self.label or self.generator


@dataclass
class FieldSpec:
    kind: str = "uniform"  # uniform | grf
    sigma: float = 1.0
    interval: tuple[float, float] = DEFAULT_INTERVAL
    seed: int = 0


@dataclass
class IntegratorSpec:
    dt: float = 0.01
    t_max: float = 500.0
    tol: float = 1e-9
    max_rounds: int = 3
    u0: float = 0.1
    clamp: bool = True


@dataclass
class SweepSpec:
    alphas: list[float] = field(default_factory=list)
    rhos: list[float] = field(default_factory=list)
    optimal_fraction: float = 0.1
    removal_seed: int = 0


@dataclass
class ExperimentConfig:
    kind: str
    networks: list[NetworkSpec]
    field: FieldSpec
    species: dict
    integrator: IntegratorSpec = field(default_factory=IntegratorSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    output_dir: str | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not self.networks:
            raise ConfigError("at least one network is required")
        for net in self.networks:
            if net.generator not in _GENERATORS:
                raise ConfigError(f"unknown generator {net.generator!r}")
            _, keys, seeded = _GENERATORS[net.generator]
            missing = [k for k in keys if k not in net.params]
            if missing:
                raise ConfigError(f"{net.generator}: missing params {missing}")
            extra = sorted(set(net.params) - set(keys))
            if extra:
                raise ConfigError(f"{net.generator}: unknown params {extra}")
            if seeded and not isinstance(net.seed, int):
                raise ConfigError(f"{net.generator}: an explicit integer seed is required")
        names = [net.name() for net in self.networks]
        if len(set(names)) != len(names):
            raise ConfigError(f"network labels must be unique, got {names}")
        if self.field.kind not in ("uniform", "grf"):
            raise ConfigError(f"unknown field kind {self.field.kind!r}")
        a, b = self.field.interval
        if a > b:
            raise ConfigError(f"field interval [{a}, {b}] is reversed")
        if self.field.sigma < 0:
            raise ConfigError("field sigma must be nonnegative")
        if not isinstance(self.field.seed, int):
            raise ConfigError("field seed must be an explicit integer")
        integ = self.integrator
        if integ.dt <= 0 or integ.t_max <= 0 or integ.max_rounds < 1 or integ.u0 < 0:
            raise ConfigError("integrator needs dt > 0, t_max > 0, max_rounds >= 1, u0 >= 0")
        try:
            self.species_params()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"species: {exc}") from None
        if self.kind == "advection_sweep":
            if not self.sweep.alphas or any(x < 0 for x in self.sweep.alphas):
                raise ConfigError("advection_sweep needs a nonempty list of alphas >= 0")
        if self.kind == "corridor_sweep":
            if not self.sweep.rhos or any(not 0 <= r <= 1 for r in self.sweep.rhos):
                raise ConfigError("corridor_sweep needs a nonempty list of rhos in [0, 1]")
            if not 0 < self.sweep.optimal_fraction <= 1:
                raise ConfigError("optimal_fraction must lie in (0, 1]")

    def species_params(self) -> SpeciesParams:
        s = dict(self.species)
        thermal = ThermalResponse(s.pop("gamma_opt", 3.0), s.pop("s_u", 2.0),
                                  s.pop("theta_opt", 25.0))
        return SpeciesParams(thermal, **s)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["field"]["interval"] = list(self.field.interval)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {"kind", "networks", "field", "species", "integrator", "sweep",
                 "output_dir", "schema_version"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        try:
            nets = [NetworkSpec(**n) for n in data["networks"]]
            fs = dict(data.get("field", {}))
            if "interval" in fs:
                fs["interval"] = tuple(float(x) for x in fs["interval"])
            return cls(kind=data["kind"], networks=nets, field=FieldSpec(**fs),
                       species=dict(data.get("species", {})),
                       integrator=IntegratorSpec(**data.get("integrator", {})),
                       sweep=SweepSpec(**data.get("sweep", {})),
                       output_dir=data.get("output_dir"),
                       schema_version=data.get("schema_version", SCHEMA_VERSION))
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc}") from None
        except TypeError as exc:
            raise ConfigError(f"malformed config: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def config_hash(self) -> str:
        # the output location does not affect results, so it is not hashed
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def seeds(self) -> dict:
        out = {f"network:{n.name()}": n.seed for n in self.networks}
        out["field"] = self.field.seed
        if self.kind == "corridor_sweep":
            out["removal"] = self.sweep.removal_seed
        return out

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with every seed set to ``seed``."""
        d = self.to_dict()
        for n in d["networks"]:
            if _GENERATORS[n["generator"]][2]:
                n["seed"] = seed
        d["field"]["seed"] = seed
        d["sweep"]["removal_seed"] = seed
        return ExperimentConfig.from_dict(d)


_WS100 = NetworkSpec("watts_strogatz", {"n": 100, "k": 7, "beta": 0.1}, seed=0)


def default_config(kind: str) -> ExperimentConfig:
    """Stock configuration for each experiment kind."""
    species = {"gamma_opt": 3.0, "s_u": 2.0, "theta_opt": 25.0,
               "delta": 0.5, "d": 1.0, "alpha": 1.0}
    if kind == "hotspot":
        return ExperimentConfig(kind, [copy.deepcopy(_WS100)], FieldSpec("uniform"), species)
    if kind == "niche_tracking":
        return ExperimentConfig(kind, [copy.deepcopy(_WS100)], FieldSpec("grf", sigma=1.0),
                                species)
    if kind == "advection_sweep":
        nets = [NetworkSpec("grid", {"rows": 4, "cols": 5}),
                NetworkSpec("erdos_renyi", {"n": 20, "p": 0.4}, seed=0),
                NetworkSpec("watts_strogatz", {"n": 20, "k": 3, "beta": 0.4}, seed=0)]
        alphas = [round(0.1 * i, 1) for i in range(11)]
        return ExperimentConfig(kind, nets, FieldSpec("uniform"), dict(species, d=0.3),
                                sweep=SweepSpec(alphas=alphas))
    if kind == "corridor_sweep":
        nets = [copy.deepcopy(_WS100),
                NetworkSpec("erdos_renyi", {"n": 100, "p": 0.1}, seed=0)]
        return ExperimentConfig(kind, nets, FieldSpec("grf", sigma=1.0), species,
                                sweep=SweepSpec(rhos=[0.0, 0.5, 0.9]))
    raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return ExperimentConfig.from_json(text)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.path=value`` overrides to a config dict (returns a copy).

    Values are parsed as JSON when possible, else kept as strings. List
    elements are addressed by index (``networks.0.seed=3``). New keys may
    only be created inside a ``params`` mapping.
    """
    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node = data
        for depth, key in enumerate(keys):
            last = depth == len(keys) - 1
            if isinstance(node, list):
                try:
                    idx = int(key)
                    node[idx]
                except (ValueError, IndexError):
                    raise ConfigError(f"override {path!r}: bad list index {key!r}") from None
                if last:
                    node[idx] = _parse_value(raw)
                else:
                    node = node[idx]
            elif isinstance(node, dict):
                if key not in node and not (last and keys[depth - 1:depth] == ["params"]):
                    raise ConfigError(f"override {path!r}: unknown key {key!r}")
                if last:
                    node[key] = _parse_value(raw)
                else:
                    node = node[key]
            else:
                raise ConfigError(f"override {path!r}: {keys[depth - 1]!r} is not a mapping")
    return data


# ----------------------------------------------------------------------------
# builders

def build_network(spec: NetworkSpec) -> HabitatGraph:
    fn, keys, seeded = _GENERATORS[spec.generator]
    args = [spec.params[k] for k in keys]
    if seeded:
        args.append(spec.seed)
    return fn(*args)


def build_field(spec: FieldSpec, g: HabitatGraph) -> EnvField:
    a, b = spec.interval
    if spec.kind == "uniform":
        return uniform_field(g.n_nodes, a, b, spec.seed)
    return rescale(gaussian_random_field(g, spec.sigma, spec.seed), a, b)


@dataclass
class _Run:
    flow: object
    ss: object
    lambda1: float
    verdict: str


def _simulate(g: HabitatGraph, theta: np.ndarray, p: SpeciesParams,
              integ: IntegratorSpec) -> _Run:
    flow = build_directed_flow(g, theta, p.thermal.theta_opt)
    adv = build_advection_matrix(flow)
    lap = laplacian(g)
    ss = steady_state(np.full(g.n_nodes, integ.u0), theta, p, lap, adv, integ.tol,
                      t_max=integ.t_max, dt=integ.dt, max_rounds=integ.max_rounds,
                      clamp=integ.clamp)
    lam, _ = principal_eigenvalue(linearized_matrix(theta, p, lap, adv).m)
    return _Run(flow, ss, lam, classify_persistence(lam).classification)


# ----------------------------------------------------------------------------
# results

@dataclass
class Table:
    header: tuple[str, ...]
    rows: list[tuple]

    def to_csv(self, config_hash: str) -> str:
        buf = io.StringIO()
        buf.write(f"# config_hash={config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        return buf.getvalue()


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    tables: dict[str, Table]
    summary: dict
    config_hash: str = ""

    def __post_init__(self):
        if not self.config_hash:
            self.config_hash = self.config.config_hash()

    def provenance(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config_hash,
            "seeds": self.config.seeds(),
            "version": __version__,
            "numpy_version": np.__version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "files": sorted(f"{name}.csv" for name in self.tables) + ["summary.json"],
        }


def _json_number(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _require(cfg: ExperimentConfig, kind: str) -> None:
    if cfg.kind != kind:
        raise ConfigError(f"expected a {kind} config, got {cfg.kind!r}")


def run_hotspot(cfg: ExperimentConfig) -> ExperimentResult:
    _require(cfg, "hotspot")
    p = cfg.species_params()
    g = build_network(cfg.networks[0])
    f = build_field(cfg.field, g)
    run = _simulate(g, f.theta, p, cfg.integrator)
    u = run.ss.u
    indeg = run.flow.in_degree()
    try:
        r = indegree_abundance_correlation(run.flow, u)
    except UndefinedCorrelationError:
        r = None
    rows = [(i, float(f.theta[i]), int(indeg[i]), float(u[i]), int(u[i] < EXTINCTION_TOL))
            for i in range(g.n_nodes)]
    extinct = [i for i in range(g.n_nodes) if u[i] < EXTINCTION_TOL]
    summary = {
        "correlation": r,
        "n_nodes": g.n_nodes,
        "n_edges": g.n_edges,
        "extinct_nodes": extinct,
        "lambda1": _json_number(run.lambda1),
        "verdict": run.verdict,
        "converged": run.ss.converged,
        "residual": _json_number(run.ss.residual),
        "clamp_events": run.ss.clamp_events,
    }
    header = ("node_id", "theta", "in_degree", "u_star", "extinct_flag")
    return ExperimentResult(cfg, {"nodes": Table(header, rows)}, summary)


def _mass_weighted_distance(u, dist) -> float | None:
    total = float(np.sum(u))
    return float(np.sum(u * dist) / total) if total > 0 else None


def _mass_share(u, theta, theta_opt: float, fraction: float) -> float | None:
    total = float(np.sum(u))
    if total <= 0:
        return None
    return float(np.sum(u[optimal_nodes(theta, theta_opt, fraction)]) / total)


def run_niche_tracking(cfg: ExperimentConfig) -> ExperimentResult:
    _require(cfg, "niche_tracking")
    p = cfg.species_params()
    g = build_network(cfg.networks[0])
    f = build_field(cfg.field, g)
    local = _simulate(g, f.theta, p.replace(d=0.0, alpha=0.0), cfg.integrator)
    full = _simulate(g, f.theta, p, cfg.integrator)
    gam = growth_rate(f.theta, p.thermal)
    dist = np.abs(f.theta - p.thermal.theta_opt)
    rows = [(i, float(f.theta[i]), float(dist[i]), float(gam[i]),
             float(local.ss.u[i]), float(full.ss.u[i])) for i in range(g.n_nodes)]
    summary = {
        "morans_i": _json_number(morans_i(g, f.theta)) if g.n_edges else None,
        "field_degenerate": f.degenerate,
        "mean_distance_local": _mass_weighted_distance(local.ss.u, dist),
        "mean_distance_full": _mass_weighted_distance(full.ss.u, dist),
        "optimal_mass_share_local": _mass_share(local.ss.u, f.theta, p.thermal.theta_opt,
                                                cfg.sweep.optimal_fraction),
        "optimal_mass_share_full": _mass_share(full.ss.u, f.theta, p.thermal.theta_opt,
                                               cfg.sweep.optimal_fraction),
        "survivors_local": int(np.sum(local.ss.u >= EXTINCTION_TOL)),
        "survivors_full": int(np.sum(full.ss.u >= EXTINCTION_TOL)),
        "converged_local": local.ss.converged,
        "converged_full": full.ss.converged,
        "clamp_events_full": full.ss.clamp_events,
        "lambda1_full": _json_number(full.lambda1),
        "verdict_full": full.verdict,
    }
    header = ("node_id", "theta", "distance", "gamma", "u_local", "u_full")
    return ExperimentResult(cfg, {"nodes": Table(header, rows)}, summary)


def run_advection_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    """Sweep ``alpha`` on every topology with one shared temperature field."""
    _require(cfg, "advection_sweep")
    p = cfg.species_params()
    graphs = [(net.name(), build_network(net)) for net in cfg.networks]
    sizes = {g.n_nodes for _, g in graphs}
    if len(sizes) != 1:
        raise ConfigError(f"advection_sweep topologies must share a node count, got {sorted(sizes)}")
    f = build_field(cfg.field, graphs[0][1])
    heat, runs = [], []
    for name, g in graphs:
        for alpha in cfg.sweep.alphas:
            run = _simulate(g, f.theta, p.replace(alpha=float(alpha)), cfg.integrator)
            indeg = run.flow.in_degree()
            u = run.ss.u
            heat += [(name, float(alpha), i, float(f.theta[i]), int(indeg[i]), float(u[i]))
                     for i in range(g.n_nodes)]
            runs.append((name, float(alpha), int(np.sum(u >= EXTINCTION_TOL)),
                         int(run.ss.converged), run.ss.clamp_events, float(run.ss.residual),
                         float(run.lambda1)))
    field_rows = [(i, float(t)) for i, t in enumerate(f.theta)]
    tables = {
        "field": Table(("node_id", "theta"), field_rows),
        "heatmap": Table(("topology", "alpha", "node_id", "theta", "in_degree", "u"), heat),
        "runs": Table(("topology", "alpha", "survivors", "converged", "clamp_events",
                       "residual", "lambda1"), runs),
    }
    summary = {"topologies": [n for n, _ in graphs],
               "edges": {n: g.n_edges for n, g in graphs},
               "all_converged": all(r[3] for r in runs)}
    return ExperimentResult(cfg, tables, summary)


def optimal_nodes(theta, theta_opt: float, fraction: float) -> list[int]:
    """The ``ceil(fraction * N)`` nodes closest to the optimum."""
    order = niche_order(theta, theta_opt)
    k = max(1, int(math.ceil(fraction * len(order) - 1e-9)))
    return sorted(int(i) for i in order[:k])


def run_corridor_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    """Remove corridors touching near-optimal nodes for each ``rho``."""
    _require(cfg, "corridor_sweep")
    p = cfg.species_params()
    opt = p.thermal.theta_opt
    profile, runs, targets_out = [], [], {}
    for net in cfg.networks:
        name = net.name()
        g = build_network(net)
        f = build_field(cfg.field, g)
        dist = np.abs(f.theta - opt)
        targets = optimal_nodes(f.theta, opt, cfg.sweep.optimal_fraction)
        targets_out[name] = targets
        for rho in cfg.sweep.rhos:
            cut = remove_corridors(g, targets, float(rho), cfg.sweep.removal_seed)
            run = _simulate(cut.graph, f.theta, p, cfg.integrator)
            u = run.ss.u
            order = niche_order(f.theta, opt)
            profile += [(name, float(rho), rank, int(i), float(dist[i]), float(u[i]))
                        for rank, i in enumerate(order)]
            alive = u >= EXTINCTION_TOL
            peak = int(np.argmax(u))
            runs.append((name, float(rho), cut.quota, cut.n_incident, cut.graph.n_edges,
                         float(u[peak]), float(dist[peak]),
                         float(dist[alive].max()) if alive.any() else float("nan"),
                         int(alive.sum()), float(u.sum()), int(run.ss.converged),
                         run.ss.clamp_events))
    tables = {
        "profile": Table(("network", "rho", "rank", "node_id", "distance", "u"), profile),
        "runs": Table(("network", "rho", "edges_removed", "incident_edges", "edges_remaining",
                       "peak_u", "peak_distance", "max_support_distance", "survivors",
                       "total_mass", "converged", "clamp_events"), runs),
    }
    summary = {"targets": targets_out, "all_converged": all(r[10] for r in runs)}
    return ExperimentResult(cfg, tables, summary)


_RUNNERS = {
    "hotspot": run_hotspot,
    "niche_tracking": run_niche_tracking,
    "advection_sweep": run_advection_sweep,
    "corridor_sweep": run_corridor_sweep,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return _RUNNERS[cfg.kind](cfg)


def write_result(result: ExperimentResult, out_dir, *, force: bool = False) -> Path:
    """Write CSV tables, ``summary.json`` and ``provenance.json`` into ``out_dir``.

    Refuses to touch a directory whose ``provenance.json`` records a
    different config hash unless ``force`` is set.
    """
    out = Path(out_dir)
    prov_path = out / "provenance.json"
    if prov_path.exists() and not force:
        try:
            old = json.loads(prov_path.read_text()).get("config_hash")
        except (OSError, json.JSONDecodeError, AttributeError):
            old = None
        if old != result.config_hash:
            raise ResultConflictError(
                f"{out} holds results for config {old}, not {result.config_hash}; "
                "use force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    for name, table in result.tables.items():
        (out / f"{name}.csv").write_text(table.to_csv(result.config_hash))
    summary = dict(result.summary, config_hash=result.config_hash, kind=result.config.kind)
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    prov_path.write_text(json.dumps(result.provenance(), sort_keys=True, indent=2) + "\n")
    return out
