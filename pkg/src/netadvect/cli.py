"""Command-line entry point: ``netadvect <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .advection import build_advection_matrix, build_directed_flow, save_advection_csv, save_flow
from .analysis import classify_persistence, linearized_matrix, principal_eigenvalue
from .dynamics import integrate, save_steady_state_csv, save_trajectory_csv, steady_state
from .environment import load_field, save_field
from .errors import ConfigError, NumericalError
from .experiments import (
    KINDS, ExperimentConfig, FieldSpec, IntegratorSpec, NetworkSpec, apply_overrides,
    build_field, build_network, default_config, load_config, run_experiment, write_result,
)
from .graph import laplacian, load_edgelist, save_edgelist

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _read_json(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def _layered(args, defaults: dict) -> dict:
    """Defaults, then ``--config`` file, then ``--set`` overrides."""
    data = dict(defaults)
    if args.config:
        data.update(_read_json(args.config))
    return apply_overrides(data, args.set)


def _model_config(args) -> ExperimentConfig:
    """Species and integrator settings for ``simulate`` and ``eigen``."""
    base = default_config("hotspot").to_dict()
    data = _layered(args, {"species": base["species"], "integrator": base["integrator"]})
    unknown = sorted(set(data) - {"species", "integrator"})
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    return ExperimentConfig.from_dict(dict(base, **data))


def cmd_gen_network(args) -> int:
    data = _layered(args, {"generator": "watts_strogatz",
                           "params": {"n": 100, "k": 7, "beta": 0.1}, "seed": 0})
    if args.seed is not None:
        data["seed"] = args.seed
    try:
        spec = NetworkSpec(**data)
    except TypeError as exc:
        raise ConfigError(f"malformed network config: {exc}") from None
    cfg = default_config("hotspot")
    cfg.networks = [spec]
    cfg.validate()
    try:
        g = build_network(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    save_edgelist(g, args.out)
    print(f"wrote {g.n_nodes} nodes / {g.n_edges} edges to {args.out}")
    return EXIT_OK


def cmd_gen_field(args) -> int:
    data = _layered(args, {"kind": "uniform", "sigma": 1.0, "interval": [15.0, 35.0], "seed": 0})
    if args.seed is not None:
        data["seed"] = args.seed
    try:
        data["interval"] = tuple(float(x) for x in data["interval"])
        spec = FieldSpec(**data)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"malformed field config: {exc}") from None
    cfg = default_config("hotspot")
    cfg.field = spec
    cfg.validate()
    g = load_edgelist(args.network)
    f = build_field(spec, g)
    save_field(f, args.out)
    print(f"wrote field over {len(f)} nodes to {args.out}")
    return EXIT_OK


def cmd_build_advection(args) -> int:
    g = load_edgelist(args.network)
    f = load_field(args.field)
    flow = build_directed_flow(g, f, args.theta_opt)
    save_advection_csv(build_advection_matrix(flow), args.out)
    if args.flow_out:
        save_flow(flow, args.flow_out)
    print(f"wrote advection matrix to {args.out}")
    return EXIT_OK


def _load_model(args):
    cfg = _model_config(args)
    p = cfg.species_params()
    g = load_edgelist(args.network)
    f = load_field(args.field)
    if len(f) != g.n_nodes:
        raise ConfigError(f"field has {len(f)} nodes, network has {g.n_nodes}")
    adv = build_advection_matrix(build_directed_flow(g, f, p.thermal.theta_opt))
    return cfg, p, f, laplacian(g), adv


def cmd_simulate(args) -> int:
    cfg, p, f, lap, adv = _load_model(args)
    integ: IntegratorSpec = cfg.integrator
    u0 = np.full(len(f), integ.u0)
    if args.trajectory:
        traj = integrate(u0, integ.t_max, integ.dt, f, p, lap, adv, clamp=integ.clamp,
                         tol=integ.tol, save_every=args.save_every)
        save_trajectory_csv(traj, args.trajectory)
    ss = steady_state(u0, f, p, lap, adv, integ.tol, t_max=integ.t_max, dt=integ.dt,
                      max_rounds=integ.max_rounds, clamp=integ.clamp)
    save_steady_state_csv(ss.u, f, args.out)
    print(f"converged={ss.converged} t={ss.t_final:g} residual={ss.residual:.3e} "
          f"clamp_events={ss.clamp_events}")
    print(f"wrote steady state to {args.out}")
    return EXIT_OK


def cmd_eigen(args) -> int:
    if args.matrix:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)  # empty input
                m = np.loadtxt(args.matrix, delimiter=",", ndmin=2, comments="#")
        except ValueError as exc:
            raise ConfigError(f"{args.matrix}: cannot parse matrix: {exc}") from None
        if m.size == 0:
            raise ConfigError(f"{args.matrix}: matrix is empty")
    elif args.network and args.field:
        _, p, f, lap, adv = _load_model(args)
        m = linearized_matrix(f, p, lap, adv).m
    else:
        raise ConfigError("eigen needs --matrix, or --network together with --field")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"matrix must be square, got shape {m.shape}")
    lam, _ = principal_eigenvalue(m)
    print(f"lambda1 = {lam!r}")
    print(f"verdict = {classify_persistence(lam).classification}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.config:
        cfg = load_config(args.config)
    elif args.kind:
        cfg = default_config(args.kind)
    else:
        raise ConfigError("experiment needs --config or --kind")
    if args.set:
        cfg = ExperimentConfig.from_dict(apply_overrides(cfg.to_dict(), args.set))
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out:
        cfg.output_dir = args.out
    if args.dump_config:
        sys.stdout.write(cfg.to_json())
        return EXIT_OK
    if not cfg.output_dir:
        raise ConfigError("no output directory: pass --out or set output_dir")
    result = run_experiment(cfg)
    out = write_result(result, cfg.output_dir, force=args.force)
    print(f"config {result.config_hash}: wrote {', '.join(sorted(result.tables))} to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netadvect",
                                     description="Advection-diffusion population dynamics on habitat networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE",
                       help="override a config entry (repeatable)")
        p.add_argument("--seed", type=int, help="seed for every random draw")
        p.add_argument("--out", required=out_required, help="output path")

    p = sub.add_parser("gen-network", help="generate a habitat graph edge list")
    common(p)
    p.set_defaults(func=cmd_gen_network)

    p = sub.add_parser("gen-field", help="generate a temperature field for a network")
    common(p)
    p.add_argument("--network", required=True)
    p.set_defaults(func=cmd_gen_field)

    p = sub.add_parser("build-advection", help="build the advection matrix")
    p.add_argument("--network", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--theta-opt", type=float, default=25.0)
    p.add_argument("--out", required=True)
    p.add_argument("--flow-out", help="also write the directed flow edges")
    p.set_defaults(func=cmd_build_advection)

    p = sub.add_parser("simulate", help="integrate the model to steady state")
    common(p)
    p.add_argument("--network", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--trajectory", help="also write the transient as CSV")
    p.add_argument("--save-every", type=int, default=100)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eigen", help="principal eigenvalue and persistence verdict")
    common(p, out_required=False)
    p.add_argument("--matrix", help="square matrix as comma-separated rows")
    p.add_argument("--network")
    p.add_argument("--field")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("experiment", help="run a configured experiment")
    common(p, out_required=False)
    p.add_argument("--kind", choices=KINDS, help="start from the stock config of this kind")
    p.add_argument("--force", action="store_true",
                   help="overwrite results written under a different config")
    p.add_argument("--dump-config", action="store_true",
                   help="print the effective config and exit")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # input files that parse but violate model invariants
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
