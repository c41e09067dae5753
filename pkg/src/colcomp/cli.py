"""Command-line front end: run scenarios, sweeps, dump topologies, and run
the quick self-check suite."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .sim import (
    ScenarioConfig,
    emit_results,
    geometric_topology,
    load_config,
    run_scenario,
    sweep,
)


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    from dataclasses import replace
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.mode is not None:
        updates["mode"] = args.mode
    if args.trials is not None:
        updates["trials"] = args.trials
    return replace(cfg, **updates) if updates else cfg


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    return _apply_overrides(cfg, args)


def cmd_run(args) -> int:
    cfg = _load(args)
    result = run_scenario(cfg)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = emit_results(result, outdir, name=args.name)
    final = {m: curve[-1] for m, curve in result.mse.items()}
    print(f"wrote {paths[0]} and {paths[1]}")
    print("final-step MSE: " + ", ".join(f"{m}={v:.6e}" for m, v in final.items()))
    print(f"wall clock: {result.wall_clock:.1f} s, design failures: {result.failures}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    results = sweep(cfg)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for value, res in zip(cfg.sweep_values, results):
        tag = str(value).replace(".", "p")
        emit_results(res, outdir, name=f"{args.name}_{cfg.sweep_parameter}_{tag}")
        final = {m: curve[-1] for m, curve in res.mse.items()}
        print(f"{cfg.sweep_parameter} = {value}: " +
              ", ".join(f"{m}={v:.6e}" for m, v in final.items()))
    return 0


def cmd_topology(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        topo = cfg.topology()
    else:
        topo = geometric_topology(args.n, args.m, args.r0, args.seed)
    print("# adjacency (M x N)")
    for row in topo.A:
        print(" ".join(str(int(x)) for x in row))
    if topo.positions is not None:
        print("# positions (x y), communicating sensors first")
        for p in topo.positions:
            print(f"{p[0]:.6f} {p[1]:.6f}")
    return 0


def cmd_check(args) -> int:
    """Quick identity/invariant suite; nonzero exit on any failure."""
    from . import checks
    failures = checks.run_all(verbose=True)
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="colcomp",
        description="Joint collaboration-compression design for distributed "
                    "sequential LMMSE estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario config file (key = value lines)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--mode", help="override the run mode")
    common.add_argument("--trials", type=int, help="override the trial count")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--name", default="run", help="output file stem")

    p_run = sub.add_parser("run", parents=[common], help="run one scenario")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="run the sweep defined in the config")
    p_sweep.set_defaults(func=cmd_sweep)

    p_topo = sub.add_parser("topology", help="print a generated topology")
    p_topo.add_argument("--config", help="take the topology from this config")
    p_topo.add_argument("--n", type=int, default=7)
    p_topo.add_argument("--m", type=int, default=3)
    p_topo.add_argument("--r0", type=float, default=0.5)
    p_topo.add_argument("--seed", type=int, default=0)
    p_topo.set_defaults(func=cmd_topology)

    p_check = sub.add_parser("check", help="run the fast invariant self-checks")
    p_check.set_defaults(func=cmd_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
