"""Command-line entry point: ``gpcflock <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, load_config
from .harness import OracleUnavailable, compare_mc, convergence_study, oracle_series, run
from .output import OutputError, emit, emit_table
from .recipes import RECIPES, run_recipe

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("gpcflock")


def parse_orders(text: str) -> list[int]:
    """``0..10`` (inclusive range) or a comma list ``1,2,4``."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad order list {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dt", type=float, help="time step (overrides config)")
    p.add_argument("--order", type=int, help="gPC order M (overrides config)")
    p.add_argument("--kappa", type=float, help="control penalty; 'inf' switches control off")
    p.add_argument("--seed", type=int, help="seed of the initial data")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpcflock", description="Stochastic Galerkin flocking with uncertain interaction rates")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario")
    p.add_argument("config", type=Path)
    _common(p)

    p = sub.add_parser("converge", help="error table over gPC orders")
    p.add_argument("config", type=Path)
    p.add_argument("--orders", type=parse_orders, default=parse_orders("0..10"))
    _common(p)

    p = sub.add_parser("compare-mc", help="gPC against a Monte Carlo reference")
    p.add_argument("config", type=Path)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--mc-seed", type=int, default=0)
    _common(p)

    p = sub.add_parser("recipe", help="reproduce an experiment family")
    p.add_argument("name", choices=RECIPES)
    _common(p)

    p = sub.add_parser("oracle", help="closed-form expected velocity and variance")
    p.add_argument("config", type=Path)
    _common(p)
    return parser


def apply_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    changes = {}
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.order is not None:
        changes["M"] = args.order
    if args.seed is not None:
        changes["init"] = replace(config.init, seed=args.seed)
    if args.out is not None or args.format is not None:
        changes["output"] = replace(
            config.output,
            dir=str(args.out) if args.out is not None else config.output.dir,
            format=args.format or config.output.format,
        )
    if args.kappa is not None:
        if math.isinf(args.kappa):
            changes["control"] = None
        elif config.control is None:
            raise ConfigError("--kappa needs a control section in the config")
        else:
            changes["control"] = replace(config.control, kappa=args.kappa, nu=None)
    return config.replace(**changes) if changes else config


def _overrides_dict(args) -> dict:
    out = {}
    if args.dt is not None:
        out["dt"] = args.dt
    if args.order is not None:
        out["M"] = args.order
    return out


def _cmd_simulate(config: ScenarioConfig) -> int:
    record = run(config)
    path = emit(record, Path(config.output.dir) / config.name, config.output.format)
    print(path)
    if record.aborted:
        print(f"diverged at t={record.abort_time:g}; partial record written", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _cmd_converge(config: ScenarioConfig, orders) -> int:
    rows = convergence_study(config, orders)
    path = emit_table(["M", "mean_error", "variance_error"], rows, Path(config.output.dir) / f"{config.name}_convergence", config.output.format)
    for M, em, ev in rows:
        print(f"M={M:3d}  E_mean={em:.3e}  E_var={ev:.3e}")
    print(path)
    return EXIT_OK


def _cmd_compare(config: ScenarioConfig, samples: int, seed: int) -> int:
    table = compare_mc(config, samples, seed)
    N, d = config.N, config.d
    agents = [(i, k) for i in range(N) for k in range(d)]
    cols = ["t"] + [f"mean_gap_{i}_{k}" for i, k in agents] + [f"var_gap_{i}_{k}" for i, k in agents] + [f"stderr_{i}_{k}" for i, k in agents]
    rows = [
        [t] + list(table["mean_gap"][s].ravel()) + list(table["variance_gap"][s].ravel()) + list(table["stderr"][s].ravel())
        for s, t in enumerate(table["times"])
    ]
    print(emit_table(cols, rows, Path(config.output.dir) / f"{config.name}_mc", config.output.format))
    return EXIT_OK


def _cmd_oracle(config: ScenarioConfig) -> int:
    times = np.arange(0, config.steps + 1, config.output.stride) * config.dt
    series = oracle_series(config, times)
    agents = [(i, k) for i in range(config.N) for k in range(config.d)]
    cols = ["t"] + [f"vbar_{i}_{k}" for i, k in agents] + [f"var_{i}_{k}" for i, k in agents]
    rows = [[t] + list(series["mean"][s].ravel()) + list(series["variance"][s].ravel()) for s, t in enumerate(times)]
    print(emit_table(cols, rows, Path(config.output.dir) / f"{config.name}_oracle", config.output.format))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "recipe":
            for path in run_recipe(args.name, args.out or Path("out"), args.format or "csv", _overrides_dict(args)):
                print(path)
            return EXIT_OK
        config = apply_overrides(load_config(args.config), args)
        if args.command == "simulate":
            return _cmd_simulate(config)
        if args.command == "converge":
            return _cmd_converge(config, args.orders)
        if args.command == "compare-mc":
            return _cmd_compare(config, args.samples, args.mc_seed)
        return _cmd_oracle(config)
    except (ConfigError, OracleUnavailable) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OutputError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
