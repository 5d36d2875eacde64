"""Command-line front end: allocate, simulate, compare, and oracle runs.

Exit codes: 0 success, 2 configuration error, 3 infeasible instance,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from typing import Optional

from .allocation import STRATEGIES, exhaustive_oracle, run_strategy
from .cli_io import (
    ConfigError,
    build_scenario,
    emit_report,
    load_config,
    table_from_allocation,
    table_from_comparison,
    table_from_session,
)
from .core_model import InfeasibleError
from .simulator import compare_strategies, run_session

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tile360",
        description="QoE-driven tile rate allocation and session simulation "
                    "for 360-degree video over LTE + multi-AP Wi-Fi.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("allocate", "solve one instance with the configured strategy"),
        ("simulate", "replay a trace-driven session"),
        ("compare", "run several strategies over the same session"),
        ("oracle", "exhaustive association search on a small instance"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML scenario config")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--strategy", default=None,
                       help="strategy name (comma-separated list for compare)")
        p.add_argument("--seed", type=int, default=None,
                       help="seed override (unsigned integer)")
        if name == "oracle":
            p.add_argument("--cap", type=int, default=None,
                           help="association-enumeration ceiling")
    return parser


def _read_config(path: str):
    try:
        with open(path) as fh:
            return load_config(fh.read())
    except OSError as exc:
        raise _IoFailure(f"cannot read config: {exc}") from exc


class _IoFailure(Exception):
    pass


def _out_path(args, doc) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, f"{doc.name}_{args.command}.{args.format}")


def _require_seed(args, doc):
    if args.seed is None and doc.seed is None:
        raise ConfigError("a seed is required for reproducible runs "
                          "(set 'seed' in the config or pass --seed)", "seed")


def _run(args) -> int:
    doc = _read_config(args.config)
    strategy = args.strategy or doc.strategy

    if args.command == "allocate":
        scenario = build_scenario(doc, args.seed)
        if strategy not in STRATEGIES and strategy != "one_fov":
            raise ConfigError(f"unknown strategy {strategy!r}", "strategy")
        alloc = run_strategy(strategy, scenario.instance, doc.solver)
        table = table_from_allocation(alloc, scenario.instance, doc.name, strategy)
    elif args.command == "oracle":
        scenario = build_scenario(doc, args.seed)
        params = doc.solver
        if args.cap is not None:
            params = replace(params, oracle_cap=args.cap)
        alloc = exhaustive_oracle(scenario.instance, params)
        table = table_from_allocation(alloc, scenario.instance, doc.name, "exhaustive")
    elif args.command == "simulate":
        _require_seed(args, doc)
        scenario = build_scenario(doc, args.seed)
        scenario = replace(scenario, strategy=strategy)
        report = run_session(scenario)
        table = table_from_session(report, doc.name)
    else:  # compare
        _require_seed(args, doc)
        names = (tuple(s.strip() for s in args.strategy.split(","))
                 if args.strategy else doc.strategies)
        if len(names) < 2:
            raise ConfigError("compare needs at least two strategies "
                              "(config 'strategies' or --strategy a,b)",
                              "strategies")
        scenario = build_scenario(doc, args.seed)
        report = compare_strategies(scenario, names)
        table = table_from_comparison(report, doc.name)

    try:
        path = emit_report(table, args.format, _out_path(args, doc))
    except OSError as exc:
        raise _IoFailure(f"cannot write report: {exc}") from exc
    print(path)
    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible instance: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _IoFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
