"""Command line entry point: ``sublinlab run <config>`` and ``sublinlab list-kinds``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ScenarioError
from .scenarios import KINDS, PARALLEL_ENV, emit, parse_scenarios, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sublinlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the scenarios of a JSON config file")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out", type=Path, default=Path("."),
                       help="output directory (default: current directory)")
    p_run.add_argument("--format", choices=("csv", "json"), default="csv")
    p_run.add_argument("--parallel", type=int, default=None,
                       help=f"worker processes (default: ${PARALLEL_ENV} or 1)")
    p_run.add_argument("--seed", type=int, default=0,
                       help="seed for scenarios that do not set their own")

    sub.add_parser("list-kinds", help="list scenario kinds")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-kinds":
        for kind, text in KINDS.items():
            print(f"{kind:15s} {text}")
        return 0

    try:
        scenarios = parse_scenarios(args.config)
    except (FileNotFoundError, ScenarioError) as exc:
        print(f"sublinlab: {exc}", file=sys.stderr)
        return 2
    if args.seed < 0 or args.seed >= 2 ** 64:
        print("sublinlab: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.parallel is not None and args.parallel < 1:
        print("sublinlab: --parallel must be at least 1", file=sys.stderr)
        return 2
    reports = run(scenarios, args.parallel, args.seed)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        path = emit(reports, args.format, args.out / f"report.{args.format}")
    except OSError as exc:
        print(f"sublinlab: cannot write report: {exc}", file=sys.stderr)
        return 2
    for r in reports:
        line = f"{r.status:5s} {r.scenario_id} ({r.kind})"
        if r.message:
            line += f": {r.message}"
        print(line)
    print(f"wrote {path}")
    return 0 if all(r.status == "pass" for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
