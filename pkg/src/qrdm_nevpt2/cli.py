"""Command-line entry point: ``qrdm-nevpt2 {run,plan,validate,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import GAMMA4_MODES, MEASUREMENT_MODES, STATE_PREP_MODES, RunConfig
from .pipeline import WORKERS_ENV, atomic_write, load_results, plan_report, report, run_pipeline
from .validation import ConfigError


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output-dir", help="override the configured output directory")
    p.add_argument("--state-prep", choices=STATE_PREP_MODES)
    p.add_argument("--measurement", choices=MEASUREMENT_MODES)
    p.add_argument("--gamma4", choices=GAMMA4_MODES)
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--pmsv", action=argparse.BooleanOptionalAction, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrdm-nevpt2",
        description="SC-NEVPT2 from measured reduced density matrices.",
        epilog=f"Set {WORKERS_ENV} to run geometry points in parallel.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline for every geometry point")
    run.add_argument("config", type=Path)
    _add_overrides(run)

    plan = sub.add_parser("plan", help="write the measurement-circuit count table")
    plan.add_argument("config", type=Path)
    plan.add_argument("--output", type=Path, help="CSV path (default: <output_dir>/<name>_plan.csv)")
    _add_overrides(plan)

    val = sub.add_parser("validate", help="check a configuration without running it")
    val.add_argument("config", type=Path)
    _add_overrides(val)

    rep = sub.add_parser("report", help="summarize per-point results in a directory")
    rep.add_argument("directory", type=Path)
    rep.add_argument("--format", choices=("table", "csv", "json", "dat"), default="table")
    return parser


def _load(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    cfg = cfg.with_overrides(output_dir=args.output_dir, state_prep=args.state_prep,
                             measurement=args.measurement, gamma4=args.gamma4, shots=args.shots,
                             seed=args.seed, pmsv=args.pmsv)
    problems = cfg.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            cfg = _load(args)
            print(f"{args.config}: ok ({len(cfg.points)} points)")
            return 0
        if args.command == "run":
            cfg = _load(args)
            results = run_pipeline(cfg)
            sys.stdout.write(report(results, "table").decode())
            failed = [p.label for p in results if p.status != "ok"]
            if failed:
                print(f"failed points: {failed}", file=sys.stderr)
                return 1
            return 0
        if args.command == "plan":
            cfg = _load(args)
            data = plan_report(cfg)
            dest = args.output or cfg.output_dir / f"{cfg.name}_plan.csv"
            atomic_write(dest, data)
            sys.stdout.write(data.decode())
            return 0
        if args.command == "report":
            results = load_results(args.directory)
            if not results:
                print(f"no point files in {args.directory}", file=sys.stderr)
                return 1
            sys.stdout.write(report(results, args.format).decode())
            return 0
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
