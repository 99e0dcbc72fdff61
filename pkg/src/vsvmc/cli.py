"""Command line entry point.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import warnings

from . import harness
from .config import ExperimentConfig, check, load_config
from .errors import NumericalFailure, ValidationError
from .estimators import ESTIMATOR_IDS

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file (defaults to the reference setup)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    common.add_argument("--grid", type=int, nargs="+", help="number of time steps (several for convergence)")
    common.add_argument("--estimator", action="append", choices=ESTIMATOR_IDS,
                        help="estimator id; repeat for several")
    common.add_argument("--out", help="write the CSV here (default: config output, else stdout)")
    common.add_argument("--threads", type=int, help=f"worker threads (env {harness.THREADS_ENV})")
    common.add_argument("--no-timing", action="store_true", help="write runtime_ms as 0")

    parser = argparse.ArgumentParser(prog="vsvmc", description="Sandwiched Volterra volatility Monte Carlo")
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("price", parents=[common], help="price the configured payoff")
    conv = sub.add_parser("convergence", parents=[common], help="strong convergence study")
    conv.add_argument("--ref", type=int, default=4096, help="reference grid size")
    sub.add_parser("table1", parents=[common], help="physical-measure table (rep2, cond-gauss)")
    sub.add_parser("table2", parents=[common], help="minimal martingale measure table")
    sub.add_parser("paths", parents=[common], help="dump raw Z, Y, X paths")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.paths is not None:
        changes["paths"] = args.paths
    if args.grid and args.verb in ("price", "paths"):
        changes["steps"] = args.grid[0]
    if args.estimator:
        changes["estimators"] = tuple(args.estimator)
    if args.no_timing:
        changes["timing"] = False
    return cfg.replace(**changes) if changes else cfg


def _write(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(args) -> int:
    cfg = _config(args)
    args.out = args.out or cfg.output or None
    if args.verb == "price":
        rows = harness.run_pricing(check(cfg), args.threads)
        _write(harness.emit_report(rows), args.out)
    elif args.verb == "convergence":
        steps = args.grid or [8, 16, 32, 64, 128, 256, 512]
        paths = args.paths if args.paths is not None else 500
        report = harness.run_convergence_study(cfg, steps, args.ref, paths, args.threads)
        _write(harness.convergence_csv(report), args.out)
    elif args.verb in ("table1", "table2"):
        which = int(args.verb[-1])
        overrides = {k: getattr(cfg, k) for k in ("seed", "timing", "chunk_size")}
        if args.paths is not None:
            overrides["paths"] = args.paths
        steps = tuple(args.grid) if args.grid else harness.TABLE_STEPS
        rows = harness.reproduce_table(which, overrides, steps=steps, threads=args.threads)
        _write(harness.emit_report(rows), args.out)
    else:
        count = args.paths if args.paths is not None else 5
        _write(harness.dump_paths(cfg.replace(paths=count), count), args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
