"""Command-line entry point: ``wienerchaos --suite product --seed 42``."""
from __future__ import annotations

import argparse
import os
import sys

from .report import emit_report
from .suites import SUITES, ConfigError, RunConfig, run_suite

DEFAULTS = RunConfig()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wienerchaos",
        description="Run verification suites for the Wiener chaos algebra.",
    )
    p.add_argument("--suite", choices=SUITES + ("all",), default=DEFAULTS.suite)
    p.add_argument("--dim", type=int, default=DEFAULTS.dim, help="coordinate dimension m")
    p.add_argument("--max-order", type=int, default=DEFAULTS.max_order,
                   help="largest combined chaos order in products")
    p.add_argument("--trials", type=int, default=DEFAULTS.trials)
    p.add_argument("--paths", type=int, default=DEFAULTS.paths)
    p.add_argument("--grid", type=int, default=DEFAULTS.grid, help="time steps N on [0, 1]")
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (falls back to $CHAOS_SEED, then 0)")
    p.add_argument("--tol", type=float, default=None, help="override the algebraic tolerance")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None, help="report path (default: stdout)")
    p.add_argument("--parallel", action="store_true",
                   help="evaluate Monte Carlo path chunks on a thread pool")
    p.add_argument("--no-timing", action="store_true",
                   help="record runtime_ms as 0 so reports are byte-reproducible")
    return p


def _seed(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("CHAOS_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"CHAOS_SEED must be an integer, got {env!r}") from None
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig(
            suite=args.suite, dim=args.dim, max_order=args.max_order, trials=args.trials,
            paths=args.paths, grid=args.grid, seed=_seed(args.seed), tol=args.tol,
            parallel=args.parallel,
        ).validate()
    except ConfigError as exc:
        print(f"wienerchaos: configuration error: {exc}", file=sys.stderr)
        return 2
    if args.out is not None:
        try:
            open(args.out, "a").close()
        except OSError as exc:
            print(f"wienerchaos: cannot write {args.out}: {exc}", file=sys.stderr)
            return 2

    report = run_suite(config, timing=not args.no_timing)
    text = emit_report(report, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)

    failures = report.failures()
    for case in failures:
        print(f"FAIL {case.name}: error {case.error:.3e} > {case.threshold:.3e}", file=sys.stderr)
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} {report.suite}: {len(report.cases) - len(failures)}/{len(report.cases)} cases"
          f" ({report.runtime_ms} ms)", file=sys.stderr)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
