"""``hessdisc`` command line: run a convergence study and print its table.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 tolerance failure under ``--check``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4


def build_parser():
    p = argparse.ArgumentParser(
        prog="hessdisc",
        description="Convergence study for a distributed control problem of the "
                    "biharmonic equation discretised by a Hessian scheme.")
    p.add_argument("--scheme", required=True, choices=("fvm", "adini", "gr"))
    p.add_argument("--problem", default="ex1", choices=("ex1", "ex2"),
                   help="ex1: unit square, smooth; ex2: L-shaped domain, singular")
    p.add_argument("--levels", type=int, help="number of refinement levels (default: up to n=64)")
    p.add_argument("--alpha", type=float, help="regularisation parameter")
    p.add_argument("--lo", type=float, help="lower control bound")
    p.add_argument("--hi", type=float, help="upper control bound")
    p.add_argument("--mesh", default="builtin",
                   help="'builtin', 'fixtures' (shipped triangular family) or a glob of mesh files")
    p.add_argument("--theta", type=float, help="stabilisation factor (gr only)")
    p.add_argument("--out", help="write the table here and metadata to OUT.meta.json")
    p.add_argument("--format", default="csv", choices=("csv", "markdown"))
    p.add_argument("--check", action="store_true",
                   help="enforce the acceptance tolerances for this study")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    from . import configure_threads
    configure_threads()
    from .acceptance import run_checks
    from .analysis import emit_table
    from .study import ConfigError, RunConfig, run_study

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = RunConfig(scheme=args.scheme, problem=args.problem, levels=args.levels,
                    alpha=args.alpha, lo=args.lo, hi=args.hi, mesh=args.mesh, theta=args.theta)
    try:
        result = run_study(cfg)
    except ConfigError as exc:
        print(f"hessdisc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    text = emit_table(result.table, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        with open(args.out + ".meta.json", "w") as fh:
            json.dump(result.metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        sys.stdout.write(text)

    if result.failure is not None:
        print(f"hessdisc: solver failure, table incomplete: {result.failure}", file=sys.stderr)
        return EXIT_SOLVER
    if args.check:
        checks = run_checks(cfg, result)
        for c in checks:
            print(c.line(), file=sys.stderr)
        if not all(c.ok for c in checks):
            return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
