"""Command line front end: ``plss solve`` and ``plss bench``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

from .common import ConfigError
from .harness import PRESETS, SOLVERS, ProblemError, ProblemSpec, load_manifest, run_benchmark, run_problem


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plss", description="Projected linear systems solvers and benchmark harness.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one system")
    s.add_argument("--matrix", required=True, help="Matrix Market coordinate file")
    rhs = s.add_mutually_exclusive_group()
    rhs.add_argument("--rhs", help="right-hand side file (Matrix Market array or plain values)")
    rhs.add_argument("--rhs-mode", choices=("spike",), default="spike",
                     help="spike: x_true = (10, 1, ..., 1), b = A x_true")
    s.add_argument("--x0", help="starting point file (default zero)")
    s.add_argument("--solver", required=True, choices=SOLVERS)
    s.add_argument("--tol", type=float)
    s.add_argument("--tol-mode", choices=("rel", "abs"))
    caps = s.add_mutually_exclusive_group()
    caps.add_argument("--max-iters", type=int)
    caps.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--weight", choices=("identity", "colnorm"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sketch-size", type=int, help="randproj block size r (default 10)")
    s.add_argument("--sketch", default="residual",
                   choices=("residual", "identity", "range", "gaussian"),
                   help="sketch columns for proj-* solvers")
    s.add_argument("--trace", help="write per-iteration residual CSV here")
    s.add_argument("--report", help="write the JSON report here (default: stdout)")

    b = sub.add_parser("bench", help="run a benchmark manifest")
    b.add_argument("--manifest", required=True)
    b.add_argument("--jobs", type=int)
    b.add_argument("--out", help="output directory (overrides the manifest)")
    return ap


def _solve(args) -> int:
    spec = ProblemSpec(
        matrix=args.matrix,
        solver=args.solver,
        rhs=args.rhs,
        rhs_mode="from_file" if args.rhs else "synthetic_spike",
        x0=args.x0,
        tol=args.tol,
        tol_mode={"rel": "relative", "abs": "absolute"}.get(args.tol_mode),
        max_iters=args.max_iters,
        preset=args.preset,
        weight={"colnorm": "column_norm"}.get(args.weight, args.weight),
        seed=args.seed,
        sketch_size=args.sketch_size,
        sketch=args.sketch,
        trace=args.trace,
        report=args.report,
    )
    result = run_problem(spec)
    if not args.report:
        d = result.to_dict()
        d.pop("trace", None)
        json.dump(d, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return 0


def _bench(args) -> int:
    manifest = load_manifest(args.manifest, output_dir=args.out, jobs=args.jobs)
    rows = run_benchmark(manifest)
    for row in rows:
        print(f"{row['problem']:>20} {row['solver']:>16} {row['status']:>22} it={row['iterations']}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _solve(args) if args.command == "solve" else _bench(args)
    except (ConfigError, ProblemError) as exc:
        print(f"plss: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
