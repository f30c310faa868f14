#!/usr/bin/env python3
"""Variance-scaling sweep: fitted log-log slope of Var(xi_N - pN) vs N.

Expected slopes: 1.5 for d=3, 1.0 for d>=5; for d=4 the report also prints
Var/(N log N), which should be roughly constant.

Example:
    python3 scripts/run_variance_sweep.py --d 3 --N 250 500 1000 2000 --reps 1000
"""

import argparse
import json

from votertime.harness import variance_scaling_sweep


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--N", type=float, nargs="+", default=[250, 500, 1000, 2000])
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--engine", default="dual_integral",
                    choices=["dual_integral", "torus"])
    args = ap.parse_args()

    report = variance_scaling_sweep(
        args.d, args.p, args.N, args.reps, args.seed, engine=args.engine
    )
    print(json.dumps(report, indent=2, default=float))


if __name__ == "__main__":
    main()
