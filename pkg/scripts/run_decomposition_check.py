#!/usr/bin/env python3
"""Martingale/potential decomposition check xi_{tN} - p t N = M + V_0.

Reports the exact and sampled Var(V_0)/N^{3/2} trend across N (should
decrease like 1/N) and the simulated martingale mean (should be 0 within
error) at one N on a budget-capped torus.

Example:
    python3 scripts/run_decomposition_check.py --N 250 500 1000 --reps 500
"""

import argparse
import json

from votertime.harness import martingale_decomposition_check


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t", type=float, default=1.0)
    ap.add_argument("--N", type=float, nargs="+", default=[250, 500, 1000])
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--sim-N", type=float, default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rep = martingale_decomposition_check(
        args.t, args.N, args.reps, args.seed, p=args.p, d=args.d, sim_N=args.sim_N
    )
    print(json.dumps(rep, indent=2, default=float))


if __name__ == "__main__":
    main()
