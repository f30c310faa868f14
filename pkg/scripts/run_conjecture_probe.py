#!/usr/bin/env python3
"""d=2 conjecture probe (all outputs labeled CONJECTURE).

Estimates the d=2 diagonal covariance ratio against C_2^2 cov_vartheta and
(log t) P(tau > t) for neighbouring dual walkers against pi.  Convergence is
logarithmic, so expect visible trends rather than tight agreement at desk
scales.

Example:
    python3 scripts/run_conjecture_probe.py --N 1000 --reps 500
"""

import argparse
import json

from votertime.harness import ExperimentConfig, conjecture_probe_d2


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--N", type=float, nargs="+", default=[1000])
    ap.add_argument("--grid", type=float, nargs="+", default=[0.25, 0.5, 1.0])
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--survival-reps", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = ExperimentConfig(
        d=2, p=args.p, T=max(args.grid), N_list=args.N, grid=args.grid,
        reps=args.reps, master_seed=args.seed, engine="dual",
    )
    rep = conjecture_probe_d2(cfg, survival_reps=args.survival_reps)
    print(json.dumps(
        {
            "label": rep["label"],
            "diag_ratio": rep["diag_ratio"],
            "survival": rep["survival"],
            "pi": rep["pi"],
        },
        indent=2,
        default=float,
    ))


if __name__ == "__main__":
    main()
