"""Relative-variance curves for two loss populations, written as CSV.

* exponential(1) losses, N=5000
* per-image losses of the default synthetic labeling run

    python scripts/efficiency_curve.py --out runs/curves
"""

import argparse
from pathlib import Path

import numpy as np

from nearfar import dataio, pipeline
from nearfar.config import PipelineConfig
from nearfar.sampler import efficiency_curve, fraction_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seed", type=int, default=42, help="synthetic run seed")
    ap.add_argument("--exp-seed", type=int, default=7)
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--step", type=float, default=0.05)
    ap.add_argument("--out", type=Path, default=Path("runs/curves"))
    args = ap.parse_args()
    grid = fraction_grid(args.step)

    exp_losses = np.random.default_rng(args.exp_seed).exponential(1.0, args.n)
    config = PipelineConfig.from_flat({"seed": args.seed})
    seqs = pipeline.simulate(config)
    records = pipeline.label_jobs(pipeline.jobs_from_simulation(seqs, config), config)
    _, syn_losses = pipeline.image_losses(records, config.sampler.aggregate)

    for name, losses in (("exponential", exp_losses), ("synthetic", syn_losses)):
        curve = efficiency_curve(losses, grid)
        dataio.write_curve(args.out / f"{name}.csv", curve.points)
        print(f"{name:12s} N={len(losses):5d}  first fraction with R>=0.90: {curve.first_reaching(0.9)}")
        for frac, m, r in curve.points[::4]:
            print(f"    {frac:4.2f}  M={m:5d}  R={r:.4f}")


if __name__ == "__main__":
    main()
