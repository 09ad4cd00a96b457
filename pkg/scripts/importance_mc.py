"""Monte-Carlo comparison of the loss-proportional proposal against uniform sampling.

For each random instance, estimates the mean of f by drawing one index from
q and reweighting, then compares the estimator variance with bootstrap
intervals.

    python scripts/importance_mc.py --instances 20 --trials 100000
"""

import argparse

import numpy as np

from nearfar.sampler import bootstrap_variance_interval, estimator_variance_mc, normalized_weights


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--df", type=float, default=2.0, help="Student-t degrees of freedom for f")
    ap.add_argument("--seed", type=int, default=4)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'inst':>4} {'true mean':>10} {'var uniform':>12} {'99% CI':>22} {'var q*':>10} {'99% CI':>22}")
    for inst in range(args.instances):
        f = rng.standard_t(args.df, args.n)
        uni = estimator_variance_mc(f, np.full(args.n, 1 / args.n), args.trials, seed=1000 + inst)
        opt = estimator_variance_mc(f, normalized_weights(f), args.trials, seed=2000 + inst)
        ci_u = bootstrap_variance_interval(uni.estimates, seed=3000 + inst)
        ci_o = bootstrap_variance_interval(opt.estimates, seed=4000 + inst)
        print(f"{inst:4d} {f.mean():10.4f} {uni.variance:12.4f} [{ci_u[0]:9.4f},{ci_u[1]:9.4f}] "
              f"{opt.variance:10.4f} [{ci_o[0]:9.4f},{ci_o[1]:9.4f}]")


if __name__ == "__main__":
    main()
