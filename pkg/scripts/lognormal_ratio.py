"""MC / one-big-jump ratio for an equicorrelated log-normal sum, across tail levels and correlations."""

import argparse

from grftails.lognormal import LogNormalPortfolio, b_for_marginal_tail, one_big_jump_approx, sum_tail_mc
from grftails.streams import Stream


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-assets", type=int, default=2)
    ap.add_argument("--rhos", type=float, nargs="+", default=[0.0, 0.3, 0.5, 0.7])
    ap.add_argument("--tails", type=float, nargs="+", default=[1e-3, 1e-6, 1e-9, 1e-12, 1e-16])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=4)
    args = ap.parse_args()

    print("rho   " + " ".join(f"{t:<9.0e}" for t in args.tails))
    for i, rho in enumerate(args.rhos):
        p = LogNormalPortfolio.equicorrelated(args.n_assets, rho)
        cells = []
        for j, tail in enumerate(args.tails):
            b = b_for_marginal_tail(p, tail)
            est = sum_tail_mc(p, b, args.n, Stream(args.seed, (i, j)))
            cells.append(est.estimate / one_big_jump_approx(p, b))
        print(f"{rho:<5g} " + " ".join(f"{r:<9.3f}" for r in cells))


if __name__ == "__main__":
    main()
