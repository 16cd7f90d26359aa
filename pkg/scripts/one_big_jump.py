"""Sum of per-panel exceedance probabilities over the union probability.

Covers T = [0, length] with panels of side 2 eps = 2 kappa u^(delta - 1/2).
With kappa = 1 and a unit domain the panels are wider than T at every
affordable level, so use a longer domain or a smaller kappa to see the trend.
"""

import argparse

from grftails.asymptotics import b_for_probability
from grftails.fieldsim import panel_sum_vs_union_mc, threshold_level
from grftails.kernel import sq_exp
from grftails.partition import build_cover
from grftails.streams import Stream


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--length", type=float, default=1.0)
    ap.add_argument("--kappa", type=float, default=1.0)
    ap.add_argument("--delta", type=float, default=0.1)
    ap.add_argument("--anchor", choices=["corner", "centered"], default="centered")
    ap.add_argument("--targets", type=float, nargs="+", default=[1e-4, 1e-5])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    model = sq_exp(1)
    for i, target in enumerate(args.targets):
        b = b_for_probability(model, args.length, 1.0, target)
        u = threshold_level(model, 1.0, b)
        cover = build_cover([[0.0, args.length]], u, args.kappa, args.delta, anchor=args.anchor)
        union, total = panel_sum_vs_union_mc(model, cover, 1.0, b, args.n, Stream(args.seed, (i,)))
        print(
            f"target {target:.0e}  u {u:.3f}  2eps {2 * cover.epsilon:.3f}  panels {len(cover.outer_indices)}  "
            f"union {union.estimate:.4g}  sum {total.estimate:.4g}  ratio {total.estimate / union.estimate:.3f}"
        )


if __name__ == "__main__":
    main()
