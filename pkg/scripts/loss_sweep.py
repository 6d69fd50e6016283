"""Fit one model under several (alpha, beta) divergences and score each fit
under every divergence on the heldout set (a small cross-evaluation table).

    python scripts/loss_sweep.py --model "ir,jr,kr->ijk" --shape 20,30,40 --ranks r=4
"""
import argparse
import numpy as np

from einsumfact import AlphaBeta, FitConfig, alpha_beta_divergence, bind, contract, fit, parse, split_mask, synth
from einsumfact.io import parse_ranks
from einsumfact.tensor import masked_mean_loss

PAIRS = [(1.0, 1.0), (1.0, 0.0), (0.5, 0.5), (1.0, -0.5), (2.0, -1.0)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", default="ir,jr,kr->ijk")
    ap.add_argument("--shape", default="20,30,40")
    ap.add_argument("--ranks", default="r=4")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scale", type=float, default=5.0)
    args = ap.parse_args()

    ms = parse(args.model)
    shape = tuple(int(d) for d in args.shape.split(","))
    ranks = parse_ranks(args.ranks)
    binding = bind(ms, shape, ranks)
    # Poisson counts shifted by one so that every divergence is defined
    y = synth(ms, binding, seed=args.seed, noise="poisson", scale=args.scale) + 1.0
    mask = split_mask(shape, 0.1, 0.05, args.seed)

    table = []
    for a, b in PAIRS:
        factors, _ = fit(y, ms, ranks, FitConfig(loss=AlphaBeta(a, b), seed=args.seed), mask)
        yhat = contract(ms, factors.factors, binding)
        table.append([masked_mean_loss(y, yhat, mask.heldout,
                                       lambda x, p, ea=ea, eb=eb: alpha_beta_divergence(x, p, ea, eb))
                      for ea, eb in PAIRS])
    table = np.array(table)
    best = table.argmin(axis=0)  # which fit scores best under each evaluation divergence

    print("fit \\ eval".ljust(14) + "".join(f"({a:g},{b:g})".rjust(12) for a, b in PAIRS))
    for row, (a, b) in enumerate(PAIRS):
        cells = "".join((f"{v:.4f}*" if best[k] == row else f"{v:.4f} ").rjust(12)
                        for k, v in enumerate(table[row]))
        print(f"({a:g},{b:g})".ljust(14) + cells)

if __name__ == "__main__":
    main()
