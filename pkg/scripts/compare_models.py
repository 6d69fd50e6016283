"""Heldout loss of the planted ride-count structure against a same-size CP.

    python scripts/compare_models.py --seeds 5 --scale 1.0 > compare.csv
"""
import argparse
import csv
import sys

from einsumfact.experiments import ComparisonSetup, compare_models


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="multiplies the planted Poisson means")
    ap.add_argument("--R", type=int, default=4)
    ap.add_argument("--K", type=int, default=3)
    ap.add_argument("--shape", default="6,7,24,20,20")
    ap.add_argument("--max-iters", type=int, default=5000)
    args = ap.parse_args()

    setup = ComparisonSetup(shape=tuple(int(d) for d in args.shape.split(",")), R=args.R, K=args.K,
                            scale=args.scale, max_iters=args.max_iters)
    out = csv.writer(sys.stdout)
    out.writerow(["seed", "model", "heldout_mean_loss", "iterations", "stop_reason", "seconds"])
    wins = 0
    for seed in range(args.seeds):
        res = compare_models(setup, seed)
        for name, rep in (("custom", res.custom), (f"cp_R{res.cp_rank}", res.cp)):
            out.writerow([seed, name, repr(rep.heldout_loss), rep.iterations, rep.stop_reason.value,
                          f"{rep.elapsed_seconds:.2f}"])
        sys.stdout.flush()
        wins += res.custom_wins
    print(f"# custom model has the lower heldout loss in {wins}/{args.seeds} seeds", file=sys.stderr)


if __name__ == "__main__":
    main()
