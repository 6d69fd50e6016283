"""Loss-versus-time traces of multiplicative updates and Adam on the same problem.

Writes one CSV row per iteration per optimizer so the curves can be plotted
with any tool, and prints the time each method needs to reach a shared loss.

    python scripts/mu_vs_adam.py --seeds 1 > traces.csv
"""
import argparse
import csv
import sys

from einsumfact.experiments import ComparisonSetup, compare_speed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=1)
    ap.add_argument("--scale", type=float, default=1.0)
    ap.add_argument("--lr", type=float, nargs="+", default=[0.1, 0.3, 0.5])
    ap.add_argument("--max-iters", type=int, default=5000)
    args = ap.parse_args()

    setup = ComparisonSetup(scale=args.scale, max_iters=args.max_iters)
    out = csv.writer(sys.stdout)
    out.writerow(["seed", "optimizer", "iteration", "seconds", "train_loss", "val_loss"])
    for seed in range(args.seeds):
        res = compare_speed(setup, seed, tuple(args.lr))
        runs = [("mu", res.mu)] + [(f"adam_lr{lr}", rep) for lr, rep in res.adam.items()]
        for name, rep in runs:
            for it, (t, tr, va) in enumerate(zip(rep.time_trace, rep.train_loss_trace, rep.val_loss_trace), 1):
                out.writerow([seed, name, it, f"{t:.4f}", repr(tr), repr(va)])
        print(f"# seed {seed}: target {res.target:.2f}; MU {res.mu_seconds:.2f}s, best Adam "
              f"(lr={res.best_lr}) {res.adam_seconds:.2f}s, ratio {res.speedup:.2f}", file=sys.stderr)


if __name__ == "__main__":
    main()
