"""Command line: ``einsumfact {fit,evaluate,synth}``.

Exit codes: 0 success, 2 bad arguments or unparsable input, 3 data outside
the loss domain.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import sys
from pathlib import Path

import numpy as np

from .baseline import AdamConfig, fit_adam
from .einsum import bind, contract, parse, shapes
from .errors import LossDomainError, ModelStringError
from .io import (TensorFormatError, atomic_write_text, parse_ranks, read_manifest, read_tensor,
                 write_manifest, write_tensor)
from .losses import LOSS_NAMES, alpha_beta_divergence, make_loss
from .models import synth
from .solver import FitConfig, fit
from .tensor import masked_mean_loss, split_mask

EXIT_USAGE = 2
EXIT_DOMAIN = 3


class UsageError(Exception):
    """Bad flag value; ``flag`` names the offending option."""

    def __init__(self, flag, message):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_fit(sub):
    p = sub.add_parser("fit", help="fit a model string to a data tensor")
    p.add_argument("--data", required=True, help=".coo or .dtb tensor")
    p.add_argument("--model", required=True, help='model string, e.g. "ir,jr,kr->ijk"')
    p.add_argument("--ranks", default="", help="contracted index sizes, e.g. r=3,k=2")
    p.add_argument("--loss", required=True, choices=LOSS_NAMES)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--trials", type=float, help="trials per entry for --loss binomial")
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-heldout", type=float, default=0.1)
    p.add_argument("--split-val", type=float, default=0.05)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--min-rel-decrease", type=float, default=1e-6)
    p.add_argument("--val-patience", type=int, default=5)
    p.add_argument("--optimizer", choices=("mu", "adam"), default="mu")
    p.add_argument("--lr", type=float, default=0.1, help="Adam learning rate")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_fit)


def _add_evaluate(sub):
    p = sub.add_parser("evaluate", help="mean heldout loss of a fitted run")
    p.add_argument("--run", required=True, help="directory written by 'fit'")
    p.add_argument("--data", help="data tensor (default: the manifest's)")
    p.add_argument("--alpha", type=float, action="append", default=[],
                   help="extra (alpha, beta) divergence to report; pair with --beta")
    p.add_argument("--beta", type=float, action="append", default=[])
    p.set_defaults(func=cmd_evaluate)


def _add_synth(sub):
    p = sub.add_parser("synth", help="write planted data from a model string")
    p.add_argument("--model", required=True)
    p.add_argument("--shape", required=True, help="observed dims, e.g. 3,4,5")
    p.add_argument("--ranks", default="")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", choices=("none", "poisson", "bernoulli"), default="none")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output .coo or .dtb path")
    p.set_defaults(func=cmd_synth)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="einsumfact", description="Nonnegative einsum factorization")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_fit(sub)
    _add_evaluate(sub)
    _add_synth(sub)
    return parser


# helpers --------------------------------------------------------------------

def _model(text):
    try:
        return parse(text)
    except ModelStringError as err:
        raise UsageError("--model", str(err)) from None


def _ranks(text):
    try:
        return parse_ranks(text)
    except ValueError as err:
        raise UsageError("--ranks", str(err)) from None


def _read(path, flag):
    try:
        return read_tensor(path)
    except (OSError, TensorFormatError) as err:
        raise UsageError(flag, str(err)) from None


def _binding(ms, shape, ranks):
    try:
        return bind(ms, shape, ranks)
    except ModelStringError as err:
        flag = "--ranks" if "rank" in str(err) else "--data"
        raise UsageError(flag, str(err)) from None


def _loss(args):
    if args.loss == "ab" and (args.alpha is None or args.beta is None):
        raise UsageError("--alpha/--beta", "loss 'ab' needs both --alpha and --beta")
    try:
        return make_loss(args.loss, args.alpha, args.beta, args.phi, args.trials)
    except (LossDomainError, ValueError) as err:
        flag = {"negbin": "--phi", "binomial": "--trials"}.get(args.loss, "--alpha/--beta")
        raise UsageError(flag, str(err)) from None


def _none(v):
    return "none" if v is None else v


def manifest_entries(args, ms, ranks, loss, shape, n_factors) -> dict:
    """Everything needed to rerun ``fit`` bit-exactly, in a fixed order."""
    entries = {
        "model": str(ms),
        "ranks": ranks,
        "loss": args.loss,
        "alpha": _none(args.alpha),
        "beta": _none(args.beta),
        "phi": _none(args.phi),
        "trials": _none(args.trials),
        "epsilon": args.epsilon,
        "seed": args.seed,
        "split_heldout": args.split_heldout,
        "split_val": args.split_val,
        "max_iters": args.max_iters,
        "min_rel_decrease": args.min_rel_decrease,
        "val_patience": args.val_patience,
        "optimizer": args.optimizer,
        "lr": args.lr if args.optimizer == "adam" else "none",
        "data": args.data,
        "data_shape": ",".join(str(d) for d in shape),
        "factors": ",".join(f"theta_{k}.dtb" for k in range(1, n_factors + 1)),
        "trace": "trace.csv",
        "report": "report.txt",
    }
    return entries


# commands -------------------------------------------------------------------

def cmd_fit(args) -> int:
    ms = _model(args.model)
    ranks = _ranks(args.ranks)
    loss = _loss(args)
    y = _read(args.data, "--data")
    binding = _binding(ms, y.shape, ranks)
    try:
        mask = split_mask(y.shape, args.split_heldout, args.split_val, args.seed)
    except ValueError as err:
        raise UsageError("--split-heldout/--split-val", str(err)) from None
    contracted = {k: binding[k] for k in ms.contracted}
    try:
        if args.optimizer == "mu":
            cfg = FitConfig(loss=loss, max_iters=args.max_iters, min_rel_decrease=args.min_rel_decrease,
                            val_patience=args.val_patience, seed=args.seed, epsilon=args.epsilon)
        else:
            cfg = AdamConfig(loss=loss, learning_rate=args.lr, max_iters=args.max_iters,
                             min_rel_decrease=args.min_rel_decrease, val_patience=args.val_patience,
                             seed=args.seed, epsilon=args.epsilon)
    except ValueError as err:
        raise UsageError("--" + str(err).split()[0].replace("_", "-"), str(err)) from None
    runner = fit if args.optimizer == "mu" else fit_adam
    factors, report = runner(y, ms, contracted, cfg, mask)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, theta in enumerate(factors, 1):
        write_tensor(theta, out / f"theta_{k}.dtb")
    write_manifest(manifest_entries(args, ms, contracted, loss, y.shape, len(factors)),
                   out / "manifest.txt")
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "train_loss", "val_loss"])
    for it, (tr, va) in enumerate(zip(report.train_loss_trace, report.val_loss_trace), 1):
        w.writerow([it, repr(tr), repr(va)])
    atomic_write_text(out / "trace.csv", buf.getvalue())
    held = "none" if report.heldout_loss is None else repr(report.heldout_loss)
    atomic_write_text(out / "report.txt", (
        f"stop_reason={report.stop_reason.value}\n"
        f"iterations={report.iterations}\n"
        f"initial_train_loss={report.initial_train_loss!r}\n"
        f"final_train_loss={report.final_train_loss!r}\n"
        f"heldout_mean_loss={held}\n"
        f"elapsed_seconds={report.elapsed_seconds:.6f}\n"
    ))
    print(f"{report.stop_reason.value} after {report.iterations} iterations; "
          f"heldout mean loss {held}")
    return 0


def _float_or_none(v):
    return None if v == "none" else float(v)


def cmd_evaluate(args) -> int:
    run = Path(args.run)
    try:
        man = read_manifest(run / "manifest.txt")
    except OSError as err:
        raise UsageError("--run", str(err)) from None
    if len(args.alpha) != len(args.beta):
        raise UsageError("--alpha/--beta", "give --alpha and --beta the same number of times")
    ms = _model(man["model"])
    y = _read(args.data or man["data"], "--data")
    shape = tuple(int(d) for d in man["data_shape"].split(","))
    if y.shape != shape:
        raise UsageError("--data", f"data shape {y.shape} does not match manifest shape {shape}")
    binding = _binding(ms, shape, _ranks(man["ranks"]))
    factors = [_read(run / name, "--run") for name in man["factors"].split(",")]
    for theta, want in zip(factors, shapes(ms, binding)):
        if theta.shape != want:
            raise UsageError("--run", f"factor shape {theta.shape} does not match {want}")
    mask = split_mask(shape, float(man["split_heldout"]), float(man["split_val"]), int(man["seed"]))
    if not mask.heldout.any():
        print("no heldout entries")
        return 0
    yhat = contract(ms, factors, binding)
    loss = make_loss(man["loss"], _float_or_none(man["alpha"]), _float_or_none(man["beta"]),
                     _float_or_none(man["phi"]), _float_or_none(man["trials"]))
    print(f"{loss.describe()} {masked_mean_loss(y, yhat, mask.heldout, loss)!r}")
    for al, be in zip(args.alpha, args.beta):
        value = masked_mean_loss(y, np.maximum(yhat, loss.epsilon_y), mask.heldout,
                                 lambda x, p, al=al, be=be: alpha_beta_divergence(x, p, al, be))
        print(f"ab(alpha={al!r}, beta={be!r}) {value!r}")
    return 0


def cmd_synth(args) -> int:
    ms = _model(args.model)
    try:
        shape = tuple(int(d) for d in args.shape.split(","))
    except ValueError:
        raise UsageError("--shape", f"expected comma-separated ints, got {args.shape!r}") from None
    binding = _binding(ms, shape, _ranks(args.ranks))
    y = synth(ms, binding, args.seed, None if args.noise == "none" else args.noise, args.scale)
    try:
        write_tensor(y, args.out)
    except TensorFormatError as err:
        raise UsageError("--out", str(err)) from None
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"einsumfact {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except LossDomainError as err:
        print(f"einsumfact {args.command}: loss domain error: {err}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
