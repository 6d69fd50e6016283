"""Multiplicative-update fitting of einsum factorizations.

One sweep updates every factor in turn::

    Yhat = contract(model, factors)
    A    = contract(swap(model, l), factors with slot l := a(Y, Yhat))
    B    = contract(swap(model, l), factors with slot l := b(Y, Yhat))
    factor_l = max(eps, factor_l * g_inverse(A / B))

Missing data is handled by zeroing ``a`` and ``b`` outside the training
entries, so the value of ``Y`` there is never read.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .einsum import bind, contract, parse, shapes, swap
from .errors import LossDomainError
from .losses import AlphaBeta, Loss
from .tensor import HELDOUT, Mask, as_tensor, masked_mean_loss

# both |A| and B below this: the coordinate receives no signal and stays put
DEAD_RATIO = 1e-300


class StopReason(str, enum.Enum):
    PATIENCE = "patience"
    PLATEAU = "plateau"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"


@dataclass
class FactorSet:
    """Parameter tensors, one per operand of the model string."""

    factors: list[np.ndarray]
    epsilon: float = 1e-12

    def __iter__(self):
        return iter(self.factors)

    def __len__(self):
        return len(self.factors)

    def __getitem__(self, pos):
        return self.factors[pos]

    def copy(self) -> "FactorSet":
        return FactorSet([f.copy() for f in self.factors], self.epsilon)

    @property
    def n_params(self) -> int:
        return sum(f.size for f in self.factors)


@dataclass
class FitConfig:
    """Stopping rules and numerics for :func:`fit`.

    Setting ``min_rel_decrease`` to 0 disables the plateau rule.
    """

    loss: Loss = field(default_factory=lambda: AlphaBeta(1.0, 0.0))
    max_iters: int = 5000
    min_rel_decrease: float = 1e-6
    val_patience: int = 5
    seed: int = 0
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.min_rel_decrease < 0:
            raise ValueError("min_rel_decrease must be >= 0")
        if self.val_patience < 1:
            raise ValueError("val_patience must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass
class FitReport:
    train_loss_trace: list[float] = field(default_factory=list)
    val_loss_trace: list[float] = field(default_factory=list)
    time_trace: list[float] = field(default_factory=list)
    stop_reason: StopReason = StopReason.MAX_ITERS
    iterations: int = 0
    elapsed_seconds: float = 0.0
    initial_train_loss: float = float("nan")
    heldout_loss: float | None = None
    n_train: int = 0
    n_validation: int = 0
    n_heldout: int = 0

    @property
    def final_train_loss(self) -> float:
        return self.train_loss_trace[-1] if self.train_loss_trace else self.initial_train_loss

    @property
    def mean_train_loss(self) -> float:
        return self.final_train_loss / self.n_train


def init_uniform(ms, binding, seed: int = 0, epsilon: float = 1e-12) -> FactorSet:
    """Draw every parameter from U(0, 1), then clamp below at ``epsilon``."""
    rng = np.random.default_rng([0x1417, int(seed)])
    factors = [np.maximum(rng.random(shape), epsilon) for shape in shapes(ms, binding)]
    return FactorSet(factors, epsilon)


def update_factor(y, train, factors, ms, pos, loss: Loss, epsilon=1e-12,
                  yhat=None, binding=None, swapped=None) -> np.ndarray:
    """Return the multiplicatively updated factor ``pos`` (0-based).

    ``train`` is a boolean array marking the entries that enter the loss, or
    ``None`` for all of them.  ``yhat``/``swapped`` may be passed to reuse a
    fresh prediction and a precomputed swapped string.
    """
    ms = parse(ms)
    factors = list(factors)
    if yhat is None:
        yhat = contract(ms, factors, binding)
    if train is None:
        a, b = loss.ab(y, yhat)
    else:
        a, b = loss.ab(np.where(train, y, 1.0), yhat)
        a = np.where(train, a, 0.0)
        b = np.where(train, b, 0.0)
    s = swapped if swapped is not None else swap(ms, pos)
    ops = list(factors)
    ops[pos] = a
    A = contract(s, ops, binding)
    ops[pos] = np.broadcast_to(b, yhat.shape)
    B = contract(s, ops, binding)

    dead = (np.abs(A) < DEAD_RATIO) & (B < DEAD_RATIO)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = A / np.where(dead, 1.0, B)
    if not loss.log_link:
        ratio = np.where(dead, 1.0, ratio)
    else:
        ratio = np.where(dead, 0.0, ratio)
    with np.errstate(over="ignore"):
        mult = loss.g_inverse(ratio)
    # infinite multipliers only arise from underflowed sums; leave those cells alone
    mult = np.where(dead | ~np.isfinite(mult), 1.0, mult)
    return np.maximum(epsilon, factors[pos] * mult)


def _totals(values, train, val):
    """(train total, validation total); ``train=None`` means every entry."""
    total = float(np.sum(values if train is None else values[train]))
    return total, float(np.sum(values[val])) if val is not None else float("nan")


class _Monitor:
    """Shared bookkeeping for the stopping rules of both optimizers."""

    def __init__(self, report: FitReport, min_rel_decrease, val_patience, has_val):
        self.report = report
        self.tol = min_rel_decrease
        self.patience = val_patience
        self.has_val = has_val
        self.rising = 0
        self.start = time.perf_counter()

    def record(self, train_loss, val_loss) -> StopReason | None:
        r = self.report
        prev = r.final_train_loss
        prev_val = r.val_loss_trace[-1] if r.val_loss_trace else None
        r.train_loss_trace.append(train_loss)
        r.val_loss_trace.append(val_loss)
        r.time_trace.append(time.perf_counter() - self.start)
        r.iterations += 1
        if not np.isfinite(train_loss):
            return StopReason.DIVERGED
        if self.has_val and prev_val is not None:
            self.rising = self.rising + 1 if val_loss > prev_val else 0
            if self.rising >= self.patience:
                return StopReason.PATIENCE
        if abs(prev - train_loss) < self.tol * abs(prev):
            return StopReason.PLATEAU
        return None

    def finish(self, reason):
        self.report.stop_reason = reason or StopReason.MAX_ITERS
        self.report.elapsed_seconds = time.perf_counter() - self.start


def prepare(y, ms, ranks, mask, loss):
    """Validate inputs shared by the optimizers; returns (y, ms, binding, mask)."""
    ms = parse(ms)
    y = as_tensor(y, nonnegative=True)
    binding = bind(ms, y.shape, ranks)
    mask = Mask.all_train(y.shape) if mask is None else mask
    if mask.shape != y.shape:
        raise ValueError(f"mask shape {mask.shape} does not match data shape {y.shape}")
    if not mask.train.any():
        raise ValueError("mask selects no training entries")
    try:
        loss.check_data(y, where=mask.labels != HELDOUT)
    except LossDomainError as err:
        raise LossDomainError(f"{err} [loss {loss.describe()}]") from None
    return y, ms, binding, mask


def fit(y, ms, ranks=None, config: FitConfig | None = None, mask: Mask | None = None,
        init: FactorSet | None = None):
    """Fit ``ms`` to ``y`` by multiplicative updates.

    Parameters
    ----------
    y : array_like
        Nonnegative data tensor whose modes follow the output subscripts.
    ms : str or ModelString
        Model string, e.g. ``"ir,jr,kr->ijk"``.
    ranks : dict
        Dimension of every contracted index, e.g. ``{"r": 5}``.
    config : FitConfig
    mask : Mask, optional
        Train/validation/heldout labels; only train entries drive updates,
        validation entries feed early stopping, heldout entries are scored
        once at the end.
    init : FactorSet, optional
        Starting point; defaults to :func:`init_uniform` with ``config.seed``.

    Returns
    -------
    (FactorSet, FitReport)
    """
    config = config or FitConfig()
    loss = config.loss
    y, ms, binding, mask = prepare(y, ms, ranks, mask, loss)
    factors = init.copy() if init is not None else init_uniform(ms, binding, config.seed, config.epsilon)
    eps = config.epsilon

    train = mask.train
    full = bool(train.all())
    train_sel = None if full else train
    val = mask.validation
    has_val = bool(val.any())
    # heldout entries are replaced by a neutral value so they are never read
    y_fit = y if full else np.where(mask.heldout, 1.0, y)

    swapped = [swap(ms, pos) for pos in range(ms.n_operands)]
    report = FitReport(n_train=int(train.sum()), n_validation=int(val.sum()),
                       n_heldout=int(mask.heldout.sum()))
    yhat = contract(ms, factors.factors, binding)
    report.initial_train_loss = _totals(loss.loss(y_fit, yhat), train_sel, None)[0]
    monitor = _Monitor(report, config.min_rel_decrease, config.val_patience, has_val)

    reason = None
    for _ in range(config.max_iters):
        for pos in range(ms.n_operands):
            if pos > 0:
                yhat = contract(ms, factors.factors, binding)
            factors.factors[pos] = update_factor(
                y_fit, train_sel, factors.factors, ms, pos, loss, eps,
                yhat=yhat, binding=binding, swapped=swapped[pos],
            )
        yhat = contract(ms, factors.factors, binding)
        train_loss, val_loss = _totals(loss.loss(y_fit, yhat), train_sel, val if has_val else None)
        reason = monitor.record(train_loss, val_loss)
        if reason is not None:
            break
    monitor.finish(reason)
    report.heldout_loss = heldout_loss(y, yhat, mask, loss)
    return factors, report


def heldout_loss(y, yhat, mask: Mask, loss) -> float | None:
    """Mean loss over the heldout entries, or ``None`` if there are none."""
    if not mask.heldout.any():
        return None
    return masked_mean_loss(y, yhat, mask.heldout, loss)
