"""Gradient baseline: Adam on log-parameters.

Parameters are stored as ``omega = log(theta)`` so positivity holds by
construction.  Gradients are analytic: the gradient of the masked loss with
respect to factor ``l`` is the swapped contraction of ``dL/dyhat``, and the
chain rule through ``exp`` multiplies it by ``theta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .einsum import contract, parse, swap
from .losses import AlphaBeta, Loss
from .solver import FactorSet, FitReport, _Monitor, _totals, heldout_loss, init_uniform, prepare
from .tensor import Mask

LEARNING_RATES = (0.01, 0.05, 0.1, 0.3, 0.5, 1.0)


@dataclass
class AdamConfig:
    loss: Loss = field(default_factory=lambda: AlphaBeta(1.0, 0.0))
    learning_rate: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    stabilizer: float = 1e-8
    max_iters: int = 5000
    min_rel_decrease: float = 1e-6
    val_patience: int = 5
    seed: int = 0
    epsilon: float = 1e-12

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


def _masked_dloss(y, train, yhat, loss):
    if train is None:
        return loss.dloss_dy(y, yhat)
    return np.where(train, loss.dloss_dy(np.where(train, y, 1.0), yhat), 0.0)


def loss_gradient(y, train, factors, ms, pos, loss: Loss, binding=None, yhat=None) -> np.ndarray:
    """Gradient of the summed loss over ``train`` entries w.r.t. factor ``pos``.

    ``train`` is a boolean array or ``None`` (every entry counts).
    """
    ms = parse(ms)
    ops = list(factors)
    if yhat is None:
        yhat = contract(ms, ops, binding)
    ops[pos] = _masked_dloss(y, train, yhat, loss)
    return contract(swap(ms, pos), ops, binding)


def fit_adam(y, ms, ranks=None, config: AdamConfig | None = None, mask: Mask | None = None,
             init: FactorSet | None = None):
    """Minimise the same masked loss as :func:`einsumfact.solver.fit` with Adam.

    The initial point is the same uniform draw the multiplicative solver
    uses for ``config.seed``.  A non-finite training loss stops the run with
    reason ``diverged``.
    """
    config = config or AdamConfig()
    loss = config.loss
    y, ms, binding, mask = prepare(y, ms, ranks, mask, loss)
    start = init.copy() if init is not None else init_uniform(ms, binding, config.seed, config.epsilon)
    omega = [np.log(f) for f in start]

    train = mask.train
    full = bool(train.all())
    train_sel = None if full else train
    val = mask.validation
    has_val = bool(val.any())
    y_fit = y if full else np.where(mask.heldout, 1.0, y)
    swapped = [swap(ms, pos) for pos in range(ms.n_operands)]

    m1 = [np.zeros_like(w) for w in omega]
    m2 = [np.zeros_like(w) for w in omega]
    b1, b2, lr, stab = config.beta1, config.beta2, config.learning_rate, config.stabilizer

    report = FitReport(n_train=int(train.sum()), n_validation=int(val.sum()),
                       n_heldout=int(mask.heldout.sum()))
    theta = [np.exp(w) for w in omega]
    yhat = contract(ms, theta, binding)
    report.initial_train_loss = _totals(loss.loss(y_fit, yhat), train_sel, None)[0]
    monitor = _Monitor(report, config.min_rel_decrease, config.val_patience, has_val)

    reason = None
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, config.max_iters + 1):
            dy = _masked_dloss(y_fit, train_sel, yhat, loss)
            grads = []
            for pos in range(ms.n_operands):
                ops = list(theta)
                ops[pos] = dy
                grads.append(theta[pos] * contract(swapped[pos], ops, binding))
            for pos, grad in enumerate(grads):
                m1[pos] = b1 * m1[pos] + (1 - b1) * grad
                m2[pos] = b2 * m2[pos] + (1 - b2) * grad * grad
                step = (m1[pos] / (1 - b1**t)) / (np.sqrt(m2[pos] / (1 - b2**t)) + stab)
                omega[pos] = omega[pos] - lr * step
            theta = [np.exp(w) for w in omega]
            yhat = contract(ms, theta, binding)
            train_loss, val_loss = _totals(loss.loss(y_fit, yhat), train_sel, val if has_val else None)
            reason = monitor.record(train_loss, val_loss)
            if reason is not None:
                break
    monitor.finish(reason)
    if np.all(np.isfinite(yhat)):
        report.heldout_loss = heldout_loss(y, yhat, mask, loss)
    return FactorSet(theta, config.epsilon), report
