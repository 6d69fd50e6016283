"""Majorization surrogate for a single-factor update (testing aid).

For a current factor ``theta_t`` and a candidate ``theta`` the surrogate is

    Q(theta | theta_t) = sum_{i, r_l} w[i, r_l] * vex(y_i, yt_i * theta/theta_t)
                       + sum_i cave(y_i, yt_i) + dcave(y_i, yt_i) * (yhat_i - yt_i)

with ``yt`` the prediction at ``theta_t``, ``w`` the share of ``yt_i``
carried by the contracted indices ``r_l`` of the factor, and ``yhat`` the
prediction at ``theta``.  It upper-bounds the loss, touches it at
``theta == theta_t`` and is minimised by the multiplicative update.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import xlogy

from .einsum import ModelString, contract, infer_binding, parse
from .losses import AlphaBeta, BinomialOdds, JensenShannon, Loss, NegBinomial


@dataclass(frozen=True)
class Split:
    """Convex + concave decomposition (in the prediction) of a loss."""

    vex: Callable
    cave: Callable
    dvex: Callable
    dcave: Callable


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def _power_terms(loss: AlphaBeta):
    """(value, derivative, is_convex) for each y-dependent term, plus the constant."""
    al, be = loss.alpha, loss.beta
    case = loss.case
    if case == "generic":
        s = al + be
        return [
            (lambda x, y: y**s / (al * s), lambda x, y: y ** (s - 1) / al, (s - 1) / al >= 0),
            (lambda x, y: -(x**al) * y**be / (al * be), lambda x, y: -(x**al) * y ** (be - 1) / al,
             (1 - be) / al >= 0),
        ], lambda x: x**s / (be * s)
    if case == "beta0":
        return [
            (lambda x, y: y**al / al**2, lambda x, y: y ** (al - 1) / al, (al - 1) / al >= 0),
            (lambda x, y: -(x**al) * np.log(y) / al, lambda x, y: -(x**al) / (al * y), al > 0),
        ], lambda x: (-(x**al) + al * np.where(x > 0, x**al * np.log(np.where(x > 0, x, 1)), 0)) / al**2
    if case == "anti":
        return [
            (lambda x, y: (x / y) ** al / al**2, lambda x, y: -(x**al) * y ** (-al - 1) / al,
             (al + 1) / al >= 0),
            (lambda x, y: np.log(y) / al, lambda x, y: 1 / (al * y), al < 0),
        ], lambda x: (-1 - al * np.log(x)) / al**2
    # reverse KL: y log(y/x) - y + x is convex in y
    return [
        (lambda x, y: y * np.log(y / x) - y + x, lambda x, y: np.log(y / x), True),
    ], lambda x: np.zeros_like(x)


def convex_concave_split(loss: Loss) -> Split:
    """Split ``loss`` into convex and concave parts in its second argument."""
    if isinstance(loss, AlphaBeta):
        terms, const = _power_terms(loss)
        vex_terms = [t for t in terms if t[2]]
        cave_terms = [t for t in terms if not t[2]]

        def total(ts, k, with_const):
            def fn(x, y):
                x, y = np.asarray(x, float), np.asarray(y, float)
                out = sum((t[k](x, y) for t in ts), _zero(x, y))
                return out + const(x) if with_const else out
            return fn

        return Split(total(vex_terms, 0, True), total(cave_terms, 0, False),
                     total(vex_terms, 1, False), total(cave_terms, 1, False))
    if isinstance(loss, NegBinomial):
        phi = loss.phi
        return Split(lambda x, y: -xlogy(x, y), lambda x, y: (phi + x) * np.log(phi + y),
                     lambda x, y: -x / y, lambda x, y: (phi + x) / (phi + y))
    if isinstance(loss, BinomialOdds):
        n = loss.trials
        return Split(lambda x, y: -xlogy(x, y), lambda x, y: n * np.log1p(y),
                     lambda x, y: -x / y, lambda x, y: n / (1 + y))
    if isinstance(loss, JensenShannon):
        return Split(lambda x, y: 0.5 * (xlogy(x, x) + xlogy(y, y)),
                     lambda x, y: -xlogy((x + y) / 2, (x + y) / 2),
                     lambda x, y: 0.5 * (np.log(y) + 1),
                     lambda x, y: -0.5 * (np.log((x + y) / 2) + 1))
    raise TypeError(f"no convex-concave split known for {loss!r}")


def surrogate_Q(factors, candidate, y, ms, pos, loss: Loss, binding=None) -> float:
    """Evaluate the surrogate at ``candidate`` around the current ``factors[pos]``."""
    ms = parse(ms)
    factors = [np.asarray(f, float) for f in factors]
    y = np.asarray(y, float)
    binding = infer_binding(ms, factors, binding)
    split = convex_concave_split(loss)
    sub = ms.operands[pos]
    latent = "".join(c for c in sub if c not in ms.output)
    grid = ms.output + latent

    y_t = contract(ms, factors, binding)
    parts = contract(ModelString(ms.operands, grid), factors, binding)
    ratio = np.asarray(candidate, float) / factors[pos]
    ratio_grid = contract(ModelString((sub,), grid), [ratio], binding)
    expand = (Ellipsis,) + (np.newaxis,) * len(latent)
    weights = parts / y_t[expand]
    vex_part = np.sum(weights * split.vex(y[expand], y_t[expand] * ratio_grid))

    trial = list(factors)
    trial[pos] = np.asarray(candidate, float)
    y_hat = contract(ms, trial, binding)
    cave_part = np.sum(split.cave(y, y_t) + split.dcave(y, y_t) * (y_hat - y_t))
    return float(vex_part + cave_part)
