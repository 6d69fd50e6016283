import numpy as np
import pytest

from einsumfact import (AdamConfig, AlphaBeta, JensenShannon, NegBinomial, StopReason, contract,
                        fit_adam, init_uniform, loss_gradient, split_mask, swap)
from einsumfact.einsum import bind
from einsumfact.models import planted_factors, synth

from conftest import rel_err

CP3 = "ir,jr,kr->ijk"


def _setup(seed=0, shape=(3, 4, 5), rank=2):
    binding = bind(CP3, shape, {"r": rank})
    rng = np.random.default_rng(seed)
    y = rng.uniform(0.2, 2.0, shape)
    factors = [rng.uniform(0.2, 1.0, s) for s in [(shape[0], rank), (shape[1], rank), (shape[2], rank)]]
    return y, factors, binding


def _masked_total(y, train, factors, loss):
    return float(np.sum(loss.loss(np.where(train, y, 1.0), contract(CP3, factors))[train]))


def _fd_gradient(y, train, factors, pos, loss, h=1e-6):
    grad = np.zeros_like(factors[pos])
    for idx in np.ndindex(grad.shape):
        up = [f.copy() for f in factors]
        dn = [f.copy() for f in factors]
        step = h * max(1.0, abs(factors[pos][idx]))
        up[pos][idx] += step
        dn[pos][idx] -= step
        grad[idx] = (_masked_total(y, train, up, loss) - _masked_total(y, train, dn, loss)) / (2 * step)
    return grad


@pytest.mark.parametrize("loss", [AlphaBeta(1, 1), AlphaBeta(1, 0), AlphaBeta(0.5, 0.5),
                                  AlphaBeta(2, -1), NegBinomial(1.0), JensenShannon()],
                         ids=lambda l: l.describe())
def test_gradient_matches_finite_differences(loss):
    y, factors, binding = _setup()
    train = split_mask(y.shape, 0.2, 0.1, seed=2).train
    for pos in range(3):
        g = loss_gradient(y, train, factors, CP3, pos, loss, binding)
        assert rel_err(g, _fd_gradient(y, train, factors, pos, loss)) <= 1e-5


def test_gradient_is_b_minus_a_for_least_squares():
    y, factors, binding = _setup(1)
    train = split_mask(y.shape, 0.2, 0.0, seed=1).train
    loss = AlphaBeta(1, 1)
    yhat = contract(CP3, factors)
    a, b = loss.ab(np.where(train, y, 1.0), yhat)
    for pos in range(3):
        ops = list(factors)
        ops[pos] = np.where(train, a, 0.0)
        A = contract(swap(CP3, pos), ops, binding)
        ops[pos] = np.where(train, b, 0.0)
        B = contract(swap(CP3, pos), ops, binding)
        g = loss_gradient(y, train, factors, CP3, pos, loss, binding)
        assert np.allclose(g, B - A, rtol=1e-10, atol=1e-10)


def test_zero_gradient_at_planted_optimum():
    binding = bind(CP3, (3, 4, 5), {"r": 2})
    factors = planted_factors(CP3, binding, 0)
    y = contract(CP3, factors)
    for pos in range(3):
        g = loss_gradient(y, None, factors, CP3, pos, AlphaBeta(1.2, 0.3), binding)
        assert np.max(np.abs(g)) <= 1e-10


def test_tiny_learning_rate_barely_moves():
    y, _, binding = _setup(2)
    factors, _ = fit_adam(y, CP3, {"r": 2}, AdamConfig(learning_rate=1e-12, max_iters=1))
    init = init_uniform(CP3, binding, 0)
    assert all(np.allclose(a, b, rtol=1e-9, atol=0) for a, b in zip(factors, init))


def test_deterministic():
    y, _, _ = _setup(3)
    cfg = AdamConfig(max_iters=30)
    _, r1 = fit_adam(y, CP3, {"r": 2}, cfg)
    _, r2 = fit_adam(y, CP3, {"r": 2}, cfg)
    assert r1.train_loss_trace == r2.train_loss_trace


def test_noiseless_planted_fit_improves():
    binding = bind(CP3, (5, 6, 7), {"r": 2})
    hits = 0
    for seed in range(5):
        y = synth(CP3, binding, seed=seed)
        _, report = fit_adam(y, CP3, {"r": 2},
                             AdamConfig(learning_rate=0.1, max_iters=2000, min_rel_decrease=0, seed=seed))
        hits += report.final_train_loss <= 0.01 * report.initial_train_loss
    assert hits >= 3


def test_divergence_is_reported():
    y, _, _ = _setup(4)
    _, report = fit_adam(y, CP3, {"r": 2},
                         AdamConfig(loss=AlphaBeta(1, 1), learning_rate=1e3, max_iters=200, min_rel_decrease=0))
    assert report.stop_reason is StopReason.DIVERGED
    assert not np.isfinite(report.final_train_loss)


def test_config_validation():
    with pytest.raises(ValueError):
        AdamConfig(learning_rate=0)
