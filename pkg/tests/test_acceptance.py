"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import csv
import shutil
import time

import numpy as np
import pytest

from einsumfact import (AlphaBeta, BernoulliOdds, FitConfig, JensenShannon, ModelName, ModelRecipe,
                        NegBinomial, build, contract, contract_oracle, fit, loss_gradient, parse,
                        param_count, split_mask, swap)
from einsumfact.cli import main
from einsumfact.experiments import ComparisonSetup, compare_models, compare_speed
from einsumfact.models import ICEWS, UBER, WITS, custom, uber_recipe
from einsumfact.solver import update_factor
from einsumfact.surrogate import surrogate_Q

from conftest import DATA, rel_err

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    def say(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
    return say


# 1 ---------------------------------------------------------------------------

GRID_MODELS = {
    "cp": ModelRecipe(ModelName.CP, (6, 7, 8), rank=3),
    "tucker": ModelRecipe(ModelName.TUCKER, (6, 7, 8), ranks=(2, 3, 3)),
    "tucker_cubic": ModelRecipe(ModelName.TUCKER_CUBIC, (6, 7, 8), rank=2),
    "lr_tucker": ModelRecipe(ModelName.LR_TUCKER, (6, 7, 8), ranks=(2, 3, 3), core_rank=2),
    "tt": ModelRecipe(ModelName.TENSOR_TRAIN, (6, 7, 8), rank=2),
    "many_body": ModelRecipe(ModelName.MANY_BODY, (6, 7, 8)),
    "uber": custom(UBER, (6, 7, 8, 3, 3), r=3, k=2),
    "icews": custom(ICEWS, (6, 7, 8, 3), r=3, k=2),
    "wits": custom(WITS, (6, 7, 8, 3), r=3, k=2),
}
GRID_LOSSES = ([AlphaBeta(a, b) for a in (0.7, 1.0, 1.3) for b in (0.0, 1.0)]
               + [AlphaBeta(1.0, -0.5), NegBinomial(1.0), BernoulliOdds(), JensenShannon()])


def test_criterion_1_monotone_descent(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    failures = []
    for name, recipe in GRID_MODELS.items():
        ms, binding = build(recipe)
        counts = rng.gamma(2.0, size=recipe.shape)
        binary = (rng.random(recipe.shape) < 0.4).astype(float)
        ranks = {c: binding[c] for c in ms.contracted}
        for loss in GRID_LOSSES:
            y = binary if isinstance(loss, BernoulliOdds) else counts
            cfg = FitConfig(loss=loss, max_iters=300, min_rel_decrease=0.0)
            factors, rep = fit(y, ms, ranks, cfg)
            trace = np.array([rep.initial_train_loss] + rep.train_loss_trace)
            rises = np.nonzero(trace[1:] > trace[:-1] + 1e-9 * np.abs(trace[:-1]))[0]
            finite = np.all(np.isfinite(trace)) and all(np.all(np.isfinite(f)) for f in factors)
            positive = all(f.min() >= cfg.epsilon for f in factors)
            if rep.iterations != 300 or rises.size or not finite or not positive:
                failures.append((name, loss.describe(), rises[:3].tolist(), finite, positive))
    elapsed = time.perf_counter() - start
    ok = not failures
    verdict(1, ok, f"{len(GRID_MODELS) * len(GRID_LOSSES)} (model, loss) runs x 300 iterations, "
                   f"{len(failures)} with a rise > 1e-9 rel or non-finite values; {elapsed:.0f}s")
    assert ok, failures[:5]


# 2 ---------------------------------------------------------------------------

def _random_instance(rng):
    letters = list("abcdefg")
    n = int(rng.integers(1, 5))
    subs = ["".join(rng.permutation(letters)[: rng.integers(1, 4)]) for _ in range(n)]
    used = sorted(set("".join(subs)))
    out = "".join(rng.permutation(used)[: rng.integers(1, min(3, len(used)) + 1)])
    dims = {c: int(rng.integers(1, 6)) for c in used}
    ops = [rng.uniform(0.05, 1.0, [dims[c] for c in s]) for s in subs]
    return parse(",".join(subs) + "->" + out), ops


def test_criterion_2_oracle_equivalence(verdict):
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(200):
        ms, ops = _random_instance(rng)
        worst = max(worst, rel_err(contract(ms, ops), contract_oracle(ms, ops)))
    ok = worst <= 1e-12
    verdict(2, ok, f"200 random instances, worst relative error {worst:.2e} (limit 1e-12)")
    assert ok


# 3 ---------------------------------------------------------------------------

DERIV_LOSSES = ([AlphaBeta(a, b) for a in (0.7, 0.8, 1.0, 1.2, 1.3, 2.0) for b in (-1.0, -0.5, 0.0, 0.5, 1.0)
                 if a + b != 0] + [AlphaBeta(-1.0, 2.0), AlphaBeta(0.0, 1.0), NegBinomial(1.0),
                                   BernoulliOdds(), JensenShannon()])


def test_criterion_3_gradient_identities(verdict):
    rng = np.random.default_rng(5)
    # (a) pointwise derivative
    worst_a = 0.0
    for loss in DERIV_LOSSES:
        x, y = rng.uniform(0.1, 10, 50), rng.uniform(0.1, 10, 50)
        if isinstance(loss, BernoulliOdds):
            x = (x > 5).astype(float)
        h = 1e-5 * y
        fd = (loss.loss(x, y + h) - loss.loss(x, y - h)) / (2 * h)
        worst_a = max(worst_a, rel_err(loss.dloss_dy(x, y), fd))

    # (b) gradient of the masked total on a 3x4x5 CP instance
    ms = "ir,jr,kr->ijk"
    binding = {"i": 3, "j": 4, "k": 5, "r": 2}
    y = rng.uniform(0.2, 2.0, (3, 4, 5))
    train = split_mask(y.shape, 0.2, 0.1, seed=3).train
    factors = [rng.uniform(0.2, 1.0, (d, 2)) for d in (3, 4, 5)]
    worst_b = 0.0
    for loss in (AlphaBeta(1, 1), AlphaBeta(1, 0), AlphaBeta(1.2, 0.3), NegBinomial(2.0), JensenShannon()):
        def total(fs):
            return float(np.sum(loss.loss(np.where(train, y, 1.0), contract(ms, fs))[train]))
        for pos in range(3):
            g = loss_gradient(y, train, factors, ms, pos, loss, binding)
            fd = np.zeros_like(g)
            for idx in np.ndindex(g.shape):
                up, dn = [f.copy() for f in factors], [f.copy() for f in factors]
                up[pos][idx] += 1e-6
                dn[pos][idx] -= 1e-6
                fd[idx] = (total(up) - total(dn)) / 2e-6
            worst_b = max(worst_b, rel_err(g, fd))

    # (c) least squares: gradient equals B - A from the update's own contractions
    loss = AlphaBeta(1, 1)
    yhat = contract(ms, factors)
    a, b = loss.ab(np.where(train, y, 1.0), yhat)
    worst_c = 0.0
    for pos in range(3):
        ops = list(factors)
        ops[pos] = np.where(train, a, 0.0)
        A = contract(swap(ms, pos), ops, binding)
        ops[pos] = np.where(train, b, 0.0)
        B = contract(swap(ms, pos), ops, binding)
        g = loss_gradient(y, train, factors, ms, pos, loss, binding)
        worst_c = max(worst_c, float(np.max(np.abs(g - (B - A)))))
    ok = worst_a <= 1e-6 and worst_b <= 1e-5 and worst_c <= 1e-10
    verdict(3, ok, f"(a) {worst_a:.1e} <= 1e-6, (b) {worst_b:.1e} <= 1e-5, (c) {worst_c:.1e} <= 1e-10")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_criterion_4_surrogate_sandwich(verdict):
    ms = "ir,jr->ij"
    rng = np.random.default_rng(8)
    worst_touch, worst_gap, lost = 0.0, np.inf, 0
    for al, be in ((1.0, 1.0), (1.2, 0.3)):
        loss = AlphaBeta(al, be)
        y = rng.uniform(0.2, 3.0, (3, 4))
        factors = [rng.uniform(0.2, 1.5, (3, 2)), rng.uniform(0.2, 1.5, (4, 2))]
        for pos in (0, 1):
            L0 = float(np.sum(loss.loss(y, contract(ms, factors))))
            worst_touch = max(worst_touch, abs(surrogate_Q(factors, factors[pos], y, ms, pos, loss) - L0))
            for _ in range(100):
                cand = factors[pos] * rng.uniform(0.05, 4.0, factors[pos].shape)
                trial = list(factors)
                trial[pos] = cand
                gap = surrogate_Q(factors, cand, y, ms, pos, loss) - float(np.sum(loss.loss(y, contract(ms, trial))))
                worst_gap = min(worst_gap, gap)
            best = update_factor(y, None, factors, ms, pos, loss)
            q_best = surrogate_Q(factors, best, y, ms, pos, loss)
            for _ in range(20):
                cand = best * rng.uniform(0.5, 1.5, best.shape)
                lost += q_best > surrogate_Q(factors, cand, y, ms, pos, loss)
    ok = worst_touch <= 1e-10 and worst_gap >= -1e-10 and lost == 0
    verdict(4, ok, f"|Q(t|t) - L| max {worst_touch:.1e}, min Q - L {worst_gap:.2e}, "
                   f"update beaten by {lost}/80 random candidates")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_criterion_5_planted_recovery(verdict):
    gen, gb = build(ModelRecipe(ModelName.CP, (5, 6, 7), rank=2))
    fitted, _ = build(ModelRecipe(ModelName.CP, (5, 6, 7), rank=4))
    finals = []
    for seed in range(5):
        y = contract(gen, [np.random.default_rng([55, seed]).uniform(0.1, 1.0, (d, 2)) for d in (5, 6, 7)])
        _, rep = fit(y, fitted, {"a": 4}, FitConfig(loss=AlphaBeta(1, 0), max_iters=2000,
                                                    min_rel_decrease=0.0, seed=seed))
        finals.append(rep.mean_train_loss)
    ok = sum(f <= 1e-6 for f in finals) >= 1
    verdict(5, ok, "final mean train KL per seed " + ", ".join(f"{f:.1e}" for f in finals) + " (need one <= 1e-6)")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_criterion_6_heldout_independence(verdict):
    ms, binding = build(uber_recipe((4, 5, 6, 3, 3), R=2, K=2))
    rng = np.random.default_rng(6)
    y = rng.poisson(2.0, (4, 5, 6, 3, 3)).astype(float)
    mask = split_mask(y.shape, 0.1, 0.05, seed=6)
    cfg = FitConfig(max_iters=100, min_rel_decrease=0.0, seed=6)
    f1, r1 = fit(y, ms, {"r": 2, "k": 2}, cfg, mask)
    y2 = y.copy()
    y2[mask.heldout] = rng.uniform(0, 1e4, int(mask.heldout.sum()))
    f2, r2 = fit(y2, ms, {"r": 2, "k": 2}, cfg, mask)
    same = all(np.array_equal(a, b) for a, b in zip(f1, f2))
    same_traces = r1.train_loss_trace == r2.train_loss_trace and r1.val_loss_trace == r2.val_loss_trace
    ok = same and same_traces
    verdict(6, ok, f"{int(mask.heldout.sum())} heldout entries perturbed; factors bit-identical: {same}, "
                   f"traces identical: {same_traces}")
    assert ok


# 7 and 8 ---------------------------------------------------------------------

SETUP = ComparisonSetup()


@pytest.fixture(scope="module")
def desk_runs():
    runs = []
    for seed in range(5):
        comparison = compare_models(SETUP, seed)
        speed = compare_speed(SETUP, seed, mu_report=comparison.custom)
        runs.append((comparison, speed))
    return runs


def test_criterion_7_custom_beats_cp(verdict, desk_runs):
    wins = sum(c.custom_wins for c, _ in desk_runs)
    detail = "; ".join(f"seed {c.seed}: {c.custom.heldout_loss:.5f} vs CP(R={c.cp_rank}) {c.cp.heldout_loss:.5f}"
                       for c, _ in desk_runs)
    ok = wins >= 4
    verdict(7, ok, f"custom heldout <= CP in {wins}/5 seeds (need 4); {detail}")
    assert ok


def test_criterion_8_mu_vs_adam(verdict, desk_runs):
    fast = sum(s.speedup >= 3 for _, s in desk_runs)
    worst_gap = max(s.final_gap for _, s in desk_runs)
    detail = "; ".join(f"seed {s.seed}: MU {s.mu_seconds:.1f}s, Adam(lr={s.best_lr}) {s.adam_seconds:.1f}s "
                       f"to reach {s.target:.1f}, ratio {s.speedup:.2f}" for _, s in desk_runs)
    timing_ok = fast >= 3
    verdict(8, timing_ok, f"Adam needs >= 3x MU's wall-clock in {fast}/5 seeds (need 3); "
                          f"MU final loss vs best Adam: worst excess {100 * worst_gap:.3f}% (hard limit 10%); "
                          f"{detail}")
    # timing is reported, not enforced; only a large final-loss gap fails the run
    assert worst_gap <= 0.10


# 9 ---------------------------------------------------------------------------

def test_criterion_9_parameter_count(verdict):
    ms, binding = build(uber_recipe((27, 7, 24, 400, 400), R=10, K=6))
    n = param_count(ms, binding)
    ok = n == 48_580
    verdict(9, ok, f"ride-count model with R=10, K=6, 400x400 grid has {n} parameters (expected 48580)")
    assert ok


# 10 --------------------------------------------------------------------------

def test_criterion_10_cli_golden(verdict, tmp_path, monkeypatch, capsys):
    from test_io_cli import FIT, GOLDEN_MANIFEST

    shutil.copy(DATA / "cp_3x4x5.coo", tmp_path / "cp_3x4x5.coo")
    monkeypatch.chdir(tmp_path)
    codes = [main(FIT + ["--data", "cp_3x4x5.coo", "--out", d]) for d in ("a", "b")]
    manifest_ok = all((tmp_path / d / "manifest.txt").read_text() == GOLDEN_MANIFEST for d in ("a", "b"))
    with open(tmp_path / "a" / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    schema_ok = rows[0] == ["iteration", "train_loss", "val_loss"] and all(len(r) == 3 for r in rows)
    train = [float(r[1]) for r in rows[1:]]
    monotone = all(b <= a + 1e-9 * abs(a) for a, b in zip(train, train[1:]))

    def code(extra):
        try:
            return main(FIT + ["--data", "cp_3x4x5.coo", "--out", "e"] + extra)
        except SystemExit as exc:
            return exc.code

    errors = {
        "alpha=0,beta=0.5": (code(["--alpha", "0", "--beta", "0.5"]), 2),
        "missing rank": (code(["--ranks", ""]), 2),
        "bad flag value": (code(["--max-iters", "x"]), 2),
        "loss domain": (code(["--loss", "binomial", "--trials", "0.01"]), 3),
    }
    capsys.readouterr()
    codes_ok = all(got == want for got, want in errors.values())
    ok = codes == [0, 0] and manifest_ok and schema_ok and monotone and codes_ok
    verdict(10, ok, f"exit codes {codes}, manifest byte-stable: {manifest_ok}, trace schema ok: {schema_ok}, "
                    f"train_loss monotone: {monotone}, error exits {({k: v[0] for k, v in errors.items()})}")
    assert ok
