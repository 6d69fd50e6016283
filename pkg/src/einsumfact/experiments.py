"""Desk-scale experiments shared by ``scripts/`` and the acceptance tests.

Both experiments use planted data from the ride-count style model
``wr,dr,hr,irk,jrk->wdhij`` (week, day, hour and two spatial modes) with
Poisson noise, and a random train/validation/heldout split.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baseline import AdamConfig, fit_adam
from .losses import AlphaBeta
from .models import UBER, build, cp_rank_for_budget, param_count, synth, uber_recipe
from .solver import FitConfig, FitReport, fit
from .tensor import split_mask


@dataclass
class ComparisonSetup:
    shape: tuple = (6, 7, 24, 20, 20)
    R: int = 4
    K: int = 3
    scale: float = 1.0
    p_heldout: float = 0.1
    p_validation: float = 0.05
    alpha: float = 1.0
    beta: float = 0.0
    max_iters: int = 5000


def planted_problem(setup: ComparisonSetup, seed: int):
    """Return (y, mask, model string, ranks) for one seed."""
    ms, binding = build(uber_recipe(setup.shape, setup.R, setup.K))
    y = synth(ms, binding, seed=seed, noise="poisson", scale=setup.scale)
    mask = split_mask(setup.shape, setup.p_heldout, setup.p_validation, seed)
    return y, mask, ms, {"r": setup.R, "k": setup.K}


def matched_cp(setup: ComparisonSetup):
    """CP string and rank whose size is closest to the structured model."""
    ms, binding = build(uber_recipe(setup.shape, setup.R, setup.K))
    rank = cp_rank_for_budget(setup.shape, param_count(ms, binding))
    letters = "ijklmnopqstu"[: len(setup.shape)]
    return ",".join(c + "z" for c in letters) + "->" + letters, {"z": rank}


@dataclass
class ComparisonResult:
    seed: int
    custom: FitReport
    cp: FitReport
    cp_rank: int

    @property
    def custom_wins(self) -> bool:
        return self.custom.heldout_loss <= self.cp.heldout_loss


def compare_models(setup: ComparisonSetup, seed: int) -> ComparisonResult:
    """Fit the planted structure and a same-size CP; report both heldout losses."""
    y, mask, ms, ranks = planted_problem(setup, seed)
    cfg = FitConfig(loss=AlphaBeta(setup.alpha, setup.beta), max_iters=setup.max_iters, seed=seed)
    _, custom = fit(y, ms, ranks, cfg, mask)
    cp_ms, cp_ranks = matched_cp(setup)
    _, cp = fit(y, cp_ms, cp_ranks, cfg, mask)
    return ComparisonResult(seed, custom, cp, cp_ranks["z"])


def time_to_reach(report: FitReport, target: float) -> float:
    """Wall-clock seconds until the train trace first drops to ``target`` (inf if never)."""
    trace = np.asarray(report.train_loss_trace)
    hit = np.nonzero(trace <= target)[0]
    return report.time_trace[hit[0]] if hit.size else float("inf")


@dataclass
class SpeedResult:
    seed: int
    mu: FitReport
    adam: dict = field(default_factory=dict)  # learning rate -> FitReport

    @property
    def best_lr(self) -> float:
        return min(self.adam, key=lambda lr: self.adam[lr].final_train_loss)

    @property
    def best_adam(self) -> FitReport:
        return self.adam[self.best_lr]

    @property
    def target(self) -> float:
        """A train loss both optimizers reach: the worse of the two finals."""
        return max(self.mu.final_train_loss, self.best_adam.final_train_loss)

    @property
    def mu_seconds(self) -> float:
        return time_to_reach(self.mu, self.target)

    @property
    def adam_seconds(self) -> float:
        return min(time_to_reach(r, self.target) for r in self.adam.values())

    @property
    def speedup(self) -> float:
        return self.adam_seconds / self.mu_seconds

    @property
    def final_gap(self) -> float:
        """Relative excess of MU's final train loss over the best Adam run."""
        best = self.best_adam.final_train_loss
        return (self.mu.final_train_loss - best) / abs(best)


def compare_speed(setup: ComparisonSetup, seed: int, learning_rates=(0.1, 0.3, 0.5),
                  mu_report: FitReport | None = None) -> SpeedResult:
    """Multiplicative updates against Adam on the structured model, same start."""
    y, mask, ms, ranks = planted_problem(setup, seed)
    loss = AlphaBeta(setup.alpha, setup.beta)
    if mu_report is None:
        _, mu_report = fit(y, ms, ranks, FitConfig(loss=loss, max_iters=setup.max_iters, seed=seed), mask)
    out = SpeedResult(seed, mu_report)
    for lr in learning_rates:
        cfg = AdamConfig(loss=loss, learning_rate=lr, max_iters=setup.max_iters, seed=seed)
        _, out.adam[lr] = fit_adam(y, ms, ranks, cfg, mask)
    return out


__all__ = ["UBER", "ComparisonSetup", "ComparisonResult", "SpeedResult", "compare_models",
           "compare_speed", "matched_cp", "planted_problem", "time_to_reach"]
