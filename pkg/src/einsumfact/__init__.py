"""Nonnegative tensor factorization for arbitrary einsum model strings."""
from .baseline import AdamConfig, fit_adam, loss_gradient
from .einsum import ModelString, bind, contract, contract_oracle, parse, plan, swap
from .errors import EmptySelectionError, LossDomainError, ModelStringError
from .losses import (AlphaBeta, BernoulliOdds, BinomialOdds, JensenShannon, Loss, NegBinomial,
                     alpha_beta_divergence, make_loss)
from .models import ModelName, ModelRecipe, build, param_count, synth
from .solver import FactorSet, FitConfig, FitReport, StopReason, fit, init_uniform, update_factor
from .tensor import Mask, as_tensor, masked_mean_loss, split_mask

__all__ = [
    "AdamConfig", "AlphaBeta", "BernoulliOdds", "BinomialOdds", "EmptySelectionError",
    "FactorSet", "FitConfig", "FitReport", "JensenShannon", "Loss", "LossDomainError", "Mask",
    "ModelName", "ModelRecipe", "ModelString", "ModelStringError", "NegBinomial", "StopReason",
    "alpha_beta_divergence", "as_tensor", "bind", "build", "contract", "contract_oracle", "fit",
    "fit_adam", "init_uniform", "loss_gradient", "make_loss", "masked_mean_loss", "param_count",
    "parse", "plan", "split_mask", "swap", "synth", "update_factor",
]
