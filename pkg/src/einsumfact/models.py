"""Model zoo: builders for common einsum factorizations and planted data."""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .einsum import ModelString, bind, contract, parse, shapes
from .errors import ModelStringError

OBSERVED_LETTERS = "ijklmnopqstu"
LATENT_LETTERS = "abcdefghrvwxyz" + "ABCDEFGHIJKLMNOPQRSTUVWXYZ"

UBER = "wr,dr,hr,irk,jrk->wdhij"
ICEWS = "ir,jr,ak,kr,tr->ijat"
WITS = "er,ir,gr,tk,kr->eigt"


class ModelName(str, enum.Enum):
    CP = "cp"
    TUCKER = "tucker"
    TUCKER_CUBIC = "tucker_cubic"
    LR_TUCKER = "lr_tucker"
    LR_TUCKER_CUBIC = "lr_tucker_cubic"
    TENSOR_TRAIN = "tt"
    MANY_BODY = "many_body"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ModelRecipe:
    """What to build and at which ranks.

    ``rank`` is the common rank (CP, cubic Tucker, tensor-train interior
    ranks); ``ranks`` gives per-mode Tucker ranks or the full tensor-train
    rank list ``(R_1, ..., R_{M+1})``; ``core_rank`` is the coupling rank of
    the low-rank Tucker core.  Proportional Tucker without ``ranks`` uses
    ``max(1, round(ratio * I_m))``.  ``CUSTOM`` takes ``model`` plus
    ``rank_map``.
    """

    name: ModelName
    shape: tuple[int, ...]
    rank: int | None = None
    ranks: tuple[int, ...] | None = None
    core_rank: int | None = None
    ratio: float = 0.1
    model: str | None = None
    rank_map: dict | None = None


def _need(value, what, name):
    if value is None:
        raise ValueError(f"{name.value} recipe needs {what}")
    if not isinstance(value, str) and np.any(np.asarray(value) < 1):
        raise ValueError(f"{what} must be >= 1, got {value}")
    return value


def build(recipe: ModelRecipe) -> tuple[ModelString, dict[str, int]]:
    """Emit the model string and the full index -> dimension binding."""
    name = ModelName(recipe.name)
    shape = tuple(int(d) for d in recipe.shape)
    m = len(shape)
    if name is ModelName.CUSTOM:
        ms = parse(_need(recipe.model, "a model string", name))
        return ms, bind(ms, shape, recipe.rank_map or {})
    if not 2 <= m <= len(OBSERVED_LETTERS):
        raise ModelStringError(f"zoo models support 2..{len(OBSERVED_LETTERS)} modes, got {m}")
    obs = OBSERVED_LETTERS[:m]
    lat = iter(LATENT_LETTERS)
    ranks = {}

    if name is ModelName.CP:
        r = next(lat)
        ranks[r] = _need(recipe.rank, "rank", name)
        operands = [i + r for i in obs]
    elif name is ModelName.MANY_BODY:
        operands = [a + b for a, b in itertools.combinations(obs, 2)]
    elif name is ModelName.TENSOR_TRAIN:
        if recipe.ranks is not None:
            tt = tuple(recipe.ranks)
            if len(tt) != m + 1:
                raise ValueError(f"tensor-train needs {m + 1} ranks, got {len(tt)}")
        else:
            inner = _need(recipe.rank, "rank", name)
            tt = (1,) + (inner,) * (m - 1) + (1,)
        _need(tt, "ranks", name)
        letters = [next(lat) for _ in range(m + 1)]
        ranks.update(zip(letters, tt))
        operands = [obs[k] + letters[k] + letters[k + 1] for k in range(m)]
    else:
        cubic = name in (ModelName.TUCKER_CUBIC, ModelName.LR_TUCKER_CUBIC)
        if cubic:
            per_mode = (_need(recipe.rank, "rank", name),) * m
        elif recipe.ranks is not None:
            per_mode = tuple(recipe.ranks)
        else:
            per_mode = tuple(max(1, round(recipe.ratio * d)) for d in shape)
        if len(per_mode) != m:
            raise ValueError(f"need {m} Tucker ranks, got {len(per_mode)}")
        _need(per_mode, "ranks", name)
        letters = [next(lat) for _ in range(m)]
        ranks.update(zip(letters, per_mode))
        operands = [i + r for i, r in zip(obs, letters)]
        if name in (ModelName.LR_TUCKER, ModelName.LR_TUCKER_CUBIC):
            k = next(lat)
            ranks[k] = _need(recipe.core_rank, "core_rank", name)
            operands += [r + k for r in letters]
        else:
            operands.append("".join(letters))
    ms = parse(",".join(operands) + "->" + obs)
    return ms, bind(ms, shape, ranks)


def custom(model: str, shape, **rank_map) -> ModelRecipe:
    return ModelRecipe(ModelName.CUSTOM, tuple(shape), model=model, rank_map=rank_map)


def uber_recipe(shape, R: int, K: int) -> ModelRecipe:
    """Temporal classes ``r`` with ``K`` spatial factors each (week, day, hour, lat, lon)."""
    return custom(UBER, shape, r=R, k=K)


def icews_recipe(shape, R: int, K: int) -> ModelRecipe:
    """CP whose action-mode factor is itself rank ``K`` (sender, receiver, action, time)."""
    return custom(ICEWS, shape, r=R, k=K)


def wits_recipe(shape, R: int, K: int) -> ModelRecipe:
    """CP whose time-mode factor is itself rank ``K`` (exporter, importer, good, year)."""
    return custom(WITS, shape, r=R, k=K)


def param_count(ms, binding) -> int:
    return sum(math.prod(s) for s in shapes(ms, binding))


def cp_rank_for_budget(shape, n_params: int) -> int:
    """CP rank whose parameter count is closest to ``n_params``."""
    return max(1, round(n_params / sum(shape)))


def planted_factors(ms, binding, seed: int = 0, low: float = 0.1, high: float = 1.0):
    rng = np.random.default_rng([0x9A17, int(seed)])
    return [rng.uniform(low, high, size=s) for s in shapes(ms, binding)]


def synth(ms, binding, seed: int = 0, noise: str | None = None, scale: float = 1.0,
          factors=None) -> np.ndarray:
    """Planted data: contract U(0.1, 1) factors (or ``factors``), scale, add noise.

    ``noise`` is ``None`` (exact), ``"poisson"`` (counts with the prediction
    as mean) or ``"bernoulli"`` (prediction read as odds).
    """
    ms = parse(ms)
    if factors is None:
        factors = planted_factors(ms, binding, seed)
    mean = scale * contract(ms, factors, binding)
    if noise is None:
        return mean
    rng = np.random.default_rng([0xD1CE, int(seed)])
    if noise == "poisson":
        return rng.poisson(mean).astype(np.float64)
    if noise == "bernoulli":
        return (rng.random(mean.shape) < mean / (1.0 + mean)).astype(np.float64)
    raise ValueError(f"unknown noise model {noise!r}")
