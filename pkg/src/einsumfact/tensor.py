"""Dense tensor helpers, train/validation/heldout masks and masked losses.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C order;
:func:`as_tensor` is the single validation gate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EmptySelectionError

TRAIN, VALIDATION, HELDOUT = 0, 1, 2


def as_tensor(data, nonnegative: bool = False) -> np.ndarray:
    """Return ``data`` as a finite, C-contiguous float64 array.

    Raises ``ValueError`` on NaN/Inf entries, and on negative entries when
    ``nonnegative`` is set.
    """
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim == 0:
        raise ValueError("tensor must have at least one mode")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains NaN or Inf entries")
    if nonnegative and arr.size and arr.min() < 0:
        raise ValueError("tensor contains negative entries")
    return arr


def elementwise_map(t: np.ndarray, f: Callable) -> np.ndarray:
    """Apply ``f`` entrywise. ``f`` may be a ufunc-like or a scalar function."""
    t = np.asarray(t, dtype=np.float64)
    try:
        out = np.asarray(f(t), dtype=np.float64)
        if out.shape != t.shape:
            raise ValueError
    except (TypeError, ValueError):
        out = np.vectorize(f, otypes=[np.float64])(t)
    if np.isnan(out).any():
        raise ValueError("elementwise map produced NaN")
    return out


@dataclass(frozen=True, eq=False)
class Mask:
    """Three-valued label tensor: TRAIN (0), VALIDATION (1), HELDOUT (2)."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if labels.size and labels.max() > HELDOUT:
            raise ValueError("mask labels must be 0 (train), 1 (validation) or 2 (heldout)")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @classmethod
    def all_train(cls, shape) -> "Mask":
        return cls(np.zeros(shape, dtype=np.uint8))

    @classmethod
    def from_binary(cls, observed) -> "Mask":
        """Observed entries are train, the rest heldout."""
        observed = np.asarray(observed, dtype=bool)
        return cls(np.where(observed, TRAIN, HELDOUT).astype(np.uint8))

    @property
    def shape(self):
        return self.labels.shape

    @property
    def train(self) -> np.ndarray:
        return self.labels == TRAIN

    @property
    def validation(self) -> np.ndarray:
        return self.labels == VALIDATION

    @property
    def heldout(self) -> np.ndarray:
        return self.labels == HELDOUT

    def counts(self) -> dict[str, int]:
        c = np.bincount(self.labels.ravel(), minlength=3)
        return {"train": int(c[0]), "validation": int(c[1]), "heldout": int(c[2])}

    def __eq__(self, other):
        return isinstance(other, Mask) and np.array_equal(self.labels, other.labels)


def split_mask(shape, p_heldout: float = 0.1, p_validation: float = 0.05, seed: int = 0) -> Mask:
    """Randomly label every entry heldout / validation / train.

    Each entry is heldout with probability ``p_heldout``; otherwise it is a
    validation entry with probability ``p_validation``; otherwise train.
    Deterministic for a given seed.
    """
    for name, p in (("p_heldout", p_heldout), ("p_validation", p_validation)):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"{name} must lie in [0, 1), got {p}")
    if p_heldout + (1.0 - p_heldout) * p_validation >= 1.0:
        raise ValueError("split leaves no probability for the training set")
    rng = np.random.default_rng([0x5EED, int(seed)])
    u = rng.random(shape)
    v = rng.random(shape)
    labels = np.full(shape, TRAIN, dtype=np.uint8)
    labels[v < p_validation] = VALIDATION
    labels[u < p_heldout] = HELDOUT
    return Mask(labels)


def masked_mean_loss(y, yhat, selected, loss) -> float:
    """Mean of ``loss(y_i, yhat_i)`` over the entries picked by ``selected``.

    ``loss`` is a loss object (anything with ``.loss(x, y)``) or a plain
    vectorised callable. Values of ``y`` outside the selection are never read.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    if isinstance(selected, Mask):
        raise TypeError("pass a binary view such as mask.heldout, not the Mask itself")
    selected = np.asarray(selected, dtype=bool)
    if selected.shape != y.shape:
        raise ValueError(f"mask shape {selected.shape} does not match tensor shape {y.shape}")
    n = int(selected.sum())
    if n == 0:
        raise EmptySelectionError("empty evaluation set")
    fn = loss.loss if hasattr(loss, "loss") else loss
    # unselected entries are replaced by a neutral point so they are never read
    values = fn(np.where(selected, y, 1.0), np.where(selected, yhat, 1.0))
    values = np.broadcast_to(values, y.shape)
    return float(np.sum(values[selected]) / n)
