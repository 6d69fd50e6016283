"""Model strings and the contraction engine.

A model string such as ``"ir,jr,kr->ijk"`` lists one subscript group per
parameter tensor and the output (observed) subscripts after ``->``.  Indices
are single ASCII letters; indices missing from the output are contracted.

``contract`` evaluates a model string with a greedy pairwise plan, each step
executed as a batched matrix product.  ``contract_oracle`` is the literal
nested-loop definition and exists for testing.
"""
from __future__ import annotations

import functools
import itertools
import math
import string
from dataclasses import dataclass

import numpy as np

from .errors import ModelStringError

_ALPHABET = frozenset(string.ascii_letters)
_MAX_ELEMENTS = np.iinfo(np.intp).max // 8


@dataclass(frozen=True)
class ModelString:
    """Parsed model string.

    ``operands`` holds one subscript string per parameter tensor and
    ``output`` the observed subscripts.  Instances built by :func:`parse` are
    fully validated; :func:`swap` may produce strings whose output carries an
    index present in no operand, which :func:`contract` treats as a broadcast.
    """

    operands: tuple[str, ...]
    output: str

    @property
    def n_operands(self) -> int:
        return len(self.operands)

    @property
    def observed(self) -> frozenset[str]:
        return frozenset(self.output)

    @property
    def contracted(self) -> tuple[str, ...]:
        """Summed indices in order of first appearance."""
        seen = []
        for sub in self.operands:
            for c in sub:
                if c not in self.output and c not in seen:
                    seen.append(c)
        return tuple(seen)

    @property
    def indices(self) -> tuple[str, ...]:
        seen = []
        for c in itertools.chain(*self.operands, self.output):
            if c not in seen:
                seen.append(c)
        return tuple(seen)

    def __str__(self) -> str:
        return ",".join(self.operands) + "->" + self.output


def parse(model_str) -> ModelString:
    """Parse and validate ``"sub1,sub2,...,subL->out"`` (spaces ignored)."""
    if isinstance(model_str, ModelString):
        return model_str
    text = "".join(str(model_str).split())
    if "->" not in text:
        raise ModelStringError(f"missing '->' in model string {model_str!r}")
    lhs, _, rhs = text.partition("->")
    if "->" in rhs:
        raise ModelStringError(f"more than one '->' in model string {model_str!r}")
    operands = tuple(lhs.split(","))
    for sub in (*operands, rhs):
        bad = set(sub) - _ALPHABET
        if bad:
            raise ModelStringError(f"illegal character(s) {sorted(bad)} in model string {model_str!r}")
    for pos, sub in enumerate(operands):
        if not sub:
            raise ModelStringError(f"empty operand at position {pos} in {model_str!r}")
        _check_no_repeats(sub, f"operand {sub!r}")
    if not rhs:
        raise ModelStringError(f"empty output in {model_str!r}")
    _check_no_repeats(rhs, "output")
    present = set("".join(operands))
    for c in rhs:
        if c not in present:
            raise ModelStringError(f"output index {c!r} absent from all operands")
    return ModelString(operands, rhs)


def _check_no_repeats(sub: str, where: str) -> None:
    for c in sub:
        if sub.count(c) > 1:
            raise ModelStringError(
                f"repeated index {c!r} in {where} (parameter tying unsupported)"
            )


def swap(ms, pos: int) -> ModelString:
    """Exchange the output subscripts with those of operand ``pos`` (0-based).

    Evaluating the result with the ``pos`` slot filled by a tensor shaped like
    the data gives the chain-rule sum over observed entries for that factor.
    """
    ms = parse(ms)
    if not 0 <= pos < ms.n_operands:
        raise IndexError(f"operand position {pos} out of range for {ms.n_operands} operands")
    operands = list(ms.operands)
    operands[pos], output = ms.output, ms.operands[pos]
    return ModelString(tuple(operands), output)


# ---------------------------------------------------------------------------
# dimension bindings


def bind(ms, shape, ranks=None) -> dict[str, int]:
    """Build the full index -> dimension map from a data shape and ranks.

    ``shape`` lists the observed dimensions in output order; ``ranks`` maps
    every contracted index to its dimension.
    """
    ms = parse(ms)
    ranks = dict(ranks or {})
    shape = tuple(int(d) for d in shape)
    if len(shape) != len(ms.output):
        raise ModelStringError(
            f"data has {len(shape)} modes but output {ms.output!r} has {len(ms.output)}"
        )
    binding = dict(zip(ms.output, shape))
    for c, d in ranks.items():
        if c not in ms.indices:
            raise ModelStringError(f"rank given for index {c!r} which does not occur in {ms}")
        if c in binding and binding[c] != int(d):
            raise ModelStringError(
                f"index {c!r} bound to {d} but data dimension is {binding[c]}"
            )
        binding[c] = int(d)
    for c in ms.contracted:
        if c not in binding:
            raise ModelStringError(f"no rank given for contracted index {c!r}")
    for c, d in binding.items():
        if d < 1:
            raise ModelStringError(f"dimension of index {c!r} must be positive, got {d}")
    return binding


def infer_binding(ms, operands, binding=None) -> dict[str, int]:
    """Check operand shapes against ``binding`` (or derive it from them)."""
    ms = parse(ms)
    if len(operands) != ms.n_operands:
        raise ModelStringError(f"{ms} expects {ms.n_operands} operands, got {len(operands)}")
    out = dict(binding or {})
    for sub, op in zip(ms.operands, operands):
        if op.ndim != len(sub):
            raise ModelStringError(
                f"operand {sub!r} needs {len(sub)} axes, got array with shape {op.shape}"
            )
        for c, d in zip(sub, op.shape):
            if out.setdefault(c, d) != d:
                raise ModelStringError(
                    f"index {c!r} has dimension {out[c]} but operand {sub!r} has {d}"
                )
    missing = [c for c in ms.output if c not in out]
    if missing:
        raise ModelStringError(f"no dimension for output indices {missing}")
    return out


def shapes(ms, binding) -> list[tuple[int, ...]]:
    """Shape of each operand under ``binding``."""
    ms = parse(ms)
    return [tuple(binding[c] for c in sub) for sub in ms.operands]


# ---------------------------------------------------------------------------
# planning


@dataclass(frozen=True)
class Step:
    """Contract tensors ``left`` and ``right`` (SSA ids) into ``subscripts``."""

    left: int
    right: int
    subscripts: str
    size: int


@dataclass(frozen=True)
class ContractionPlan:
    """Pairwise evaluation order for a model string.

    Operand ``k`` is first summed down to ``initial[k]`` (dropping indices no
    other tensor or the output needs); the ``steps`` then combine tensors
    pairwise, the result of step ``s`` getting id ``n_operands + s``.
    """

    model: ModelString
    initial: tuple[str, ...]
    steps: tuple[Step, ...]

    @property
    def intermediate_sizes(self) -> tuple[int, ...]:
        return tuple(s.size for s in self.steps)

    @property
    def max_intermediate(self) -> int:
        return max(self.intermediate_sizes, default=0)


def _size(subs, binding) -> int:
    return math.prod(binding[c] for c in subs)


def plan(ms, binding) -> ContractionPlan:
    """Greedy plan: repeatedly merge the pair with the smallest result."""
    ms = parse(ms)
    return _plan_cached(ms, tuple(sorted(binding.items())))


@functools.lru_cache(maxsize=512)
def _plan_cached(ms: ModelString, binding_items) -> ContractionPlan:
    binding = dict(binding_items)
    out = set(ms.output)

    def needed(sub, others):
        rest = set().union(*others) if others else set()
        return "".join(c for c in sub if c in out or c in rest)

    initial = tuple(
        needed(sub, [o for k, o in enumerate(ms.operands) if k != pos])
        for pos, sub in enumerate(ms.operands)
    )
    live = dict(enumerate(initial))
    next_id = len(initial)
    steps = []
    while len(live) > 1:
        best = None
        ids = sorted(live)
        for a, b in itertools.combinations(ids, 2):
            others = [live[k] for k in ids if k not in (a, b)]
            rest = set().union(*others) if others else set()
            sa, sb = live[a], live[b]
            batch = [c for c in sa if c in sb and (c in out or c in rest)]
            left = [c for c in sa if c not in sb]
            right = [c for c in sb if c not in sa]
            subs = "".join(batch + left + right)
            size = _size(subs, binding)
            if best is None or size < best[0]:
                best = (size, a, b, subs)
        size, a, b, subs = best
        if size > _MAX_ELEMENTS:
            raise OverflowError(f"intermediate with {size} elements exceeds addressable size")
        steps.append(Step(a, b, subs, size))
        del live[a], live[b]
        live[next_id] = subs
        next_id += 1
    if _size(ms.output, binding) > _MAX_ELEMENTS:
        raise OverflowError("output tensor exceeds addressable size")
    return ContractionPlan(ms, initial, tuple(steps))


# ---------------------------------------------------------------------------
# execution


def _reduce(arr, sub, keep):
    axes = tuple(k for k, c in enumerate(sub) if c not in keep)
    if axes:
        arr = arr.sum(axis=axes)
    return arr, "".join(c for c in sub if c in keep)


def _pair(a, sa, b, sb, subs):
    """Batched-matmul contraction of two tensors into subscripts ``subs``."""
    keep = set(subs)
    batch = [c for c in sa if c in sb and c in keep]
    summed = [c for c in sa if c in sb and c not in keep]
    left = [c for c in sa if c not in sb]
    right = [c for c in sb if c not in sa]
    da = dict(zip(sa, a.shape))
    db = dict(zip(sb, b.shape))
    nb = math.prod(da[c] for c in batch)
    nl = math.prod(da[c] for c in left)
    nr = math.prod(db[c] for c in right)
    ns = math.prod(da[c] for c in summed)
    at = a.transpose([sa.index(c) for c in batch + left + summed]).reshape(nb, nl, ns)
    bt = b.transpose([sb.index(c) for c in batch + summed + right]).reshape(nb, ns, nr)
    res = np.matmul(at, bt)
    return res.reshape([da[c] for c in batch + left] + [db[c] for c in right])


def _finish(arr, sub, output, binding):
    arr = arr.transpose([sub.index(c) for c in output if c in sub])
    if len(sub) < len(output):
        # output indices carried by no operand broadcast (swapped strings)
        expanded = [slice(None) if c in sub else np.newaxis for c in output]
        arr = np.broadcast_to(arr[tuple(expanded)], tuple(binding[c] for c in output))
    return np.ascontiguousarray(arr, dtype=np.float64)


def execute(p: ContractionPlan, operands, binding) -> np.ndarray:
    ms = p.model
    live = {}
    for k, (sub, op) in enumerate(zip(ms.operands, operands)):
        live[k] = _reduce(np.asarray(op, dtype=np.float64), sub, set(p.initial[k]))
    next_id = len(operands)
    for step in p.steps:
        a, sa = live.pop(step.left)
        b, sb = live.pop(step.right)
        live[next_id] = (_pair(a, sa, b, sb, step.subscripts), step.subscripts)
        next_id += 1
    (arr, sub), = live.values()
    return _finish(arr, sub, ms.output, binding)


def contract(ms, operands, binding=None) -> np.ndarray:
    """Evaluate ``out[i] = sum_r prod_l operand_l[i_l, r_l]``.

    ``binding`` (index -> dimension) is optional when every output index
    occurs in some operand; it is required to size broadcast-only output
    indices of swapped strings.
    """
    ms = parse(ms)
    operands = [np.asarray(op, dtype=np.float64) for op in operands]
    binding = infer_binding(ms, operands, binding)
    return execute(plan(ms, binding), operands, binding)


def contract_oracle(ms, operands, binding=None) -> np.ndarray:
    """Literal nested-loop evaluation over every index assignment (tests only)."""
    ms = parse(ms)
    operands = [np.asarray(op, dtype=np.float64) for op in operands]
    binding = infer_binding(ms, operands, binding)
    idx = ms.indices
    out = np.zeros(tuple(binding[c] for c in ms.output))
    for values in itertools.product(*(range(binding[c]) for c in idx)):
        at = dict(zip(idx, values))
        term = 1.0
        for sub, op in zip(ms.operands, operands):
            term *= op[tuple(at[c] for c in sub)]
        out[tuple(at[c] for c in ms.output)] += term
    return out
