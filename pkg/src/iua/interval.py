"""Box abstract domain and interval abstract interpretation of networks.

Every transformer rounds its lower end down and its upper end up by one
ulp, so the abstract result stays sound under floating point.  Many boxes
can be pushed through a graph at once with :func:`abstract_eval_batch`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyAbstractionError,
    InputArityError,
    NumericOverflowError,
    ShapeError,
    TransformerUnavailableError,
)
from .nn_expr import CONST, INPUT, SCALE, SUM, ExprGraph, _chunks, resolve_activation


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise ValueError(f"invalid interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def __contains__(self, v: float) -> bool:
        return self.lo <= v <= self.hi

    def __iter__(self):
        yield self.lo
        yield self.hi

    def __repr__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"


def contains(outer: Interval, inner: Interval, slack: float = 0.0) -> bool:
    """Closed containment ``inner ⊆ outer``, widened on both sides by ``slack``."""
    return outer.lo - slack <= inner.lo and inner.hi <= outer.hi + slack


def membership(value: float, iv: Interval, slack: float = 0.0) -> bool:
    return iv.lo - slack <= value <= iv.hi + slack


def parse_interval(text: str) -> Interval:
    """Parse ``"lo:hi"`` (the CLI form)."""
    try:
        lo, hi = text.split(":")
        return Interval(float(lo), float(hi))
    except ValueError as exc:
        raise ValueError(f"expected lo:hi, got {text!r}") from exc


@dataclass(frozen=True)
class IntervalBox:
    dims: tuple[Interval, ...]

    def __post_init__(self):
        dims = tuple(d if isinstance(d, Interval) else Interval(*d) for d in self.dims)
        if not dims:
            raise EmptyAbstractionError("a box needs at least one dimension")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_bounds(cls, lo: Sequence[float], hi: Sequence[float]) -> "IntervalBox":
        return cls(tuple(Interval(a, b) for a, b in zip(np.ravel(lo), np.ravel(hi), strict=True)))

    @classmethod
    def point(cls, x: Sequence[float]) -> "IntervalBox":
        return cls.from_bounds(x, x)

    @classmethod
    def ball(cls, x: Sequence[float], eps: float) -> "IntervalBox":
        """The ∞-norm ball of radius ``eps`` around ``x`` (boxes abstract it exactly)."""
        x = np.asarray(x, float)
        return cls.from_bounds(x - eps, x + eps)

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def lo(self) -> np.ndarray:
        return np.array([d.lo for d in self.dims])

    @property
    def hi(self) -> np.ndarray:
        return np.array([d.hi for d in self.dims])

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def __len__(self) -> int:
        return len(self.dims)

    def __getitem__(self, i: int) -> Interval:
        return self.dims[i]

    def contains_point(self, x: Sequence[float], slack: float = 0.0) -> bool:
        x = np.asarray(x, float)
        return bool(np.all(self.lo - slack <= x) and np.all(x <= self.hi + slack))

    def contains_box(self, other: "IntervalBox", slack: float = 0.0) -> bool:
        return all(contains(a, b, slack) for a, b in zip(self.dims, other.dims, strict=True))

    def inflate(self, r: float) -> "IntervalBox":
        return IntervalBox.from_bounds(self.lo - r, self.hi + r)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def to_dict(self) -> dict:
        return {"dims": [[d.lo, d.hi] for d in self.dims]}

    @classmethod
    def from_dict(cls, d: dict) -> "IntervalBox":
        return cls(tuple(Interval(float(a), float(b)) for a, b in d["dims"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "IntervalBox":
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        return "⟨" + ", ".join(repr(d) for d in self.dims) + "⟩"


def alpha(points: Iterable[Sequence[float]]) -> IntervalBox:
    """Componentwise hull of a finite point set."""
    pts = np.asarray(list(points), dtype=float)
    if pts.size == 0:
        raise EmptyAbstractionError("cannot abstract an empty set")
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ShapeError("points must share one dimension")
    return IntervalBox.from_bounds(pts.min(axis=0), pts.max(axis=0))


def gamma_contains(box: IntervalBox, x: Sequence[float]) -> bool:
    """Membership of a concrete point in the concretisation of ``box``."""
    return box.contains_point(x)


# ---------------------------------------------------------------------------
# Transformers
# ---------------------------------------------------------------------------


def _down(v: np.ndarray) -> np.ndarray:
    return np.nextafter(v, -np.inf)


def _up(v: np.ndarray) -> np.ndarray:
    return np.nextafter(v, np.inf)


def interval_add(l1, u1, l2, u2):
    return _down(l1 + l2), _up(u1 + u2)


def interval_scale(c: np.ndarray, l, u):
    c = np.asarray(c, float)
    with np.errstate(invalid="ignore"):
        a, b = c * l, c * u
    # 0 * inf would be nan; a zero factor always yields exactly [0, 0]
    zero = c == 0
    a = np.where(zero, 0.0, a)
    b = np.where(zero, 0.0, b)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return np.where(zero, 0.0, _down(lo)), np.where(zero, 0.0, _up(hi))


def _apply_monotone(impl, v: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        r = np.asarray(impl.fn(v), float)
    r = np.where(v == -np.inf, impl.lo, r)
    return np.where(v == np.inf, impl.hi, r)


def interval_act(impl, l, u):
    if impl.monotone:
        lo, hi = _apply_monotone(impl, l), _apply_monotone(impl, u)
    elif impl.minmax is not None:
        lo, hi = impl.minmax(l, u)
    else:
        raise TransformerUnavailableError(
            "non-monotone activation has no min/max evaluator"
        )
    lo = np.maximum(_down(lo), impl.lo)
    hi = np.minimum(_up(hi), impl.hi)
    return lo, hi


def abstract_eval_batch(graph: ExprGraph, lo, hi) -> tuple[np.ndarray, np.ndarray]:
    """Abstract evaluation of ``graph`` over N boxes given as (N, m) bound arrays.

    Returns lower and upper bound arrays of shape (N, outputs).
    """
    lo = np.atleast_2d(np.asarray(lo, float))
    hi = np.atleast_2d(np.asarray(hi, float))
    if lo.shape != hi.shape or lo.shape[1] != graph.input_dim:
        raise InputArityError(
            f"expected boxes of dimension {graph.input_dim}, got {lo.shape} and {hi.shape}"
        )
    if np.any(lo > hi) or np.isnan(lo).any() or np.isnan(hi).any():
        raise ValueError("box lower bounds must not exceed upper bounds")
    impls = [resolve_activation(k) for k in graph.activations]
    k = graph.num_outputs
    out_lo = np.empty((lo.shape[0], k))
    out_hi = np.empty((lo.shape[0], k))
    # two value buffers per node, so halve the chunk
    for s, e in _chunks(lo.shape[0], 2 * len(graph)):
        out_lo[s:e], out_hi[s:e] = _abstract_chunk(graph, lo[s:e], hi[s:e], impls)
    return out_lo, out_hi


def _abstract_chunk(graph, blo, bhi, impls):
    n = len(graph)
    L = np.empty((n, blo.shape[0]))
    U = np.empty((n, blo.shape[0]))
    coef, left, right = graph.coef, graph.left, graph.right
    with np.errstate(over="ignore"):
        for kind, ai, ids in graph.schedule:
            if kind == CONST:
                L[ids] = coef[ids, None]
                U[ids] = coef[ids, None]
                continue
            if kind == INPUT:
                L[ids] = blo.T[left[ids]]
                U[ids] = bhi.T[left[ids]]
                continue
            if kind == SUM:
                a, b = left[ids], right[ids]
                l, u = interval_add(L[a], U[a], L[b], U[b])
            elif kind == SCALE:
                a = left[ids]
                l, u = interval_scale(coef[ids, None], L[a], U[a])
            else:
                a = left[ids]
                l, u = interval_act(impls[ai], L[a], U[a])
            if np.isnan(l).any() or np.isnan(u).any():
                raise NumericOverflowError("interval bound became undefined (inf - inf)")
            L[ids] = l
            U[ids] = u
    outs = list(graph.outputs)
    return L[outs].T, U[outs].T


def abstract_eval(graph: ExprGraph, box: IntervalBox) -> IntervalBox:
    """Sound interval image of ``box`` under ``graph``, one interval per output."""
    if box.dim != graph.input_dim:
        raise InputArityError(f"box has dimension {box.dim}, graph expects {graph.input_dim}")
    lo, hi = abstract_eval_batch(graph, box.lo[None, :], box.hi[None, :])
    return IntervalBox.from_bounds(lo[0], hi[0])


def abstract_eval_scalar(graph: ExprGraph, box: IntervalBox) -> Interval:
    out = abstract_eval(graph, box)
    if out.dim != 1:
        raise ShapeError("graph has more than one output")
    return out[0]
