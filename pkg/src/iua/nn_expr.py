"""Neural-network expression language: graphs, concrete evaluation, activations.

A network is an append-only DAG over five node kinds (constant, input,
binary sum, scaling by a constant, unary activation).  Graphs are stored
column-wise in numpy arrays so that networks with millions of nodes can be
evaluated level by level over a whole batch of inputs at once.

Activations are referenced from nodes by *key*: ``"sigmoid"`` is the raw
function and ``"sigmoid:sq"`` its squashable normalisation, a monotone
function with limits exactly 0 and 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import (
    CalibrationRequiredError,
    DegenerateLimitsError,
    GraphStructureError,
    InputArityError,
    NotSquashableError,
    NumericOverflowError,
    ShapeError,
    UnknownActivationError,
)

CONST, INPUT, SUM, SCALE, ACT = range(5)
KIND_NAMES = ("const", "input", "sum", "scale", "act")
SQ_SUFFIX = ":sq"

# float64 elements per evaluation buffer before the batch is chunked
EVAL_BUDGET = 2**25

ArrayFn = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def sigmoid(x):
    return expit(x)


def tanh(x):
    return np.tanh(x)


def softsign(x):
    x = np.asarray(x, dtype=float)
    return x / (1.0 + np.abs(x))


def relu(x):
    return np.maximum(x, 0.0)


def elu(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, x, np.expm1(np.minimum(x, 0.0)))


def softplus(x):
    return np.logaddexp(0.0, x)


def make_smooth_relu(a: float = 1.0) -> ArrayFn:
    if not a > 0:
        raise ValueError("smoothReLU needs a > 0")

    def smooth_relu(x):
        x = np.asarray(x, dtype=float)
        pos = np.maximum(x, 0.0)
        return np.where(x >= 0, pos - np.log1p(a * pos) / a, 0.0)

    smooth_relu.__name__ = f"smooth_relu_{a:g}"
    return smooth_relu


@dataclass(frozen=True)
class ActivationProfile:
    """An activation function together with what we know about its shape.

    ``limits`` holds the left and right limits ``(a, b)``; ``b`` may be
    ``inf`` for functions such as ReLU that are unbounded on the right.
    ``normalized`` is filled in by :func:`make_squashable`.
    """

    name: str
    raw: ArrayFn
    limits: tuple[float, float]
    is_monotone: bool = True
    normalized: ArrayFn | None = None
    minmax: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    # "affine" or "composite"; empty until normalised
    construction: str = ""

    @property
    def bounded(self) -> bool:
        a, b = self.limits
        return math.isfinite(a) and math.isfinite(b)

    @property
    def key(self) -> str:
        return self.name

    @property
    def squashed_key(self) -> str:
        return self.name + SQ_SUFFIX


_REGISTRY: dict[str, ActivationProfile] = {}
_SQUASHED: dict[str, ActivationProfile] = {}


def register_activation(profile: ActivationProfile, *, replace: bool = False) -> ActivationProfile:
    if SQ_SUFFIX in profile.name:
        raise ValueError(f"activation names may not contain {SQ_SUFFIX!r}")
    if profile.name in _REGISTRY and not replace:
        raise ValueError(f"activation {profile.name!r} already registered")
    _REGISTRY[profile.name] = profile
    _SQUASHED.pop(profile.name, None)
    return profile


def unregister_activation(name: str):
    _REGISTRY.pop(name, None)
    _SQUASHED.pop(name, None)


def get_activation(name: str) -> ActivationProfile:
    base = name[: -len(SQ_SUFFIX)] if name.endswith(SQ_SUFFIX) else name
    try:
        return _REGISTRY[base]
    except KeyError:
        raise UnknownActivationError(f"unknown activation {name!r}") from None


def registered_activations() -> list[str]:
    return sorted(_REGISTRY)


for _p in (
    ActivationProfile("sigmoid", sigmoid, (0.0, 1.0)),
    ActivationProfile("tanh", tanh, (-1.0, 1.0)),
    ActivationProfile("softsign", softsign, (-1.0, 1.0)),
    ActivationProfile("relu", relu, (0.0, math.inf)),
    ActivationProfile("elu", elu, (-1.0, math.inf)),
    ActivationProfile("softplus", softplus, (0.0, math.inf)),
    ActivationProfile("smoothrelu", make_smooth_relu(1.0), (0.0, math.inf)),
):
    register_activation(_p)

BUILTIN_ACTIVATIONS = tuple(registered_activations())


def _probe_points() -> np.ndarray:
    mags = np.concatenate([np.logspace(-8, 2.5, 4000), np.linspace(0, 60, 1001)])
    return np.unique(np.concatenate([-mags, mags]))


def _is_nondecreasing(y: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.all(np.diff(y) >= -tol))


def make_squashable(act: ActivationProfile | str) -> ActivationProfile:
    """Return ``act`` with a normalised form whose limits are exactly (0, 1).

    Bounded activations are renormalised affinely.  Activations with an
    infinite right limit go through ``t(1 - t(-x))`` first, whose limits
    are ``(a, t(1 - a))``.
    """
    if isinstance(act, str):
        act = get_activation(act)
    if act.normalized is not None:
        return act
    cached = _SQUASHED.get(act.name)
    if cached is not None and _REGISTRY.get(act.name) is act:
        return cached
    if not act.is_monotone:
        raise NotSquashableError(f"{act.name}: declared non-monotone")

    xs = _probe_points()
    with np.errstate(over="ignore"):
        if not _is_nondecreasing(np.asarray(act.raw(xs), dtype=float)):
            raise NotSquashableError(f"{act.name}: sampled values decrease")

    a, b = act.limits
    if not math.isfinite(a):
        raise NotSquashableError(f"{act.name}: left limit must be finite")
    raw = act.raw
    if math.isfinite(b):
        lo, hi = a, b
        construction = "affine"

        def inner(x):
            return raw(x)
    else:
        lo = a
        hi = float(raw(np.array([1.0 - a]))[0])
        construction = "composite"

        def inner(x):
            return raw(1.0 - raw(-np.asarray(x, dtype=float)))

    if not hi > lo:
        raise DegenerateLimitsError(f"{act.name}: limits {lo} and {hi} coincide")
    width = hi - lo

    def normalized(x):
        return np.clip((inner(x) - lo) / width, 0.0, 1.0)

    normalized.__name__ = f"{act.name}_normalized"
    with np.errstate(over="ignore"):
        ys = normalized(xs)
    if not _is_nondecreasing(ys):
        raise NotSquashableError(f"{act.name}: normalised form is not monotone")
    out = ActivationProfile(
        act.name, act.raw, act.limits, act.is_monotone, normalized, act.minmax, construction
    )
    _SQUASHED[act.name] = out
    return out


def squashed_limits(act: ActivationProfile) -> tuple[float, float]:
    """Limits of the un-normalised squashable form (before the affine map)."""
    a, b = act.limits
    if math.isfinite(b):
        return a, b
    return a, float(act.raw(np.array([1.0 - a]))[0])


@dataclass(frozen=True)
class ActImpl:
    fn: ArrayFn
    lo: float
    hi: float
    monotone: bool
    minmax: Callable | None


def resolve_activation(key: str) -> ActImpl:
    prof = get_activation(key)
    if key.endswith(SQ_SUFFIX):
        sq = make_squashable(prof)
        return ActImpl(sq.normalized, 0.0, 1.0, True, None)
    if prof.is_monotone:
        lo, hi = prof.limits
    else:
        lo, hi = -math.inf, math.inf
    return ActImpl(prof.raw, lo, hi, prof.is_monotone, prof.minmax)


# ---------------------------------------------------------------------------
# Graphs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExprNode:
    """Read-only view of one node of an :class:`ExprGraph`."""

    id: int
    kind: str
    children: tuple[int, ...] = ()
    value: float | None = None
    index: int | None = None
    activation: str | None = None


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ExprGraph:
    """Immutable network DAG stored as parallel columns.

    ``left`` holds the input index for input nodes and the (first) child for
    sum, scale and activation nodes; ``right`` is the second child of a sum.
    ``coef`` is the constant of const and scale nodes.  Node ids are dense
    and every node references only smaller ids.
    """

    input_dim: int
    kind: np.ndarray
    left: np.ndarray
    right: np.ndarray
    coef: np.ndarray
    act: np.ndarray
    level: np.ndarray
    outputs: tuple[int, ...]
    activations: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("kind", "left", "right", "coef", "act", "level"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        object.__setattr__(self, "outputs", tuple(int(o) for o in self.outputs))
        self._validate()

    def _validate(self):
        n = len(self.kind)
        if self.input_dim < 1:
            raise GraphStructureError("input_dim must be positive")
        if not self.outputs:
            raise GraphStructureError("graph needs at least one output")
        if any(o < 0 or o >= n for o in self.outputs):
            raise GraphStructureError("output id out of range")
        ids = np.arange(n)
        k = self.kind
        if np.any((k < CONST) | (k > ACT)):
            raise GraphStructureError("unknown node kind")
        inp = k == INPUT
        if np.any((self.left[inp] < 0) | (self.left[inp] >= self.input_dim)):
            raise GraphStructureError("input index out of range")
        has_child = (k == SUM) | (k == SCALE) | (k == ACT)
        if np.any((self.left[has_child] < 0) | (self.left[has_child] >= ids[has_child])):
            raise GraphStructureError("child must reference an earlier node")
        sums = k == SUM
        if np.any((self.right[sums] < 0) | (self.right[sums] >= ids[sums])):
            raise GraphStructureError("child must reference an earlier node")
        coefs = (k == CONST) | (k == SCALE)
        if not np.all(np.isfinite(self.coef[coefs])):
            raise GraphStructureError("constants and scale factors must be finite")
        acts = k == ACT
        if np.any((self.act[acts] < 0) | (self.act[acts] >= len(self.activations))):
            raise GraphStructureError("activation index out of range")
        for key in self.activations:
            get_activation(key)

    def __len__(self) -> int:
        return len(self.kind)

    @property
    def num_outputs(self) -> int:
        return len(self.outputs)

    def node(self, i: int) -> ExprNode:
        k = int(self.kind[i])
        if k == CONST:
            return ExprNode(i, "const", value=float(self.coef[i]))
        if k == INPUT:
            return ExprNode(i, "input", index=int(self.left[i]))
        if k == SUM:
            return ExprNode(i, "sum", (int(self.left[i]), int(self.right[i])))
        if k == SCALE:
            return ExprNode(i, "scale", (int(self.left[i]),), value=float(self.coef[i]))
        return ExprNode(i, "act", (int(self.left[i]),), activation=self.activations[self.act[i]])

    def nodes(self) -> Iterable[ExprNode]:
        return (self.node(i) for i in range(len(self)))

    def with_outputs(self, outputs: Sequence[int]) -> "ExprGraph":
        """Same nodes, different output list (arrays are shared)."""
        return ExprGraph(
            self.input_dim, self.kind, self.left, self.right, self.coef, self.act,
            self.level, tuple(outputs), self.activations,
        )

    def activation_count(self) -> int:
        return int(np.count_nonzero(self.kind == ACT))

    @cached_property
    def schedule(self) -> list[tuple[int, int, np.ndarray]]:
        """Evaluation plan: ``(kind, act_index, node_ids)`` grouped by level."""
        order = np.lexsort((self.act, self.kind, self.level))
        lv, kd, ac = self.level[order], self.kind[order], self.act[order]
        brk = np.flatnonzero((np.diff(lv) != 0) | (np.diff(kd) != 0) | (np.diff(ac) != 0)) + 1
        starts = np.concatenate([[0], brk])
        ends = np.concatenate([brk, [len(order)]])
        return [
            (int(kd[s]), int(ac[s]) if kd[s] == ACT else -1, order[s:e])
            for s, e in zip(starts, ends)
        ]

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        nodes = []
        for i in range(len(self)):
            k = int(self.kind[i])
            if k == CONST:
                payload = {"c": float(self.coef[i]).hex()}
            elif k == INPUT:
                payload = {"i": int(self.left[i])}
            elif k == SUM:
                payload = {"args": [int(self.left[i]), int(self.right[i])]}
            elif k == SCALE:
                payload = {"c": float(self.coef[i]).hex(), "arg": int(self.left[i])}
            else:
                payload = {"act": self.activations[self.act[i]], "arg": int(self.left[i])}
            nodes.append({"id": i, "kind": KIND_NAMES[k], "payload": payload})
        return {
            "format": "iua-exprgraph/1",
            "input_dim": self.input_dim,
            "activations": list(self.activations),
            "nodes": nodes,
            "outputs": list(self.outputs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExprGraph":
        nodes = d["nodes"]
        n = len(nodes)
        acts = list(d.get("activations", []))
        act_ix = {k: j for j, k in enumerate(acts)}
        kind = np.zeros(n, np.int8)
        left = np.full(n, -1, np.int64)
        right = np.full(n, -1, np.int64)
        coef = np.zeros(n)
        act = np.full(n, -1, np.int32)
        for pos, rec in enumerate(nodes):
            if rec.get("id", pos) != pos:
                raise GraphStructureError("node ids must be dense and in order")
            try:
                k = KIND_NAMES.index(rec["kind"])
            except ValueError:
                raise GraphStructureError(f"unknown node kind {rec['kind']!r}") from None
            p = rec["payload"]
            kind[pos] = k
            if k == CONST:
                coef[pos] = _parse_float(p["c"])
            elif k == INPUT:
                left[pos] = int(p["i"])
            elif k == SUM:
                left[pos], right[pos] = (int(v) for v in p["args"])
            elif k == SCALE:
                coef[pos] = _parse_float(p["c"])
                left[pos] = int(p["arg"])
            else:
                if p["act"] not in act_ix:
                    act_ix[p["act"]] = len(acts)
                    acts.append(p["act"])
                act[pos] = act_ix[p["act"]]
                left[pos] = int(p["arg"])
        level = _levels(kind, left, right)
        return cls(int(d["input_dim"]), kind, left, right, coef, act, level,
                   tuple(d["outputs"]), tuple(acts))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ExprGraph":
        return cls.from_dict(json.loads(text))


def _parse_float(v) -> float:
    if isinstance(v, str):
        try:
            return float.fromhex(v)
        except ValueError:
            return float(v)
    return float(v)


def _levels(kind, left, right) -> np.ndarray:
    n = len(kind)
    level = np.zeros(n, np.int32)
    for i in range(n):
        k = kind[i]
        if k in (SUM, SCALE, ACT) and not (0 <= left[i] < i and (k != SUM or 0 <= right[i] < i)):
            raise GraphStructureError("child must reference an earlier node")
        if k == SUM:
            level[i] = 1 + max(level[left[i]], level[right[i]])
        elif k == SCALE or k == ACT:
            level[i] = 1 + level[left[i]]
    return level


class GraphBuilder:
    """Append-only constructor for :class:`ExprGraph`.

    The scalar methods hash-cons their nodes, so asking twice for the same
    expression returns the same id.  The ``*_many`` methods append whole
    arrays of nodes without pooling; they are meant for bulk constructions
    whose nodes are distinct by design.
    """

    def __init__(self, input_dim: int, *, cse: bool = True):
        if input_dim < 1:
            raise GraphStructureError("input_dim must be positive")
        self.input_dim = input_dim
        self.cse = cse
        self._n = 0
        cap = 64
        self._kind = np.zeros(cap, np.int8)
        self._left = np.full(cap, -1, np.int64)
        self._right = np.full(cap, -1, np.int64)
        self._coef = np.zeros(cap)
        self._act = np.full(cap, -1, np.int32)
        self._level = np.zeros(cap, np.int32)
        self._pool: dict[tuple, int] = {}
        self._acts: list[str] = []
        self._act_ix: dict[str, int] = {}

    def __len__(self) -> int:
        return self._n

    def _reserve(self, extra: int):
        need = self._n + extra
        cap = len(self._kind)
        if need <= cap:
            return
        while cap < need:
            cap *= 2
        for name, fill in (("_kind", 0), ("_left", -1), ("_right", -1),
                           ("_coef", 0.0), ("_act", -1), ("_level", 0)):
            old = getattr(self, name)
            new = np.full(cap, fill, old.dtype)
            new[: self._n] = old[: self._n]
            setattr(self, name, new)

    def _check_ids(self, *ids):
        for i in ids:
            if not 0 <= i < self._n:
                raise GraphStructureError(f"node id {i} does not exist yet")

    def _append(self, kind, left=-1, right=-1, coef=0.0, act=-1) -> int:
        key = None
        if self.cse:
            key = (kind, left, right, float(coef).hex() if kind in (CONST, SCALE) else 0, act)
            hit = self._pool.get(key)
            if hit is not None:
                return hit
        self._reserve(1)
        i = self._n
        self._kind[i] = kind
        self._left[i] = left
        self._right[i] = right
        self._coef[i] = coef
        self._act[i] = act
        if kind == SUM:
            self._level[i] = 1 + max(self._level[left], self._level[right])
        elif kind in (SCALE, ACT):
            self._level[i] = 1 + self._level[left]
        self._n += 1
        if key is not None:
            self._pool[key] = i
        return i

    def _act_index(self, key: str) -> int:
        j = self._act_ix.get(key)
        if j is None:
            resolve_activation(key)
            j = len(self._acts)
            self._acts.append(key)
            self._act_ix[key] = j
        return j

    # -- scalar constructors --------------------------------------------

    def const(self, c: float) -> int:
        c = float(c)
        if not math.isfinite(c):
            raise GraphStructureError("constants must be finite")
        return self._append(CONST, coef=c + 0.0)

    def input(self, i: int) -> int:
        if not 0 <= i < self.input_dim:
            raise GraphStructureError(f"input index {i} outside 0..{self.input_dim - 1}")
        return self._append(INPUT, left=int(i))

    def add(self, a: int, b: int) -> int:
        self._check_ids(a, b)
        a, b = min(a, b), max(a, b)
        return self._append(SUM, left=a, right=b)

    def scale(self, c: float, a: int) -> int:
        c = float(c)
        if not math.isfinite(c):
            raise GraphStructureError("scale factors must be finite")
        self._check_ids(a)
        return self._append(SCALE, left=a, coef=c + 0.0)

    def act(self, key: str, a: int) -> int:
        self._check_ids(a)
        return self._append(ACT, left=a, act=self._act_index(key))

    def neg(self, a: int) -> int:
        return self.scale(-1.0, a)

    def sub(self, a: int, b: int) -> int:
        return self.add(a, self.neg(b))

    def add_const(self, a: int, c: float) -> int:
        return self.add(a, self.const(c))

    def total(self, ids: Sequence[int] | np.ndarray) -> int:
        """Balanced binary sum of ``ids`` (depth grows logarithmically)."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            raise GraphStructureError("cannot sum an empty list of nodes")
        if ids.size > 64:
            return int(self.sum_rows(ids[None, :])[0])
        cur = [int(i) for i in ids]
        while len(cur) > 1:
            nxt = [self.add(cur[j], cur[j + 1]) for j in range(0, len(cur) - 1, 2)]
            if len(cur) % 2:
                nxt.append(cur[-1])
            cur = nxt
        return cur[0]

    # -- bulk constructors -----------------------------------------------

    def _append_many(self, kind, left, right, coef, act) -> np.ndarray:
        left = np.asarray(left, np.int64)
        n = left.size
        if n == 0:
            return np.zeros(0, np.int64)
        if np.any((left < 0) | (left >= self._n)):
            raise GraphStructureError("bulk child id out of range")
        right = np.broadcast_to(np.asarray(right, np.int64), (n,))
        if kind == SUM and np.any((right < 0) | (right >= self._n)):
            raise GraphStructureError("bulk child id out of range")
        coef = np.broadcast_to(np.asarray(coef, float), (n,))
        if not np.all(np.isfinite(coef)):
            raise GraphStructureError("scale factors must be finite")
        self._reserve(n)
        s, e = self._n, self._n + n
        self._kind[s:e] = kind
        self._left[s:e] = left
        self._right[s:e] = right
        self._coef[s:e] = coef
        self._act[s:e] = act
        lv = self._level[left]
        if kind == SUM:
            lv = np.maximum(lv, self._level[right])
        self._level[s:e] = lv + 1
        self._n = e
        return np.arange(s, e, dtype=np.int64)

    def add_many(self, a, b) -> np.ndarray:
        return self._append_many(SUM, a, b, 0.0, -1)

    def scale_many(self, c, a) -> np.ndarray:
        return self._append_many(SCALE, a, -1, c, -1)

    def act_many(self, key: str, a) -> np.ndarray:
        return self._append_many(ACT, a, -1, 0.0, self._act_index(key))

    def add_const_many(self, a, c: float) -> np.ndarray:
        a = np.asarray(a, np.int64)
        return self.add_many(a, np.full(a.shape, self.const(c), np.int64))

    def sum_rows(self, ids: np.ndarray) -> np.ndarray:
        """Balanced sum of every row of a 2-D id matrix, vectorised over rows."""
        cur = np.asarray(ids, np.int64)
        if cur.ndim != 2 or cur.shape[1] == 0:
            raise GraphStructureError("sum_rows needs a non-empty 2-D id matrix")
        while cur.shape[1] > 1:
            w = cur.shape[1]
            half = w // 2
            paired = self.add_many(cur[:, 0:2 * half:2].ravel(), cur[:, 1:2 * half:2].ravel())
            paired = paired.reshape(cur.shape[0], half)
            if w % 2:
                paired = np.concatenate([paired, cur[:, -1:]], axis=1)
            cur = paired
        return cur[:, 0].copy()

    def build(self, outputs: int | Sequence[int]) -> ExprGraph:
        if isinstance(outputs, (int, np.integer)):
            outputs = [int(outputs)]
        n = self._n
        return ExprGraph(
            self.input_dim,
            self._kind[:n].copy(), self._left[:n].copy(), self._right[:n].copy(),
            self._coef[:n].copy(), self._act[:n].copy(), self._level[:n].copy(),
            tuple(int(o) for o in outputs), tuple(self._acts),
        )


# ---------------------------------------------------------------------------
# Concrete evaluation
# ---------------------------------------------------------------------------


def _chunks(total: int, n_nodes: int):
    step = max(1, EVAL_BUDGET // max(n_nodes, 1))
    for s in range(0, total, step):
        yield s, min(total, s + step)


def stack_graphs(graphs: Sequence[ExprGraph]) -> ExprGraph:
    """One multi-output graph computing every graph's outputs on a shared input."""
    graphs = list(graphs)
    if not graphs:
        raise GraphStructureError("nothing to stack")
    m = graphs[0].input_dim
    if any(g.input_dim != m for g in graphs):
        raise ShapeError("stacked graphs must share the input dimension")
    acts: list[str] = []
    cols = {k: [] for k in ("kind", "left", "right", "coef", "act", "level")}
    outputs: list[int] = []
    off = 0
    for g in graphs:
        for a in g.activations:
            if a not in acts:
                acts.append(a)
        remap = np.array([acts.index(a) for a in g.activations] + [-1], np.int64)
        has_child = (g.kind == SUM) | (g.kind == SCALE) | (g.kind == ACT)
        cols["kind"].append(g.kind)
        cols["left"].append(np.where(has_child, g.left + off, g.left))
        cols["right"].append(np.where(g.kind == SUM, g.right + off, g.right))
        cols["coef"].append(g.coef)
        cols["act"].append(np.where(g.kind == ACT, remap[g.act], -1))
        cols["level"].append(g.level)
        outputs += [o + off for o in g.outputs]
        off += len(g)
    return ExprGraph(m, *(np.concatenate(cols[k]) for k in cols), tuple(outputs), tuple(acts))


def eval_batch(graph: ExprGraph, xs) -> np.ndarray:
    """Evaluate ``graph`` at every row of ``xs``; returns shape (N, outputs)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != graph.input_dim:
        raise InputArityError(
            f"expected points of dimension {graph.input_dim}, got shape {xs.shape}"
        )
    if not np.all(np.isfinite(xs)):
        raise InputArityError("inputs must be finite")
    out = np.empty((xs.shape[0], graph.num_outputs))
    impls = [resolve_activation(k) for k in graph.activations]
    for s, e in _chunks(xs.shape[0], len(graph)):
        out[s:e] = _eval_chunk(graph, xs[s:e], impls)
    return out


def _eval_chunk(graph: ExprGraph, xs: np.ndarray, impls) -> np.ndarray:
    vals = np.empty((len(graph), xs.shape[0]))
    coef, left, right = graph.coef, graph.left, graph.right
    with np.errstate(over="ignore", invalid="ignore"):
        for kind, ai, ids in graph.schedule:
            if kind == CONST:
                vals[ids] = coef[ids, None]
                continue
            if kind == INPUT:
                vals[ids] = xs.T[left[ids]]
                continue
            if kind == SUM:
                r = vals[left[ids]] + vals[right[ids]]
            elif kind == SCALE:
                r = coef[ids, None] * vals[left[ids]]
            else:
                r = impls[ai].fn(vals[left[ids]])
            if not np.all(np.isfinite(r)):
                raise NumericOverflowError(
                    f"non-finite intermediate value at a {KIND_NAMES[kind]} node"
                )
            vals[ids] = r
    return vals[list(graph.outputs)].T


def eval(graph: ExprGraph, x) -> np.ndarray:  # noqa: A001 - shadows the builtin on purpose
    """Evaluate ``graph`` at a single point; returns one value per output."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputArityError("eval expects a single point; use eval_batch for many")
    return eval_batch(graph, x[None, :])[0]


def evaluate_reference(graph: ExprGraph, x) -> list[float]:
    """Slow node-by-node recursive evaluator, kept as an independent check."""
    x = [float(v) for v in x]
    if len(x) != graph.input_dim:
        raise InputArityError("dimension mismatch")
    impls = [resolve_activation(k) for k in graph.activations]
    memo: dict[int, float] = {}

    def go(i: int) -> float:
        if i in memo:
            return memo[i]
        k = graph.kind[i]
        if k == CONST:
            v = float(graph.coef[i])
        elif k == INPUT:
            v = x[graph.left[i]]
        elif k == SUM:
            v = go(int(graph.left[i])) + go(int(graph.right[i]))
        elif k == SCALE:
            v = float(graph.coef[i]) * go(int(graph.left[i]))
        else:
            v = float(impls[graph.act[i]].fn(np.array([go(int(graph.left[i]))]))[0])
        memo[i] = v
        return v

    for i in range(len(graph)):  # iterative warm-up keeps recursion shallow
        go(i)
    return [memo[o] for o in graph.outputs]


# ---------------------------------------------------------------------------
# Rewrites and small constructions
# ---------------------------------------------------------------------------


def lower_squashed(graph: ExprGraph) -> ExprGraph:
    """Rewrite every normalised activation into raw activations.

    The result uses only the grammar's primitives and the raw function,
    e.g. ``relu:sq`` becomes ``relu(1 - relu(-x))``.
    """
    b = GraphBuilder(graph.input_dim, cse=False)
    new = np.empty(len(graph), np.int64)
    for i in range(len(graph)):
        k = int(graph.kind[i])
        l, r = int(graph.left[i]), int(graph.right[i])
        if k == CONST:
            new[i] = b.const(graph.coef[i])
        elif k == INPUT:
            new[i] = b.input(l)
        elif k == SUM:
            new[i] = b.add(int(new[l]), int(new[r]))
        elif k == SCALE:
            new[i] = b.scale(graph.coef[i], int(new[l]))
        else:
            key = graph.activations[graph.act[i]]
            child = int(new[l])
            if not key.endswith(SQ_SUFFIX):
                new[i] = b.act(key, child)
                continue
            prof = make_squashable(key)
            raw = prof.name
            lo, hi = squashed_limits(prof)
            if prof.construction == "affine":
                core = b.act(raw, child)
            else:
                inner = b.act(raw, b.neg(child))
                core = b.act(raw, b.add(b.const(1.0), b.neg(inner)))
            new[i] = b.scale(1.0 / (hi - lo), b.add_const(core, -lo))
    return b.build([int(new[o]) for o in graph.outputs])


def boolean_gate(builder: GraphBuilder, kind: str, operands: Sequence[int], step=None) -> int:
    """Encode NOT / AND / OR over nodes whose values sit near {0, 1}.

    ``step`` is a calibrated step approximator (see
    :class:`iua.squash_calib.StepApprox`); AND and OR need one.
    """
    kind = kind.upper()
    if kind == "NOT":
        (x,) = operands
        return builder.add(builder.const(1.0), builder.neg(x))
    if kind not in ("AND", "OR"):
        raise ValueError(f"unknown gate {kind!r}")
    if step is None:
        raise CalibrationRequiredError(f"{kind} needs a calibrated step approximator")
    x, y = operands
    center = 1.5 if kind == "AND" else 0.5
    return step.apply(builder, builder.add(x, y), center)


def sigma_example_graph() -> ExprGraph:
    """``sigmoid(x1 + 0.5 * x2)``, a two-input demonstration graph."""
    b = GraphBuilder(2)
    out = b.act("sigmoid", b.add(b.input(0), b.scale(0.5, b.input(1))))
    return b.build(out)
