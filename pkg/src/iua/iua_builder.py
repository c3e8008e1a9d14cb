"""Construction of interval universal approximation networks.

Given a Lipschitz target ``f`` on a box ``C`` and a tolerance ``delta``, the
builder slices the range of ``f`` into bands of height ``tau = delta / 3``,
lays an epsilon lattice over ``C`` (grown by one cell on every side),
certifies for every lattice box ``G`` a lower bound on ``min f(G ∩ C)``, and
assembles

    N(x) = shift + tau * sum_i t(mu * (sum_{G in 𝒢_i} N_G(x) - 0.5))

where ``𝒢_i`` holds the boxes whose certified minimum clears ``(i+1) tau``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, GridExplosionError, LipschitzError
from .interval import IntervalBox
from .nn_expr import ExprGraph, GraphBuilder, get_activation, make_squashable
from .squash_calib import Calibration, GridBox, calibrate

DEFAULT_MAX_BOXES = 10**6
EPS_CAP = 0.49
# oversampling of each lattice cell when certifying box minima
CELL_SAMPLES = 8
# sample budget for the global min/max over C
GLOBAL_SAMPLES = 2_000_000


def max_boxes_from_env(default: int = DEFAULT_MAX_BOXES) -> int:
    v = os.environ.get("IUA_MAX_BOXES")
    return int(v) if v else default


# ---------------------------------------------------------------------------
# Target functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetFunction:
    """A vectorised oracle ``f`` over (N, m) arrays, its domain and Lipschitz constant.

    ``lipschitz`` is with respect to the ∞-norm on inputs.
    """

    oracle: Callable[[np.ndarray], np.ndarray]
    domain: IntervalBox
    lipschitz: float
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lipschitz >= 0 or not math.isfinite(self.lipschitz):
            raise LipschitzError("Lipschitz constant must be finite and non-negative")

    @property
    def dim(self) -> int:
        return self.domain.dim

    def __call__(self, xs) -> np.ndarray:
        xs = np.asarray(xs, float)
        single = xs.ndim == 1
        ys = np.asarray(self.oracle(np.atleast_2d(xs)), float).reshape(-1)
        return ys[0] if single else ys

    def check_domain(self, xs, tol: float = 1e-12):
        xs = np.atleast_2d(np.asarray(xs, float))
        lo, hi = self.domain.lo, self.domain.hi
        if np.any(xs < lo - tol) or np.any(xs > hi + tol):
            raise DomainError("point outside the target's domain")

    def validate(self, n: int = 1000, seed: int = 0, rtol: float = 1e-9) -> float:
        """Sample-check finiteness and the declared Lipschitz constant.

        Returns the largest observed slope.
        """
        rng = np.random.default_rng(seed)
        xs = self.domain.sample(rng, n)
        ys = self(xs)
        if not np.all(np.isfinite(ys)):
            raise DomainError(f"{self.name}: oracle returned non-finite values")
        i = rng.integers(0, n, 4 * n)
        j = rng.integers(0, n, 4 * n)
        d = np.abs(xs[i] - xs[j]).max(axis=1)
        keep = d > 0
        slope = float((np.abs(ys[i] - ys[j])[keep] / d[keep]).max(initial=0.0))
        if slope > self.lipschitz * (1 + rtol) + rtol:
            raise LipschitzError(
                f"{self.name}: observed slope {slope:.6g} exceeds declared L={self.lipschitz}"
            )
        return slope

    def describe(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "domain": self.domain.to_dict()["dims"],
            "lipschitz": self.lipschitz,
        }


def sin2x(domain: IntervalBox | None = None) -> TargetFunction:
    """``sin(2x) + 1`` on [0, 5] with L = 2."""
    dom = domain or IntervalBox.from_bounds([0.0], [5.0])
    return TargetFunction(lambda xs: np.sin(2.0 * xs[:, 0]) + 1.0, dom, 2.0, "sin2x")


def quadratic2d(domain: IntervalBox | None = None) -> TargetFunction:
    """``x^2 + y^2``; L is the ∞-norm constant ``sum_i 2 max|x_i|``."""
    dom = domain or IntervalBox.from_bounds([0.0, 0.0], [1.0, 1.0])
    if dom.dim != 2:
        raise DomainError("quadratic2d needs a 2-D domain")
    L = float(sum(2.0 * max(abs(d.lo), abs(d.hi)) for d in dom.dims))
    return TargetFunction(lambda xs: (xs**2).sum(axis=1), dom, L, "quadratic2d")


def constant(c: float, domain: IntervalBox | None = None) -> TargetFunction:
    dom = domain or IntervalBox.from_bounds([0.0], [1.0])
    c = float(c)
    return TargetFunction(lambda xs: np.full(xs.shape[0], c), dom, 0.0, "constant", {"c": c})


def from_csv(path: str, lipschitz: float) -> TargetFunction:
    """Piecewise-linear interpolant of gridded samples.

    Every row holds the coordinates followed by the value; the coordinates
    must form a full tensor grid.
    """
    from scipy.interpolate import RegularGridInterpolator

    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError:
        data = np.array([[float(v) for v in r] for r in rows[1:]])  # header row
    if data.ndim != 2 or data.shape[1] < 2:
        raise DomainError("CSV needs coordinate columns followed by a value column")
    m = data.shape[1] - 1
    axes = [np.unique(data[:, d]) for d in range(m)]
    shape = tuple(len(a) for a in axes)
    if int(np.prod(shape)) != len(data):
        raise DomainError("CSV coordinates do not form a full grid")
    idx = tuple(np.searchsorted(axes[d], data[:, d]) for d in range(m))
    values = np.full(shape, np.nan)
    values[idx] = data[:, -1]
    interp = RegularGridInterpolator(axes, values, method="linear")
    dom = IntervalBox.from_bounds([a[0] for a in axes], [a[-1] for a in axes])

    def oracle(xs):
        return interp(np.clip(xs, dom.lo, dom.hi))

    return TargetFunction(oracle, dom, float(lipschitz), "csv", {"path": os.path.abspath(path)})


BUILTIN_TARGETS = {"sin2x": sin2x, "quadratic2d": quadratic2d}


def target_from_spec(spec: dict) -> TargetFunction:
    """Rebuild a target from the dictionary written by :meth:`TargetFunction.describe`."""
    dom = IntervalBox.from_dict({"dims": spec["domain"]})
    name = spec["name"]
    if name in BUILTIN_TARGETS:
        tf = BUILTIN_TARGETS[name](dom)
        if float(spec.get("lipschitz", tf.lipschitz)) != tf.lipschitz:
            tf = TargetFunction(tf.oracle, dom, float(spec["lipschitz"]), name)
        return tf
    if name == "constant":
        return constant(spec["params"]["c"], dom)
    if name == "csv":
        return from_csv(spec["params"]["path"], spec["lipschitz"])
    raise DomainError(f"cannot rebuild target {name!r}")


# ---------------------------------------------------------------------------
# Slicing and parameters
# ---------------------------------------------------------------------------


def slice_value(tf: TargetFunction, i: int, x, tau: float, shift: float = 0.0):
    """The i-th slice ``f_i``: ``f - shift`` clamped to the band ``[i tau, (i+1) tau]``, minus ``i tau``."""
    if i < 0:
        raise ValueError("slice index must be non-negative")
    tf.check_domain(x)
    v = tf(x) - shift
    return np.clip(v - i * tau, 0.0, tau)


def choose_epsilon(tf: TargetFunction, tau: float, n_check: int = 1000) -> float:
    """Largest lattice spacing with ``L * eps <= tau / 2`` (capped below 0.5)."""
    if tf.lipschitz > 0:
        return min(EPS_CAP, tau / (2.0 * tf.lipschitz))
    ys = tf(tf.domain.sample(np.random.default_rng(0), n_check))
    if np.ptp(ys) > 0:
        raise LipschitzError("declared L = 0 but the target is not constant on samples")
    return EPS_CAP


# ---------------------------------------------------------------------------
# Lattice and box enumeration
# ---------------------------------------------------------------------------


def _pairs(n_cells: int) -> tuple[np.ndarray, np.ndarray]:
    """All line-index pairs ``(j, j')`` with ``0 <= j < j' <= n_cells``, row-major."""
    return np.triu_indices(n_cells + 1, k=1)


@dataclass(frozen=True)
class Lattice:
    """Epsilon lattice over ``C`` grown by one cell per side.

    Line ``k`` of dimension ``d`` sits at ``domain.lo[d] + (k - 1) * epsilon``
    for ``k = 0 .. n_cells[d]``; line 1 is the lower face of ``C``.  A box of
    𝒢 picks one pair of lines per dimension; its id is the mixed-radix number
    of its per-dimension pair indices (last dimension fastest).
    """

    domain: IntervalBox
    epsilon: float
    n_cells: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.n_cells)

    @property
    def origin(self) -> np.ndarray:
        return self.domain.lo - self.epsilon

    def lines(self, d: int) -> np.ndarray:
        return self.domain.lo[d] + (np.arange(self.n_cells[d] + 1) - 1.0) * self.epsilon

    @property
    def pairs_per_dim(self) -> tuple[int, ...]:
        return tuple(n * (n + 1) // 2 for n in self.n_cells)

    @property
    def num_boxes(self) -> int:
        return int(np.prod([int(p) for p in self.pairs_per_dim], dtype=object))

    def decode(self, ids) -> np.ndarray:
        """Box ids to per-dimension pair indices, shape (len(ids), m)."""
        ids = np.asarray(ids, np.int64)
        out = np.empty((ids.size, self.dim), np.int64)
        rest = ids.copy()
        for d in range(self.dim - 1, -1, -1):
            p = self.pairs_per_dim[d]
            out[:, d] = rest % p
            rest //= p
        return out

    def encode(self, pair_idx: np.ndarray) -> np.ndarray:
        pair_idx = np.atleast_2d(pair_idx)
        ids = np.zeros(pair_idx.shape[0], np.int64)
        for d in range(self.dim):
            ids = ids * self.pairs_per_dim[d] + pair_idx[:, d]
        return ids

    def line_pairs(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        return _pairs(self.n_cells[d])

    def box_bounds(self, ids) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of the given boxes, each shape (len(ids), m)."""
        pi = self.decode(ids)
        lo = np.empty(pi.shape)
        hi = np.empty(pi.shape)
        for d in range(self.dim):
            j, j2 = self.line_pairs(d)
            ln = self.lines(d)
            lo[:, d] = ln[j[pi[:, d]]]
            hi[:, d] = ln[j2[pi[:, d]]]
        return lo, hi

    def box(self, box_id: int) -> GridBox:
        lo, hi = self.box_bounds([box_id])
        return GridBox(tuple(zip(lo[0], hi[0])))

    def boxes(self):
        """Iterate over every box of 𝒢 (use only for small lattices)."""
        for i in range(self.num_boxes):
            yield self.box(i)

    def box_id(self, line_lo: Sequence[int], line_hi: Sequence[int]) -> int:
        pi = []
        for d, (j, j2) in enumerate(zip(line_lo, line_hi)):
            n = self.n_cells[d]
            if not 0 <= j < j2 <= n:
                raise DomainError("line indices outside the lattice")
            # row-major position of (j, j2) in the strict upper triangle
            pi.append(j * (2 * n + 1 - j) // 2 + (j2 - j - 1))
        return int(self.encode(np.array([pi]))[0])

    def to_dict(self) -> dict:
        return {
            "origin": self.origin.tolist(),
            "domain": self.domain.to_dict()["dims"],
            "epsilon": self.epsilon,
            "n_cells": list(self.n_cells),
            "num_boxes": self.num_boxes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Lattice":
        return cls(IntervalBox.from_dict({"dims": d["domain"]}), float(d["epsilon"]),
                   tuple(int(n) for n in d["n_cells"]))


def build_grid(C: IntervalBox, epsilon: float, max_boxes: int | None = None) -> Lattice:
    """Lattice anchored at C's lower corner; refuses grids with too many boxes."""
    if max_boxes is None:
        max_boxes = max_boxes_from_env()
    widths = C.widths
    if not epsilon > 0 or np.any(widths <= epsilon):
        raise DomainError(f"epsilon={epsilon} must be positive and below every side of C")
    n_cells = []
    for w in widths:
        r = w / epsilon
        cells = int(round(r)) if abs(r - round(r)) < 1e-9 * max(1.0, r) else math.ceil(r)
        n_cells.append(cells + 2)
    lat = Lattice(C, float(epsilon), tuple(n_cells))
    if lat.num_boxes > max_boxes:
        raise GridExplosionError(
            f"|𝒢| = {lat.num_boxes} exceeds the cap {max_boxes}; "
            "increase delta (hence epsilon) or raise IUA_MAX_BOXES"
        )
    return lat


def neighborhood(G: GridBox, epsilon: float) -> GridBox:
    return G.neighborhood(epsilon)


def enclosing_grid_box(lat: Lattice, B: IntervalBox) -> GridBox:
    """Smallest lattice box containing ``B``; ``nu(B)`` when ``B`` is itself a lattice box."""
    lo_idx, hi_idx, on_lattice = [], [], True
    eps = lat.epsilon
    for d in range(lat.dim):
        org = lat.lines(d)[0]
        rl = (B.dims[d].lo - org) / eps
        rh = (B.dims[d].hi - org) / eps
        jl = round(rl) if abs(rl - round(rl)) < 1e-9 else math.floor(rl)
        jh = round(rh) if abs(rh - round(rh)) < 1e-9 else math.ceil(rh)
        exact = abs(rl - jl) < 1e-9 and abs(rh - jh) < 1e-9 and jh > jl
        on_lattice &= exact
        if jh == jl:
            jh = jl + 1
        lo_idx.append(jl)
        hi_idx.append(jh)
    if on_lattice:
        lo_idx = [j - 1 for j in lo_idx]
        hi_idx = [j + 1 for j in hi_idx]
    ranges = []
    for d in range(lat.dim):
        j, j2 = max(lo_idx[d], 0), min(hi_idx[d], lat.n_cells[d])
        ln = lat.lines(d)
        ranges.append((ln[j], ln[j2]))
    return GridBox(tuple(ranges))


# ---------------------------------------------------------------------------
# Certified minima
# ---------------------------------------------------------------------------


def _tensor_eval(tf: TargetFunction, axes: Sequence[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return tf(pts).reshape(tuple(len(a) for a in axes))


def certified_box_min(tf: TargetFunction, G, samples_per_axis: int = 16) -> float:
    """Sound lower bound on ``min f(G ∩ C)``: sampled minimum minus ``L h``.

    ``h = side / samples_per_axis`` (largest side).  Returns ``inf`` when
    ``G`` misses ``C``.
    """
    lo = np.maximum(np.asarray(G.lo, float), tf.domain.lo)
    hi = np.minimum(np.asarray(G.hi, float), tf.domain.hi)
    if np.any(lo > hi):
        return math.inf
    n = max(1, int(samples_per_axis))
    axes = [np.linspace(a, b, n + 1) if b > a else np.array([a]) for a, b in zip(lo, hi)]
    h = float(np.max(hi - lo)) / n
    return float(_tensor_eval(tf, axes).min()) - tf.lipschitz * h


def certified_box_max(tf: TargetFunction, G, samples_per_axis: int = 16) -> float:
    lo = np.maximum(np.asarray(G.lo, float), tf.domain.lo)
    hi = np.minimum(np.asarray(G.hi, float), tf.domain.hi)
    if np.any(lo > hi):
        return -math.inf
    n = max(1, int(samples_per_axis))
    axes = [np.linspace(a, b, n + 1) if b > a else np.array([a]) for a, b in zip(lo, hi)]
    h = float(np.max(hi - lo)) / n
    return float(_tensor_eval(tf, axes).max()) + tf.lipschitz * h


def global_range(tf: TargetFunction, spacing: float | None = None) -> tuple[float, float, float]:
    """Certified ``(min, max, gap)`` of ``f`` over the whole domain."""
    w = tf.domain.widths
    m = tf.dim
    if spacing is None:
        spacing = 1e-3
    # keep the tensor grid within budget
    spacing = max(spacing, float(np.max(w)) / (GLOBAL_SAMPLES ** (1.0 / m) - 1))
    axes = []
    h = 0.0
    for d in range(m):
        n = max(1, math.ceil(w[d] / spacing))
        axes.append(np.linspace(tf.domain.lo[d], tf.domain.hi[d], n + 1))
        h = max(h, w[d] / n)
    vals = _tensor_eval(tf, axes)
    gap = tf.lipschitz * h
    return float(vals.min()) - gap, float(vals.max()) + gap, gap


def _cell_samples(lat: Lattice, d: int, per_cell: int):
    """Sample coordinates for every lattice cell of dimension ``d`` clipped to C.

    Returns the coordinates, start offsets of each non-empty cell's block,
    a mask of non-empty cells and the spacing bound ``h``.
    """
    a, b = lat.domain.dims[d].lo, lat.domain.dims[d].hi
    ln = lat.lines(d)
    ln[1] = a
    coords, starts, nonempty = [], [], []
    h = 0.0
    pos = 0
    for c in range(lat.n_cells[d]):
        lo, hi = max(ln[c], a), min(ln[c + 1], b)
        if lo > hi:
            nonempty.append(False)
            continue
        k = per_cell if hi > lo else 0
        pts = np.linspace(lo, hi, k + 1)
        if k:
            h = max(h, (hi - lo) / k)
        coords.append(pts)
        starts.append(pos)
        pos += len(pts)
        nonempty.append(True)
    return np.concatenate(coords), np.array(starts), np.array(nonempty), h


def _range_min_axis(T: np.ndarray, axis: int) -> np.ndarray:
    """Replace a cell axis of length n by the n(n+1)/2 consecutive-run minima."""
    T = np.moveaxis(T, axis, 0)
    n = T.shape[0]
    parts = [np.minimum.accumulate(T[j:], axis=0) for j in range(n)]
    return np.moveaxis(np.concatenate(parts, axis=0), 0, axis)


def lattice_box_minima(tf: TargetFunction, lat: Lattice, per_cell: int = CELL_SAMPLES):
    """Certified ``min f(G ∩ C)`` for every box of 𝒢, in box-id order.

    Boxes that miss ``C`` get ``inf``.  Also returns the sample spacing ``h``.
    """
    axes, starts, masks = [], [], []
    h = 0.0
    for d in range(lat.dim):
        co, st, ne, hd = _cell_samples(lat, d, per_cell)
        axes.append(co)
        starts.append(st)
        masks.append(ne)
        h = max(h, hd)
    T = _tensor_eval(tf, axes)
    # per-cell minima, inf for cells outside C
    for d in range(lat.dim):
        red = np.minimum.reduceat(T, starts[d], axis=d)
        shape = list(red.shape)
        shape[d] = lat.n_cells[d]
        full = np.full(shape, np.inf)
        idx = [slice(None)] * lat.dim
        idx[d] = np.flatnonzero(masks[d])
        full[tuple(idx)] = red
        T = full
    for d in range(lat.dim):
        T = _range_min_axis(T, d)
    return T.reshape(-1) - tf.lipschitz * h, h


# ---------------------------------------------------------------------------
# Blueprint and network assembly
# ---------------------------------------------------------------------------


@dataclass
class IuaBlueprint:
    """Every parameter of one construction together with the built network."""

    delta: float
    tau: float
    shift: float
    u_max: float
    kay: int
    cal: Calibration | None
    act: str
    grid: Lattice | None
    slice_boxes: list[np.ndarray]
    network: ExprGraph
    target: dict = field(default_factory=dict)
    oracle_gap: float = 0.0
    sample_spacing: float = 0.0
    nontrivial_slices: int = 0
    box_min: np.ndarray | None = None

    @property
    def num_boxes(self) -> int:
        return self.grid.num_boxes if self.grid is not None else 0

    @property
    def all_boxes(self):
        return self.grid.boxes() if self.grid is not None else iter(())

    @property
    def theta_bounds(self) -> tuple[float, float, float]:
        m = self.network.input_dim
        return 1.0 / (self.kay + 1), 1.0 / (4 * m + 2), 1.0 / (4 * max(self.num_boxes, 1))

    def check_parameters(self):
        """Assert the ledger identities between the stored parameters."""
        assert self.tau == self.delta / 3.0
        assert self.kay == math.floor(self.u_max / self.tau) if self.u_max > 0 else self.kay == 0
        if self.cal is not None:
            assert self.cal.mu == 2.0 * self.cal.dee / self.cal.epsilon
            assert all(self.cal.theta <= b for b in self.theta_bounds)
            assert (self.kay + 1) * self.cal.theta <= 1.0
        for a, b in zip(self.slice_boxes[1:], self.slice_boxes):
            assert np.isin(a, b).all()

    def summary(self) -> dict:
        return {
            "delta": self.delta,
            "tau": self.tau,
            "shift": self.shift,
            "u_max": self.u_max,
            "K": self.kay,
            "calibration": self.cal.to_dict() if self.cal else None,
            "activation": self.act,
            "num_boxes": self.num_boxes,
            "slice_sizes": [int(len(s)) for s in self.slice_boxes],
            "nontrivial_slices": self.nontrivial_slices,
            "oracle_gap": self.oracle_gap,
            "nodes": len(self.network),
            "activations": self.network.activation_count(),
        }

    def to_dict(self) -> dict:
        d = self.summary()
        d.update(
            format="iua-blueprint/1",
            target=self.target,
            grid=self.grid.to_dict() if self.grid else None,
            sample_spacing=self.sample_spacing,
            slice_boxes=[s.tolist() for s in self.slice_boxes],
            network=self.network.to_dict(),
        )
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "IuaBlueprint":
        cal = Calibration.from_dict(d["calibration"]) if d.get("calibration") else None
        grid = Lattice.from_dict(d["grid"]) if d.get("grid") else None
        return cls(
            delta=float(d["delta"]), tau=float(d["tau"]), shift=float(d["shift"]),
            u_max=float(d["u_max"]), kay=int(d["K"]), cal=cal, act=d["activation"], grid=grid,
            slice_boxes=[np.asarray(s, np.int64) for s in d["slice_boxes"]],
            network=ExprGraph.from_dict(d["network"]), target=d.get("target", {}),
            oracle_gap=float(d.get("oracle_gap", 0.0)),
            sample_spacing=float(d.get("sample_spacing", 0.0)),
            nontrivial_slices=int(d.get("nontrivial_slices", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "IuaBlueprint":
        return cls.from_dict(json.loads(text))


def select_slice_boxes(bp: IuaBlueprint, i: int) -> np.ndarray:
    """Ids of 𝒢_i: boxes whose certified minimum of ``f - shift`` exceeds ``(i+1) tau``."""
    if bp.box_min is None:
        return bp.slice_boxes[i] if i < len(bp.slice_boxes) else np.zeros(0, np.int64)
    return np.flatnonzero(bp.box_min - bp.shift > (i + 1) * bp.tau)


def _step_nodes(b: GraphBuilder, key: str, cal: Calibration, x: int, centers: np.ndarray):
    """``t(mu x - mu c)`` for every center; ``mu x`` is shared."""
    sx = b.scale(cal.mu, x)
    consts = np.array([b.const(-cal.mu * c) for c in centers], np.int64)
    pre = b.add_many(np.full(len(centers), sx), consts)
    return b.act_many(key, pre)


def _indicator_nodes(b: GraphBuilder, key: str, cal: Calibration, lat: Lattice,
                     xs: Sequence[int], ids: np.ndarray) -> np.ndarray:
    """``N_G`` for every box id, sharing steps and 1-D bumps across boxes."""
    eps = cal.epsilon
    m = lat.dim
    pi = lat.decode(ids)
    bump_cols = []
    for d in range(m):
        n = lat.n_cells[d]
        # step q is centred half a cell below line q: rises use q = j, falls q = j' + 1
        centers = lat.domain.lo[d] + (np.arange(n + 2) - 1.5) * eps
        steps = _step_nodes(b, key, cal, xs[d], centers)
        negs = b.scale_many(-1.0, steps)
        used = np.unique(pi[:, d])
        j, j2 = lat.line_pairs(d)
        bumps = np.full(lat.pairs_per_dim[d], -1, np.int64)
        bumps[used] = b.add_many(steps[j[used]], negs[j2[used] + 1])
        bump_cols.append(bumps[pi[:, d]])
    total = b.sum_rows(np.stack(bump_cols, axis=1)) if m > 1 else bump_cols[0]
    pre = b.add_const_many(total, 0.5 * eps - m * (1.0 - 2.0 * cal.theta))
    return b.act_many(key, b.scale_many(cal.mu, pre))


def _prefix_sums(b: GraphBuilder, leaves: np.ndarray, lengths: Sequence[int]) -> list[int | None]:
    """Sum nodes for the prefixes ``leaves[:c]``, sharing aligned power-of-two blocks."""
    levels = [leaves]
    while len(levels[-1]) > 1:
        cur = levels[-1]
        half = len(cur) // 2
        levels.append(b.add_many(cur[0:2 * half:2], cur[1:2 * half:2]))
    out: list[int | None] = []
    for c in lengths:
        if c == 0:
            out.append(None)
            continue
        parts, start = [], 0
        for r in range(len(levels) - 1, -1, -1):
            if c & (1 << r):
                parts.append(int(levels[r][start >> r]))
                start += 1 << r
        out.append(b.total(parts))
    return out


def build_slice_network(bp: IuaBlueprint, i: int, builder: GraphBuilder | None = None):
    """The slice network ``N_i`` as a standalone graph (or appended to ``builder``)."""
    own = builder is None
    m = bp.grid.dim
    b = builder or GraphBuilder(m)
    key = make_squashable(bp.act).squashed_key
    xs = [b.input(d) for d in range(m)]
    ids = bp.slice_boxes[i] if i < len(bp.slice_boxes) else np.zeros(0, np.int64)
    if len(ids):
        total = b.total(_indicator_nodes(b, key, bp.cal, bp.grid, xs, ids))
        pre = b.add(total, b.const(-0.5))
    else:
        pre = b.const(-0.5)
    out = b.act(key, b.scale(bp.cal.mu, pre))
    return b.build(out) if own else out


def build_iua(tf: TargetFunction, delta: float, act="sigmoid", *,
              max_boxes: int | None = None, per_cell: int = CELL_SAMPLES,
              global_spacing: float | None = None) -> IuaBlueprint:
    """Build a network whose interval semantics ``delta``-approximates ``tf``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    prof = make_squashable(get_activation(act) if isinstance(act, str) else act)
    tau = delta / 3.0
    m = tf.dim
    lo_c, hi_c, gap = global_range(tf, global_spacing)
    shift = lo_c
    u = hi_c - shift
    if tf.lipschitz == 0:
        choose_epsilon(tf, tau)  # raises when the target is not constant
        u = 0.0
    if u <= 0:
        b = GraphBuilder(m)
        net = b.build(b.const(shift))
        return IuaBlueprint(delta, tau, shift, 0.0, 0, None, prof.name, None, [np.zeros(0, np.int64)],
                            net, tf.describe(), gap, 0.0, 0)
    kay = math.floor(u / tau)
    eps = choose_epsilon(tf, tau)
    lat = build_grid(tf.domain, eps, max_boxes)
    box_min, h = lattice_box_minima(tf, lat, per_cell)
    vals = box_min - shift
    thresholds = (np.arange(kay + 1) + 1) * tau
    finite = np.isfinite(vals)
    # number of slices each box belongs to; 𝒢_i = {level > i}
    level = np.where(finite, np.searchsorted(thresholds, vals, side="left"), 0)
    theta = min(1.0 / (kay + 1), 1.0 / (4 * m + 2), 1.0 / (4 * lat.num_boxes))
    cal = calibrate(prof, theta, eps)
    key = prof.squashed_key

    order = np.flatnonzero(level > 0)
    order = order[np.argsort(-level[order], kind="stable")]
    slice_boxes = [np.sort(order[level[order] > i]) for i in range(kay + 1)]
    lengths = [int(np.count_nonzero(level[order] > i)) for i in range(kay + 1)]

    b = GraphBuilder(m)
    xs = [b.input(d) for d in range(m)]
    prefix = [None] * (kay + 1)
    if len(order):
        ng = _indicator_nodes(b, key, cal, lat, xs, order)
        prefix = _prefix_sums(b, ng, lengths)
    half = b.const(-0.5)
    slices = []
    for i in range(kay + 1):
        pre = half if prefix[i] is None else b.add(prefix[i], half)
        slices.append(b.act(key, b.scale(cal.mu, pre)))
    out = b.add(b.const(shift), b.scale(tau, b.total(slices)))
    net = b.build(out)

    emp_lo, emp_hi = lo_c + gap, hi_c - gap
    nontrivial = sum(1 for i in range(kay + 1) if emp_hi - emp_lo > i * tau + 2 * gap)
    bp = IuaBlueprint(delta, tau, shift, u, kay, cal, prof.name, lat, slice_boxes, net,
                      tf.describe(), gap, h, nontrivial, box_min)
    return bp
