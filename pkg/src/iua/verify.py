"""Certified range oracle, the delta-interval-approximation checker and robustness."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .interval import Interval, IntervalBox, abstract_eval, abstract_eval_batch
from .iua_builder import TargetFunction
from .nn_expr import ExprGraph

# per-box sample budget of the range oracle
MAX_ORACLE_SAMPLES = 400_000
THRESHOLD = 0.5


@dataclass(frozen=True)
class RangeEstimate:
    lo_cert: float
    hi_cert: float
    lo_emp: float
    hi_emp: float
    gap: float

    @property
    def certified(self) -> Interval:
        return Interval(self.lo_cert, self.hi_cert)


def _oracle_axes(B: IntervalBox, samples_per_axis: int | None, spacing: float | None):
    w = B.widths
    m = B.dim
    if samples_per_axis is None:
        spacing = 0.005 if spacing is None else spacing
        n = [max(2, math.ceil(wd / spacing) + 1) if wd > 0 else 1 for wd in w]
        # coarsen uniformly when the tensor grid would be too large
        while math.prod(n) > MAX_ORACLE_SAMPLES:
            n = [max(2, (k + 1) // 2) if k > 1 else 1 for k in n]
    else:
        n = [max(2, int(samples_per_axis)) if wd > 0 else 1 for wd in w]
    axes = [np.linspace(B.dims[d].lo, B.dims[d].hi, n[d]) for d in range(m)]
    h = max((w[d] / (n[d] - 1) if n[d] > 1 else 0.0) for d in range(m))
    return axes, h


def range_oracle(tf: TargetFunction, B: IntervalBox, samples_per_axis: int | None = None,
                 *, spacing: float | None = None) -> RangeEstimate:
    """Certified bounds on ``min f(B)`` and ``max f(B)`` from a tensor grid of samples.

    ``samples_per_axis`` counts points per side (spacing ``side / (n - 1)``);
    alternatively pass a target ``spacing`` (default 0.005).
    """
    if B.dim != tf.dim:
        raise DomainError("box dimension differs from the target's")
    if not tf.domain.contains_box(B, slack=1e-12):
        raise DomainError(f"box {B} is not inside the domain {tf.domain}")
    axes, h = _oracle_axes(B, samples_per_axis, spacing)
    mesh = np.meshgrid(*axes, indexing="ij")
    vals = tf(np.stack([g.ravel() for g in mesh], axis=1))
    lo, hi = float(vals.min()), float(vals.max())
    gap = tf.lipschitz * h
    return RangeEstimate(lo - gap, hi + gap, lo, hi, gap)


@dataclass(frozen=True)
class BoxResult:
    box: IntervalBox
    l_cert: float
    u_cert: float
    n_lo: float
    n_hi: float
    inner_ok: bool
    outer_ok: bool
    inner_slack: float
    outer_slack: float
    gap: float

    @property
    def ok(self) -> bool:
        return self.inner_ok and self.outer_ok


@dataclass
class CheckReport:
    delta: float
    rows: list[BoxResult] = field(default_factory=list)

    @property
    def boxes_checked(self) -> int:
        return len(self.rows)

    @property
    def failures(self) -> list[tuple]:
        return [
            (r.box, Interval(r.n_lo, r.n_hi),
             (r.l_cert + self.delta, r.u_cert - self.delta),
             Interval(r.l_cert - self.delta, r.u_cert + self.delta))
            for r in self.rows if not r.ok
        ]

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def min_inner_slack(self) -> float:
        """Smallest margin of the inner containment (>= 0 passes, inf if all vacuous)."""
        return min((r.inner_slack for r in self.rows), default=math.inf)

    @property
    def max_outer_slack(self) -> float:
        """Largest excess of the outer containment (<= 0 passes)."""
        return max((r.outer_slack for r in self.rows), default=-math.inf)

    @property
    def max_gap(self) -> float:
        return max((r.gap for r in self.rows), default=0.0)

    def merge(self, other: "CheckReport") -> "CheckReport":
        return CheckReport(self.delta, self.rows + other.rows)

    def csv_rows(self) -> list[list[str]]:
        out = [["box", "l_cert", "u_cert", "n_lo", "n_hi", "inner_ok", "outer_ok"]]
        for r in self.rows:
            box = ";".join(f"{d.lo!r}:{d.hi!r}" for d in r.box.dims)
            out.append([box, repr(r.l_cert), repr(r.u_cert), repr(r.n_lo), repr(r.n_hi),
                        str(r.inner_ok).lower(), str(r.outer_ok).lower()])
        return out


def random_boxes(domain: IntervalBox, n: int, seed: int = 0) -> list[IntervalBox]:
    """Seeded random sub-boxes of ``domain`` with widths spread over all scales."""
    rng = np.random.default_rng(seed)
    lo, w = domain.lo, domain.widths
    out = []
    for _ in range(n):
        frac = rng.uniform(0, 1, domain.dim) ** 2
        width = frac * w
        start = lo + rng.uniform(0, 1, domain.dim) * (w - width)
        out.append(IntervalBox.from_bounds(start, np.minimum(start + width, domain.hi)))
    return out


def _judge(B, est: RangeEstimate, n_lo: float, n_hi: float, delta: float) -> BoxResult:
    l, u = est.lo_cert, est.hi_cert
    if l + delta > u - delta:
        inner_ok, inner_slack = True, math.inf
    else:
        inner_slack = min((l + delta) - n_lo, n_hi - (u - delta))
        inner_ok = inner_slack >= 0
    outer_slack = max((l - delta) - n_lo, n_hi - (u + delta))
    return BoxResult(B, l, u, n_lo, n_hi, inner_ok, outer_slack <= 0, inner_slack, outer_slack, est.gap)


def check_interval_approx(net: ExprGraph, tf: TargetFunction, delta: float, boxes,
                          *, samples_per_axis: int | None = None, spacing: float | None = None,
                          jobs: int = 1) -> CheckReport:
    """Test ``[l+δ, u−δ] ⊆ N#(B) ⊆ [l−δ, u+δ]`` on every box with certified ``l, u``."""
    if net.num_outputs != 1:
        raise ShapeError("check_interval_approx needs a single-output network")
    boxes = list(boxes)
    if not boxes:
        return CheckReport(delta)
    lo = np.array([b.lo for b in boxes])
    hi = np.array([b.hi for b in boxes])

    def oracle(b):
        return range_oracle(tf, b, samples_per_axis, spacing=spacing)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            ests = list(ex.map(oracle, boxes))
            bounds = list(ex.map(lambda s: abstract_eval_batch(net, lo[s], hi[s]),
                                 np.array_split(np.arange(len(boxes)), jobs)))
        n_lo = np.concatenate([b[0][:, 0] for b in bounds])
        n_hi = np.concatenate([b[1][:, 0] for b in bounds])
    else:
        ests = [oracle(b) for b in boxes]
        L, U = abstract_eval_batch(net, lo, hi)
        n_lo, n_hi = L[:, 0], U[:, 0]
    rows = [_judge(b, e, float(a), float(c), delta) for b, e, a, c in zip(boxes, ests, n_lo, n_hi)]
    return CheckReport(delta, rows)


class Verdict(enum.Enum):
    PROVEN_LOW = "ProvenLow"
    PROVEN_HIGH = "ProvenHigh"
    UNKNOWN = "Unknown"


def classify_interval(iv: Interval) -> Verdict:
    if iv.hi < THRESHOLD:
        return Verdict.PROVEN_LOW
    if iv.lo >= THRESHOLD:
        return Verdict.PROVEN_HIGH
    return Verdict.UNKNOWN


def certify_robust(net: ExprGraph, x, eps: float) -> Verdict:
    """Certify the binary classification of ``net`` on the ∞-ball of radius ``eps``."""
    if net.num_outputs != 1:
        raise ShapeError("binary certification needs a single-output network")
    return classify_interval(abstract_eval(net, IntervalBox.ball(x, eps))[0])


def certify_robust_many(net: ExprGraph, points, eps: float) -> list[Verdict]:
    pts = np.atleast_2d(np.asarray(points, float))
    L, U = abstract_eval_batch(net, pts - eps, pts + eps)
    return [classify_interval(Interval(a, b)) for a, b in zip(L[:, 0], U[:, 0])]


def dominant_class(lo: np.ndarray, hi: np.ndarray) -> int | None:
    """Index whose lower bound beats every other upper bound, if any."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    i = int(np.argmax(lo))
    others = np.delete(hi, i)
    if others.size == 0 or lo[i] > others.max():
        return i
    return None


def certify_robust_nary(net: ExprGraph, x, eps: float) -> int | None:
    """0-based class provably chosen by argmax over the whole ball, or None."""
    out = abstract_eval(net, IntervalBox.ball(x, eps))
    return dominant_class(out.lo, out.hi)
