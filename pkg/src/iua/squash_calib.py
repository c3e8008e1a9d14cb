"""Step approximators and indicator networks built from squashable activations.

A normalised activation ``t`` (limits 0 and 1) becomes a step function of
transition width ``epsilon`` once its argument is dilated by
``mu = 2 D / epsilon``, where ``D`` is large enough that ``t(D) > 1 - theta``
and ``t(-D) < theta``.  Pairs of steps give 1-D bumps, and a step over the
sum of per-dimension bumps gives the box indicator ``N_G``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    CalibrationError,
    CellTooSmallError,
    LimitsUnreachableError,
    ThetaBudgetError,
)
from .nn_expr import ActivationProfile, ExprGraph, GraphBuilder, get_activation, make_squashable

D_CEILING = 1e9
# relative tolerance when checking that a side is a multiple of epsilon
_LATTICE_RTOL = 1e-9


def _profile(act: ActivationProfile | str) -> ActivationProfile:
    return make_squashable(get_activation(act) if isinstance(act, str) else act)


def _round_up_sig(x: float, digits: int = 3) -> float:
    if x <= 0:
        return x
    p = math.floor(math.log10(x)) - (digits - 1)
    q = 10.0**p
    return float(f"{math.ceil(x / q - 1e-12) * q:.{digits}g}")


def find_limit_bound(act: ActivationProfile | str, theta: float, *, margin: bool = True) -> float:
    """Smallest convenient D with ``t(D) > 1 - theta`` and ``t(-D) < theta``.

    Doubles from 1 until the bound holds, bisects down to three significant
    digits and rounds up.  With ``margin`` (the default) the result is
    doubled once more.
    """
    if not 0.0 < theta < 0.5:
        raise CalibrationError(f"theta must lie in (0, 0.5), got {theta}")
    t = _profile(act).normalized

    def ok(d: float) -> bool:
        v = t(np.array([d, -d]))
        return bool(v[0] > 1.0 - theta and v[1] < theta)

    hi = 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > D_CEILING:
            raise LimitsUnreachableError(
                f"no D below {D_CEILING:g} brings the activation within {theta} of its limits"
            )
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while hi - lo > 5e-4 * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    d = _round_up_sig(hi)
    while not ok(d):  # rounding never goes down, but stay defensive
        d = _round_up_sig(d * 1.001)
    return 2.0 * d if margin else d


@dataclass(frozen=True)
class Calibration:
    """Limit precision ``theta``, bound ``dee``, resolution ``epsilon`` and ``mu``."""

    theta: float
    dee: float
    epsilon: float
    mu: float

    def __post_init__(self):
        if not 0.0 < self.theta < 0.5:
            raise CalibrationError(f"theta must lie in (0, 0.5), got {self.theta}")
        if not 0.0 < self.epsilon < 0.5:
            raise CalibrationError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if not self.dee > 0:
            raise CalibrationError("D must be positive")
        if self.mu != 2.0 * self.dee / self.epsilon:
            raise CalibrationError("mu must equal 2 D / epsilon")

    @classmethod
    def make(cls, theta: float, dee: float, epsilon: float) -> "Calibration":
        return cls(theta, dee, epsilon, 2.0 * dee / epsilon)

    def to_dict(self) -> dict:
        return {"theta": self.theta, "D": self.dee, "epsilon": self.epsilon, "mu": self.mu}

    @classmethod
    def from_dict(cls, d: dict) -> "Calibration":
        return cls(float(d["theta"]), float(d["D"]), float(d["epsilon"]), float(d["mu"]))


def calibrate(act: ActivationProfile | str, theta: float, epsilon: float) -> Calibration:
    return Calibration.make(theta, find_limit_bound(act, theta), epsilon)


@dataclass(frozen=True)
class StepApprox:
    """``s(x) = t(mu (x - center))`` for the normalised activation ``act``."""

    act: str
    cal: Calibration

    @classmethod
    def create(cls, act: ActivationProfile | str, cal: Calibration) -> "StepApprox":
        return cls(_profile(act).squashed_key, cal)

    def apply(self, builder: GraphBuilder, x: int, center: float) -> int:
        mu = self.cal.mu
        return builder.act(self.act, builder.add(builder.scale(mu, x), builder.const(-mu * center)))


def step_approx(act: ActivationProfile | str, cal: Calibration, center: float) -> ExprGraph:
    """Standalone one-input network computing the step approximator."""
    b = GraphBuilder(1)
    out = StepApprox.create(act, cal).apply(b, b.input(0), center)
    return b.build(out)


@dataclass(frozen=True)
class GridBox:
    """Axis-aligned box ``[a_1, b_1] x ... x [a_m, b_m]`` on the epsilon lattice."""

    ranges: tuple[tuple[float, float], ...]

    def __post_init__(self):
        rs = tuple((float(a), float(b)) for a, b in self.ranges)
        if not rs or any(not a < b for a, b in rs):
            raise CellTooSmallError("grid box needs a_i < b_i in every dimension")
        object.__setattr__(self, "ranges", rs)

    @property
    def dim(self) -> int:
        return len(self.ranges)

    @property
    def lo(self) -> np.ndarray:
        return np.array([a for a, _ in self.ranges])

    @property
    def hi(self) -> np.ndarray:
        return np.array([b for _, b in self.ranges])

    def neighborhood(self, epsilon: float) -> "GridBox":
        """``nu(G)``: the box grown by ``epsilon`` on every side."""
        return GridBox(tuple((a - epsilon, b + epsilon) for a, b in self.ranges))

    def check_cells(self, epsilon: float, origin: Sequence[float] | None = None):
        for i, (a, b) in enumerate(self.ranges):
            if b - a < epsilon * (1 - _LATTICE_RTOL):
                raise CellTooSmallError(f"side {i} is {b - a}, shorter than epsilon {epsilon}")
            if origin is not None:
                for v in (a, b):
                    k = (v - origin[i]) / epsilon
                    if abs(k - round(k)) > 1e-6:
                        raise CellTooSmallError(f"endpoint {v} is off the lattice")


def _check_theta(cal: Calibration, m: int):
    bound = 1.0 / (4 * m + 2)
    if cal.theta > bound:
        raise ThetaBudgetError(
            f"theta={cal.theta} exceeds 1/(4m+2)={bound:.6g} for m={m}"
        )


def indicator_1d(builder: GraphBuilder, step: StepApprox, x: int, a: float, b: float) -> int:
    """Append the 1-D bump ``t(mu(x + eps/2 - a)) - t(mu(x - eps/2 - b))``."""
    eps = step.cal.epsilon
    if b - a < eps * (1 - _LATTICE_RTOL):
        raise CellTooSmallError(f"interval [{a}, {b}] is shorter than epsilon {eps}")
    rise = step.apply(builder, x, a - 0.5 * eps)
    fall = step.apply(builder, x, b + 0.5 * eps)
    return builder.sub(rise, fall)


def build_1d_indicator(act, cal: Calibration, a_i: float, b_i: float) -> ExprGraph:
    b = GraphBuilder(1)
    out = indicator_1d(b, StepApprox.create(act, cal), b.input(0), a_i, b_i)
    return b.build(out)


def cell_sum(builder: GraphBuilder, step: StepApprox, inputs: Sequence[int], box: GridBox) -> int:
    """Append ``sum_i H_i(x_i) + eps/2`` with ``H_i = bump_i - (1 - 2 theta)``."""
    cal = step.cal
    m = box.dim
    bumps = [indicator_1d(builder, step, inputs[i], a, b) for i, (a, b) in enumerate(box.ranges)]
    return builder.add(builder.total(bumps), builder.const(0.5 * cal.epsilon - m * (1 - 2 * cal.theta)))


def box_indicator(builder: GraphBuilder, step: StepApprox, inputs: Sequence[int], box: GridBox) -> int:
    _check_theta(step.cal, box.dim)
    return builder.act(step.act, builder.scale(step.cal.mu, cell_sum(builder, step, inputs, box)))


def build_box_indicator(act, cal: Calibration, G: GridBox) -> ExprGraph:
    """Standalone m-input network ``N_G`` that is near 1 on G and near 0 off nu(G)."""
    _check_theta(cal, G.dim)
    b = GraphBuilder(G.dim)
    xs = [b.input(i) for i in range(G.dim)]
    out = box_indicator(b, StepApprox.create(act, cal), xs, G)
    return b.build(out)


def build_cell_sum(act, cal: Calibration, G: GridBox) -> ExprGraph:
    """The pre-activation ``sum_i H_i + eps/2`` of ``N_G`` as its own network."""
    b = GraphBuilder(G.dim)
    xs = [b.input(i) for i in range(G.dim)]
    return b.build(cell_sum(b, StepApprox.create(act, cal), xs, G))
