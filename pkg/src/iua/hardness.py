"""3CNF / 3DNF formulas encoded as networks with a guaranteed output gap.

Each gadget is an affine map of a calibrated step, ``offset + scale *
s(mu (z - center))`` with ``mu = D / half_width``, so the step is within
``theta`` of its limits once ``|z - center| >= half_width``.

CNF:  ``c_j = t2(t1(l_j1) + t1(l_j2) + t1(l_j3))``, ``y = t3(sum_j c_j)``.
DNF:  ``c_j = t5(t4(l_j1) + t4(l_j2) + t4(l_j3))``, ``y = t3(sum_j c_j)``.

A literal is ``x_i`` or ``1 - x_i`` on inputs from ``[0, 1]^m``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimacsError, GadgetBudgetError, OracleInfeasibleError
from .nn_expr import ActivationProfile, ExprGraph, GraphBuilder, eval_batch, get_activation, make_squashable
from .squash_calib import find_limit_bound

MAX_ORACLE_VARS = 20


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CnfFormula:
    """Clauses of exactly three signed 1-based literals.

    In ``cnf`` mode the formula is a conjunction of disjunctions; in ``dnf``
    mode a disjunction of conjunctions (cubes).
    """

    num_vars: int
    clauses: tuple[tuple[int, int, int], ...]
    mode: str = "cnf"

    def __post_init__(self):
        cls = tuple(tuple(int(v) for v in c) for c in self.clauses)
        if self.mode not in ("cnf", "dnf"):
            raise DimacsError(f"mode must be cnf or dnf, got {self.mode!r}")
        if self.num_vars < 1:
            raise DimacsError("need at least one variable")
        if not cls:
            raise DimacsError("formula has no clauses")
        for c in cls:
            if len(c) != 3:
                raise DimacsError(f"clause {c} has width {len(c)}, expected 3")
            if any(v == 0 or abs(v) > self.num_vars for v in c):
                raise DimacsError(f"clause {c} references a variable outside 1..{self.num_vars}")
        object.__setattr__(self, "clauses", cls)

    @property
    def k(self) -> int:
        return len(self.clauses)

    def evaluate(self, assignments) -> np.ndarray:
        """Boolean value for each row of a (N, m) 0/1 array."""
        a = np.atleast_2d(np.asarray(assignments)).astype(bool)
        lit = np.array(self.clauses)
        vals = a[:, np.abs(lit) - 1]  # (N, k, 3)
        vals = np.where(lit > 0, vals, ~vals)
        if self.mode == "cnf":
            return vals.any(axis=2).all(axis=1)
        return vals.all(axis=2).any(axis=1)

    def negated(self) -> "CnfFormula":
        """De Morgan dual: ``not F`` with every literal flipped and the mode swapped."""
        return CnfFormula(self.num_vars, tuple(tuple(-v for v in c) for c in self.clauses),
                          "dnf" if self.mode == "cnf" else "cnf")

    def to_dimacs(self) -> str:
        lines = [f"p {self.mode} {self.num_vars} {self.k}"]
        lines += [" ".join(str(v) for v in c) + " 0" for c in self.clauses]
        return "\n".join(lines) + "\n"


def all_assignments(m: int) -> np.ndarray:
    return ((np.arange(2**m)[:, None] >> np.arange(m)[None, :]) & 1).astype(np.int8)


def brute_force(formula: CnfFormula, force: bool = False) -> tuple[bool, np.ndarray | None]:
    """Satisfiability (CNF) or tautology (DNF) by enumeration.

    Returns the answer and a witness assignment: a satisfying one for a
    satisfiable CNF, a falsifying one for a non-tautological DNF.
    """
    if formula.num_vars > MAX_ORACLE_VARS and not force:
        raise OracleInfeasibleError(
            f"{formula.num_vars} variables exceeds the brute-force limit {MAX_ORACLE_VARS}"
        )
    corners = all_assignments(formula.num_vars)
    vals = formula.evaluate(corners)
    if formula.mode == "cnf":
        hit = np.flatnonzero(vals)
        return bool(hit.size), (corners[hit[0]] if hit.size else None)
    miss = np.flatnonzero(~vals)
    return not miss.size, (corners[miss[0]] if miss.size else None)


def parse_dimacs(text: str, mode: str | None = None) -> CnfFormula:
    """Parse DIMACS; clauses must have exactly three literals.

    The header may read ``p cnf`` or ``p dnf``; ``mode`` overrides it.
    """
    header = None
    nums: list[int] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if header is not None or len(parts) != 4 or parts[1] not in ("cnf", "dnf"):
                raise DimacsError(f"malformed header {line!r}")
            try:
                header = (parts[1], int(parts[2]), int(parts[3]))
            except ValueError:
                raise DimacsError(f"malformed header {line!r}") from None
            continue
        if header is None:
            raise DimacsError("clause before the 'p cnf' header")
        try:
            nums += [int(t) for t in line.split()]
        except ValueError:
            raise DimacsError(f"non-integer token in {line!r}") from None
    if header is None:
        raise DimacsError("missing 'p cnf' header")
    kind, m, k = header
    clauses, cur = [], []
    for v in nums:
        if v == 0:
            clauses.append(tuple(cur))
            cur = []
        else:
            cur.append(v)
    if cur:
        raise DimacsError("last clause is not terminated by 0")
    if len(clauses) != k:
        raise DimacsError(f"header announces {k} clauses, found {len(clauses)}")
    return CnfFormula(m, tuple(clauses), mode or kind)


def random_formula(m: int, k: int, rng: np.random.Generator, mode: str = "cnf") -> CnfFormula:
    clauses = []
    for _ in range(k):
        vs = rng.choice(m, size=3, replace=False) + 1
        signs = rng.choice([-1, 1], size=3)
        clauses.append(tuple(int(v) for v in vs * signs))
    return CnfFormula(m, tuple(clauses), mode)


def random_unsat(m: int, k: int, rng: np.random.Generator) -> CnfFormula:
    """Unsatisfiable 3CNF: all eight sign patterns on three variables plus random clauses."""
    if k < 8:
        raise ValueError("an unsatisfiable 3CNF of this shape needs k >= 8")
    vs = rng.choice(m, size=3, replace=False) + 1
    core = [tuple(int(s * v) for s, v in zip(signs, vs))
            for signs in itertools.product((1, -1), repeat=3)]
    extra = list(random_formula(m, k - 8, rng).clauses) if k > 8 else []
    clauses = core + extra
    order = rng.permutation(len(clauses))
    return CnfFormula(m, tuple(clauses[i] for i in order))


def random_instances(n_sat: int, n_unsat: int, seed: int = 0, m_range=(3, 10), k_range=(3, 15)):
    """Seeded lists of satisfiable and unsatisfiable 3CNF formulas (checked by brute force)."""
    rng = np.random.default_rng(seed)
    sat, unsat = [], []
    while len(sat) < n_sat:
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        f = random_formula(m, int(rng.integers(k_range[0], k_range[1] + 1)), rng)
        if brute_force(f)[0]:
            sat.append(f)
    while len(unsat) < n_unsat:
        m = int(rng.integers(max(3, m_range[0]), m_range[1] + 1))
        k = int(rng.integers(max(8, k_range[0]), k_range[1] + 1))
        f = random_unsat(m, k, rng)
        if not brute_force(f)[0]:
            unsat.append(f)
    return sat, unsat


# ---------------------------------------------------------------------------
# Gadgets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GadgetSpec:
    which: str
    affine_out: tuple[float, float]  # (scale, offset)
    center: float
    half_width: float
    theta_budget: float
    theta: float
    dee: float
    act: str
    # envelope: (input region, output bounds) for the low and high sides
    low_region: tuple[float, float]
    low_bounds: tuple[float, float]
    high_region: tuple[float, float]
    high_bounds: tuple[float, float]

    @property
    def mu(self) -> float:
        return self.dee / self.half_width

    def apply(self, builder: GraphBuilder, z: int) -> int:
        scale, offset = self.affine_out
        pre = builder.add(builder.scale(self.mu, z), builder.const(-self.mu * self.center))
        s = builder.act(self.act, pre)
        return builder.add(builder.scale(scale, s), builder.const(offset))

    def __call__(self, z) -> np.ndarray:
        scale, offset = self.affine_out
        t = make_squashable(self.act).normalized
        return offset + scale * t(self.mu * (np.asarray(z, float) - self.center))

    def graph(self) -> ExprGraph:
        b = GraphBuilder(1)
        return b.build(self.apply(b, b.input(0)))


def _gadget_table(which: str, k: int, delta: float):
    """(scale, offset, center, half_width, budget, budget text, low, high) for each gadget."""
    inf = np.inf
    if which == "t1":
        return (0.7, -0.15, 0.65, 0.05, 0.05 / 0.7, "0.7*theta <= 0.05",
                ((-inf, 0.6), (-0.2, -0.1)), ((0.7, inf), (0.5, 0.6)))
    if which == "t2":
        A = 1.5 + 3.0 / (4 * k)
        return (A, -1.5, 0.05, 0.05, (1.0 / (4 * k)) / A, "(1.5+3/(4k))*theta <= 1/(4k)",
                ((-inf, 0.0), (-inf, -1.0)), ((0.1, inf), (1.0 / (2 * k), 1.0 / k)))
    if which == "t3":
        return (1.0, 0.0, 0.25, 0.25, 0.5 - delta, "theta < 1/2 - delta",
                ((-inf, 0.0), (0.0, 0.5 - delta)), ((0.5, inf), (0.5 + delta, 1.0)))
    if which == "t4":
        return (0.7, -0.55, 0.35, 0.05, 0.05 / 0.7, "0.7*theta <= 0.05",
                ((-inf, 0.3), (-0.6, -0.5)), ((0.4, inf), (0.1, 0.2)))
    if which == "t5":
        return (None, -1.0 / (2 * k), 0.05, 0.05, 1.0 / (4 * k + 3), "theta <= 1/(4k+3)",
                ((-inf, 0.0), (-1.0 / (2 * k), -1.0 / (4 * k))), ((0.1, inf), (1.0, inf)))
    raise ValueError(f"unknown gadget {which!r}")


def realize_gadget(which: str, act: ActivationProfile | str = "sigmoid", k: int = 1,
                   delta: float = 0.25, theta: float | None = None) -> GadgetSpec:
    """Calibrate gadget ``which`` for ``k`` clauses; theta defaults to half its budget."""
    if k < 1:
        raise GadgetBudgetError("clause count k must be at least 1")
    prof = make_squashable(get_activation(act) if isinstance(act, str) else act)
    scale, offset, center, hw, budget, text, low, high = _gadget_table(which, k, delta)
    if budget <= 0:
        raise GadgetBudgetError(f"{which}: budget {text} is unsatisfiable for delta={delta}")
    if theta is None:
        theta = min(0.5 * budget, 0.25)
    strict = which == "t3"
    if theta <= 0 or theta > budget or (strict and theta >= budget):
        raise GadgetBudgetError(f"{which}: theta={theta} violates {text} (bound {budget:.6g})")
    if which == "t5":
        scale = (1.0 + 1.0 / (2 * k)) / (1.0 - theta)
        high = (high[0], (1.0, offset + scale))
    dee = find_limit_bound(prof, theta)
    return GadgetSpec(which, (scale, offset), center, hw, budget, theta, dee,
                      prof.squashed_key, low[0], low[1], high[0], high[1])


# ---------------------------------------------------------------------------
# Encoders
# ---------------------------------------------------------------------------


def trivial_gap_answer(delta: float) -> tuple[float, float] | None:
    """For ``delta >= 1/2`` the gap problem is trivial and ``a = b = 1/2`` works."""
    return (0.5, 0.5) if delta >= 0.5 else None


def _literal(b: GraphBuilder, xs: Sequence[int], lit: int) -> int:
    x = xs[abs(lit) - 1]
    return x if lit > 0 else b.add(b.const(1.0), b.neg(x))


def _encode(formula: CnfFormula, delta: float, act, inner: str, outer: str) -> ExprGraph:
    b = GraphBuilder(formula.num_vars)
    if trivial_gap_answer(delta) is not None:
        return b.build(b.const(0.5))
    k = formula.k
    g_in = realize_gadget(inner, act, k, delta)
    g_out = realize_gadget(outer, act, k, delta)
    g3 = realize_gadget("t3", act, k, delta)
    xs = [b.input(i) for i in range(formula.num_vars)]
    clause_nodes = []
    for c in formula.clauses:
        z = b.total([g_in.apply(b, _literal(b, xs, lit)) for lit in c])
        clause_nodes.append(g_out.apply(b, z))
    return b.build(g3.apply(b, b.total(clause_nodes)))


def encode_3cnf(formula: CnfFormula, delta: float = 0.25, act="sigmoid") -> ExprGraph:
    if formula.mode != "cnf":
        raise DimacsError("encode_3cnf needs a formula in cnf mode")
    return _encode(formula, delta, act, "t1", "t2")


def encode_3dnf(formula: CnfFormula, delta: float = 0.25, act="sigmoid") -> ExprGraph:
    if formula.mode != "dnf":
        raise DimacsError("encode_3dnf needs a formula in dnf mode")
    return _encode(formula, delta, act, "t4", "t5")


def encode(formula: CnfFormula, delta: float = 0.25, act="sigmoid") -> ExprGraph:
    return (encode_3cnf if formula.mode == "cnf" else encode_3dnf)(formula, delta, act)


class GapKind(enum.Enum):
    HIGH = "GapHigh"
    LOW = "GapLow"
    VIOLATION = "Violation"


@dataclass(frozen=True)
class GapResult:
    kind: GapKind
    extreme: float  # max output for cnf, min output for dnf
    oracle: bool  # satisfiable (cnf) or tautology (dnf)
    witness: np.ndarray | None = None
    reason: str = ""


def gap_check(net: ExprGraph, formula: CnfFormula, delta: float = 0.25, budget: int = 10_000,
              seed: int = 0, force: bool = False) -> GapResult:
    """Classify the net's max (cnf) or min (dnf) over corners and samples, and cross-check."""
    if formula.num_vars > MAX_ORACLE_VARS and not force:
        raise OracleInfeasibleError(
            f"{formula.num_vars} variables exceeds the brute-force limit {MAX_ORACLE_VARS}; use force"
        )
    m = formula.num_vars
    truth, _ = brute_force(formula, force=True)
    rng = np.random.default_rng(seed)
    pts = np.concatenate([all_assignments(m).astype(float), rng.uniform(0, 1, (budget, m))])
    ys = eval_batch(net, pts)[:, 0]
    hi_t, lo_t = 0.5 + delta, 0.5 - delta
    if formula.mode == "cnf":
        j = int(np.argmax(ys))
        y = float(ys[j])
        side = GapKind.HIGH if y > hi_t else GapKind.LOW if y <= lo_t else None
    else:
        j = int(np.argmin(ys))
        y = float(ys[j])
        side = GapKind.HIGH if y >= hi_t else GapKind.LOW if y < lo_t else None
    if side is None:
        return GapResult(GapKind.VIOLATION, y, truth, pts[j], "extreme value falls inside the gap")
    if (side is GapKind.HIGH) != truth:
        return GapResult(GapKind.VIOLATION, y, truth, pts[j], "network side disagrees with the oracle")
    # corners must also agree with Boolean semantics one by one
    corners = pts[: 2**m]
    bool_vals = formula.evaluate(corners.astype(int))
    on_high = ys[: 2**m] > 0.5
    bad = np.flatnonzero(on_high != bool_vals)
    if bad.size:
        return GapResult(GapKind.VIOLATION, y, truth, corners[bad[0]], "corner disagrees with Boolean value")
    return GapResult(side, y, truth)
