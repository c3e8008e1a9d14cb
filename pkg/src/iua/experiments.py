"""Reusable experiment drivers shared by the test suite, ``iua selftest`` and scripts/.

Each driver returns an :class:`Outcome` holding a pass flag, a short
message and the numbers behind it.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .interval import IntervalBox, abstract_eval, abstract_eval_batch
from . import hardness as hd
from .iua_builder import (
    IuaBlueprint,
    TargetFunction,
    build_iua,
    build_slice_network,
    global_range,
    quadratic2d,
    sin2x,
    slice_value,
)
from .nn_expr import BUILTIN_ACTIVATIONS, ExprGraph, GraphBuilder, eval_batch, sigma_example_graph
from .squash_calib import GridBox, build_box_indicator, build_cell_sum, calibrate
from .verify import Verdict, certify_robust_many, check_interval_approx, random_boxes, range_oracle


@dataclass
class Outcome:
    name: str
    passed: bool
    message: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.message} ({self.seconds:.1f}s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        out.seconds = time.perf_counter() - t0
        return out

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------------------
# Random graphs
# ---------------------------------------------------------------------------


def activation_keys() -> list[str]:
    names = list(BUILTIN_ACTIVATIONS)
    return names + [n + ":sq" for n in names]


def random_graph(rng: np.random.Generator, m: int | None = None, n_ops: int | None = None,
                 acts: list[str] | None = None) -> ExprGraph:
    """Random DAG mixing every node kind; 1 or 2 outputs."""
    m = m or int(rng.integers(1, 4))
    n_ops = n_ops or int(rng.integers(3, 25))
    acts = acts or activation_keys()
    b = GraphBuilder(m, cse=bool(rng.integers(0, 2)))
    pool = [b.input(i) for i in range(m)]
    for _ in range(n_ops):
        op = rng.integers(0, 4)
        a = pool[int(rng.integers(len(pool)))]
        if op == 0:
            pool.append(b.const(float(rng.uniform(-2, 2))))
        elif op == 1:
            pool.append(b.add(a, pool[int(rng.integers(len(pool)))]))
        elif op == 2:
            c = 0.0 if rng.random() < 0.05 else float(rng.uniform(-3, 3))
            pool.append(b.scale(c, a))
        else:
            pool.append(b.act(acts[int(rng.integers(len(acts)))], a))
    k = int(rng.integers(1, 3))
    outs = [pool[-1]] + [pool[int(rng.integers(len(pool)))] for _ in range(k - 1)]
    return b.build(outs)


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------


@_timed
def worked_example(max_ulps: int = 4) -> Outcome:
    """σ(x1 + 0.5 x2) over ⟨[0,1],[0.6,1]⟩ against [σ(0.3), σ(1.5)]."""
    out = abstract_eval(sigma_example_graph(), IntervalBox.from_bounds([0.0, 0.6], [1.0, 1.0]))[0]
    want_lo, want_hi = float(expit(0.3)), float(expit(1.5))
    ulps_lo = abs(out.lo - want_lo) / np.spacing(want_lo)
    ulps_hi = abs(out.hi - want_hi) / np.spacing(want_hi)
    ok = ulps_lo <= max_ulps and ulps_hi <= max_ulps and out.lo <= want_lo and out.hi >= want_hi
    return Outcome("worked example", ok, f"{out} vs [σ(0.3), σ(1.5)], ulps=({ulps_lo:.0f}, {ulps_hi:.0f})",
                   data={"lo": out.lo, "hi": out.hi, "ulps": (ulps_lo, ulps_hi)})


@_timed
def soundness_fuzz(n_pairs: int = 1000, points: int = 100, seed: int = 0) -> Outcome:
    """Concrete outputs of random points must lie in the abstract output box."""
    rng = np.random.default_rng(seed)
    violations = 0
    triples = 0
    for _ in range(n_pairs):
        g = random_graph(rng)
        lo = rng.uniform(-2, 2, g.input_dim)
        hi = lo + rng.uniform(0, 2, g.input_dim) * (rng.random(g.input_dim) > 0.1)
        L, U = abstract_eval_batch(g, lo[None], hi[None])
        xs = rng.uniform(lo, hi, (points, g.input_dim))
        xs[0], xs[1] = lo, hi
        ys = eval_batch(g, xs)
        violations += int(np.count_nonzero((ys < L) | (ys > U)))
        triples += points
    return Outcome("soundness fuzz", violations == 0,
                   f"{triples} graph/box/point triples, {violations} violations",
                   data={"triples": triples, "violations": violations})


def _random_calibration(rng, m):
    act = BUILTIN_ACTIVATIONS[int(rng.integers(len(BUILTIN_ACTIVATIONS)))]
    theta = float(rng.uniform(0.01, 1.0)) / (4 * m + 2)
    eps = float(rng.uniform(0.05, 0.49))
    return act, calibrate(act, theta, eps)


def _sub_box(rng, lo, hi):
    a = rng.uniform(lo, hi)
    c = rng.uniform(lo, hi)
    return np.minimum(a, c), np.maximum(a, c)


def _outside_box(rng, G_lo, G_hi, eps):
    """A box that misses nu(G) through one dimension."""
    m = len(G_lo)
    d = int(rng.integers(m))
    span = G_hi - G_lo + 4 * eps
    lo, hi = _sub_box(rng, G_lo - span, G_hi + span)
    gap = 0.0 if rng.random() < 0.2 else float(rng.uniform(0, 2 * eps))
    w = float(rng.uniform(0, 2 * eps))
    if rng.random() < 0.5:
        hi[d] = G_lo[d] - eps - gap
        lo[d] = hi[d] - w
    else:
        lo[d] = G_hi[d] + eps + gap
        hi[d] = lo[d] + w
    return lo, hi


@_timed
def indicator_suite(per_class: int = 100, dims=(1, 2, 3), seed: int = 0) -> Outcome:
    """Box indicator bounds for boxes inside G, outside nu(G), and straddling."""
    rng = np.random.default_rng(seed)
    bad = {"inside": 0, "outside": 0, "straddle": 0, "range": 0, "cell": 0}
    counts = 0
    for m in dims:
        for _ in range(per_class):
            act, cal = _random_calibration(rng, m)
            eps = cal.epsilon
            origin = rng.uniform(-1, 1, m)
            start = origin + rng.integers(0, 3, m) * eps
            G_lo = start
            G_hi = start + rng.integers(1, 5, m) * eps
            G = GridBox(tuple(zip(G_lo, G_hi)))
            net = build_box_indicator(act, cal, G)
            cell = build_cell_sum(act, cal, G)
            cases = {
                "inside": _sub_box(rng, G_lo, G_hi) if rng.random() > 0.1 else (G_lo, G_hi),
                "outside": _outside_box(rng, G_lo, G_hi, eps),
                "straddle": _sub_box(rng, G_lo - 3 * eps, G_hi + 3 * eps),
            }
            lo = np.array([c[0] for c in cases.values()])
            hi = np.array([c[1] for c in cases.values()])
            L, U = abstract_eval_batch(net, lo, hi)
            CL, CU = abstract_eval_batch(cell, lo, hi)
            counts += 3
            th = cal.theta
            bad["inside"] += int(not (L[0, 0] > 1 - th and U[0, 0] <= 1))
            bad["outside"] += int(not (L[1, 0] >= 0 and U[1, 0] < th))
            bad["range"] += int(np.any(L < 0) or np.any(U > 1))
            bad["cell"] += int(not (CL[0, 0] > 0 and CU[1, 0] < 0))
    ok = not any(bad.values())
    return Outcome("indicator suite", ok, f"{counts} (G, B) cases over m in {tuple(dims)}, failures {bad}",
                   data={"cases": counts, "failures": bad})


@_timed
def slice_suite(bp: IuaBlueprint | None = None, tf: TargetFunction | None = None,
                per_class: int = 100, seed: int = 0, max_draws: int = 5000) -> Outcome:
    """Slice-network bounds on boxes far above, far below, and anywhere in each band."""
    tf = tf or sin2x()
    bp = bp or build_iua(tf, 1.2, "sigmoid")
    rng = np.random.default_rng(seed)
    draws = random_boxes(tf.domain, max_draws, seed)
    lo = np.array([b.lo for b in draws])
    hi = np.array([b.hi for b in draws])
    ests = [range_oracle(tf, b, spacing=0.01) for b in draws]
    fmin = np.array([e.lo_cert for e in ests]) - bp.shift
    fmax = np.array([e.hi_cert for e in ests]) - bp.shift
    th, tau = bp.cal.theta, bp.tau
    failures = {"high": 0, "low": 0, "range": 0}
    checked = {"high": 0, "low": 0, "any": 0}
    for i in range(bp.kay + 1):
        net = build_slice_network(bp, i)
        high = np.flatnonzero(fmin >= (i + 2) * tau)[:per_class]
        low = np.flatnonzero(fmax <= (i - 1) * tau)[:per_class]
        anyb = rng.permutation(len(draws))[:per_class]
        for cls, idx in (("high", high), ("low", low), ("any", anyb)):
            if not len(idx):
                continue
            L, U = abstract_eval_batch(net, lo[idx], hi[idx])
            checked[cls] += len(idx)
            failures["range"] += int(np.count_nonzero((L < 0) | (U > 1)))
            if cls == "high":
                failures["high"] += int(np.count_nonzero(~((L > 1 - th) & (U <= 1))))
            elif cls == "low":
                failures["low"] += int(np.count_nonzero(~((L >= 0) & (U < th))))
    ok = not any(failures.values())
    return Outcome("slice suite", ok, f"checked {checked}, failures {failures}",
                   data={"checked": checked, "failures": failures})


@_timed
def end_to_end(tf: TargetFunction, delta: float, act: str, n_boxes: int, seed: int = 7,
               spacing: float = 0.01, expect_tau: float | None = None,
               expect_slices: int | None = None) -> Outcome:
    """Build the network and test the interval-approximation contract on random boxes."""
    bp = build_iua(tf, delta, act)
    bp.check_parameters()
    rep = check_interval_approx(bp.network, tf, delta, random_boxes(tf.domain, n_boxes, seed),
                                spacing=spacing)
    ok = rep.passed
    notes = []
    if expect_tau is not None:
        tau_ok = math.isclose(bp.tau, expect_tau, rel_tol=1e-12)
        ok &= tau_ok
        notes.append(f"tau={bp.tau:.6g}")
    if expect_slices is not None:
        ok &= bp.nontrivial_slices == expect_slices
        notes.append(f"nontrivial slices={bp.nontrivial_slices}")
    notes += [f"{rep.boxes_checked} boxes", f"{len(rep.failures)} failures",
              f"oracle gap<={rep.max_gap:.4f}", f"|𝒢|={bp.num_boxes}", f"nodes={len(bp.network)}"]
    return Outcome(f"end-to-end {tf.name}", ok, ", ".join(notes),
                   data={"blueprint": bp.summary(), "failures": len(rep.failures),
                         "max_gap": rep.max_gap, "min_inner_slack": rep.min_inner_slack,
                         "max_outer_slack": rep.max_outer_slack})


@_timed
def slice_identity(n_points: int = 1000, seed: int = 0, tol: float = 1e-9) -> Outcome:
    """The slices of f sum back to f - shift."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for tf, delta in ((sin2x(), 1.2), (quadratic2d(), 0.75)):
        tau = delta / 3.0
        shift, top, _ = global_range(tf)
        K = math.floor((top - shift) / tau)
        xs = tf.domain.sample(rng, n_points)
        total = sum(slice_value(tf, i, xs, tau, shift) for i in range(K + 1))
        worst = max(worst, float(np.max(np.abs(total - (tf(xs) - shift)))))
    return Outcome("slice identity", worst <= tol, f"max |Σ f_i - f| = {worst:.3g} at {n_points} points per target",
                   data={"max_error": worst})


@_timed
def hardness_suite(n_cnf: int = 50, n_dnf: int = 20, delta: float = 0.25, samples: int = 10_000,
                   seed: int = 0, act: str = "sigmoid") -> Outcome:
    """Gap checks on random satisfiable/unsatisfiable 3CNF and mirrored 3DNF instances."""
    sat, unsat = hd.random_instances(n_cnf, n_cnf, seed=seed)
    agree = violations = 0
    for f in sat + unsat:
        r = hd.gap_check(hd.encode_3cnf(f, delta, act), f, delta, samples, seed)
        violations += r.kind is hd.GapKind.VIOLATION
        agree += (r.kind is hd.GapKind.HIGH) == r.oracle and r.kind is not hd.GapKind.VIOLATION
    d_agree = d_viol = 0
    # tautologies come from unsatisfiable formulas, non-tautologies from satisfiable ones
    for f in unsat[:n_dnf] + sat[:n_dnf]:
        g = f.negated()
        r = hd.gap_check(hd.encode_3dnf(g, delta, act), g, delta, samples, seed)
        d_viol += r.kind is hd.GapKind.VIOLATION
        d_agree += (r.kind is hd.GapKind.HIGH) == r.oracle and r.kind is not hd.GapKind.VIOLATION
    ok = violations == 0 and d_viol == 0 and agree == 2 * n_cnf and d_agree == 2 * n_dnf
    return Outcome("hardness gap", ok,
                   f"3CNF oracle agreement {agree}/{2 * n_cnf}, 3DNF {d_agree}/{2 * n_dnf}, "
                   f"violations {violations + d_viol}",
                   data={"cnf_agree": agree, "dnf_agree": d_agree, "violations": violations + d_viol})


def robust_target() -> TargetFunction:
    """``0.5 + 0.4 sin(1.5 x)`` on [0, 4] (L = 0.6)."""
    dom = IntervalBox.from_bounds([0.0], [4.0])
    return TargetFunction(lambda xs: 0.5 + 0.4 * np.sin(1.5 * xs[:, 0]), dom, 0.6, "robust_sine")


ROBUST_POINTS = np.array([0.5, 0.75, 1.0, 1.3, 1.6, 2.6, 2.9, 3.15, 3.4, 3.7])


@_timed
def robustness_demo(delta: float = 0.1, eps: float = 0.05, margin: float = 0.2,
                    act: str = "sigmoid") -> Outcome:
    """Every ball around the demo points is certified, on the same side as f."""
    tf = robust_target()
    pts = ROBUST_POINTS[:, None]
    # confirm the declared margin on every ball before relying on it
    ests = [range_oracle(tf, IntervalBox.ball(p, eps), spacing=1e-4) for p in pts]
    real_margin = min(max(e.lo_cert - 0.5, 0.5 - e.hi_cert) for e in ests)
    bp = build_iua(tf, delta, act)
    verdicts = certify_robust_many(bp.network, pts, eps)
    truth = tf(pts) > 0.5
    concrete = eval_batch(bp.network, pts)[:, 0] >= 0.5
    agree = [
        (v is Verdict.PROVEN_HIGH and t) or (v is Verdict.PROVEN_LOW and not t)
        for v, t in zip(verdicts, truth)
    ]
    ok = real_margin >= margin and all(agree) and bool(np.all(concrete == truth))
    n_cert = sum(v is not Verdict.UNKNOWN for v in verdicts)
    return Outcome("robustness demo", ok,
                   f"{n_cert}/{len(pts)} balls certified, {sum(agree)} agree with f, margin {real_margin:.3f}",
                   data={"verdicts": [v.value for v in verdicts], "margin": real_margin})
