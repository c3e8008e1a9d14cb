import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iua.errors import DomainError, ShapeError
from iua.experiments import ROBUST_POINTS, robust_target
from iua.interval import Interval, IntervalBox
from iua.iua_builder import TargetFunction, build_iua, constant, quadratic2d, sin2x
from iua.nn_expr import GraphBuilder, eval_batch, stack_graphs
from iua.verify import (
    CheckReport,
    Verdict,
    certify_robust,
    certify_robust_many,
    certify_robust_nary,
    check_interval_approx,
    classify_interval,
    dominant_class,
    random_boxes,
    range_oracle,
)


def const_net(c, m=1, outputs=1):
    b = GraphBuilder(m)
    return b.build([b.const(c)] * outputs)


def linear():
    return TargetFunction(lambda xs: xs[:, 0], IntervalBox.from_bounds([0.0], [1.0]), 1.0, "linear")


@pytest.fixture(scope="module")
def sin_bp():
    return build_iua(sin2x(), 1.2, "sigmoid")


# -- range oracle -----------------------------------------------------------------


def test_oracle_point_box():
    tf = sin2x()
    est = range_oracle(tf, IntervalBox.point([1.3]), 10)
    assert est.gap == 0 and est.lo_cert == est.hi_cert == tf(np.array([[1.3]]))[0]


def test_oracle_linear():
    est = range_oracle(linear(), IntervalBox.from_bounds([0.0], [1.0]), 101)
    assert (est.lo_emp, est.hi_emp) == (0.0, 1.0)
    assert est.gap == pytest.approx(0.01)
    assert est.certified.lo <= 0.0 and 1.0 <= est.certified.hi


def test_oracle_sin_max():
    tf = sin2x()
    est = range_oracle(tf, tf.domain)
    brute = tf(np.linspace(0, 5, 1_000_000)[:, None]).max()
    assert brute <= est.hi_cert <= 2 + est.gap
    assert 2.0 <= est.hi_cert


def test_oracle_rejects_outside_box():
    with pytest.raises(DomainError):
        range_oracle(sin2x(), IntervalBox.from_bounds([4.0], [5.5]))


@given(st.integers(0, 2**32 - 1), st.sampled_from(["sin2x", "quadratic2d"]))
def test_oracle_sound_against_denser_sampling(seed, name):
    tf = sin2x() if name == "sin2x" else quadratic2d()
    B = random_boxes(tf.domain, 1, seed)[0]
    est = range_oracle(tf, B, 12)
    assert est.lo_cert <= est.lo_emp <= est.hi_emp <= est.hi_cert
    axes = [np.linspace(d.lo, d.hi, 120) for d in B.dims]
    mesh = np.meshgrid(*axes, indexing="ij")
    v = tf(np.stack([g.ravel() for g in mesh], axis=1))
    assert est.lo_cert <= v.min() and v.max() <= est.hi_cert


# -- interval-approximation checker ------------------------------------------------


def test_exact_constant_passes_with_full_slack():
    tf = constant(0.7)
    rep = check_interval_approx(const_net(0.7), tf, 0.2, random_boxes(tf.domain, 20))
    assert rep.passed and rep.boxes_checked == 20
    assert rep.max_outer_slack == pytest.approx(-0.2)
    assert rep.min_inner_slack == float("inf")  # every inner interval is empty


def test_negative_control_fails():
    tf = constant(1.0)
    rep = check_interval_approx(const_net(0.0), tf, 0.5, random_boxes(tf.domain, 5))
    assert not rep.passed and len(rep.failures) == 5
    box, n, inner, outer = rep.failures[0]
    assert (n.lo, n.hi) == (0.0, 0.0) and (outer.lo, outer.hi) == (0.5, 1.5)


def test_built_network_passes(sin_bp):
    rep = check_interval_approx(sin_bp.network, sin2x(), 1.2, random_boxes(sin2x().domain, 200, 7),
                                spacing=0.01)
    assert rep.passed and rep.max_gap <= 0.02


def test_threaded_check_matches_serial(sin_bp):
    boxes = random_boxes(sin2x().domain, 40, 3)
    a = check_interval_approx(sin_bp.network, sin2x(), 1.2, boxes, spacing=0.02)
    b = check_interval_approx(sin_bp.network, sin2x(), 1.2, boxes, spacing=0.02, jobs=4)
    assert a.csv_rows() == b.csv_rows()


def test_check_is_monotone_in_delta(sin_bp):
    tf = sin2x()
    boxes = random_boxes(tf.domain, 100, 11)
    for d in (0.3, 0.6, 0.9):
        r0 = check_interval_approx(sin_bp.network, tf, d, boxes, spacing=0.02)
        r1 = check_interval_approx(sin_bp.network, tf, d + 0.1, boxes, spacing=0.02)
        for a, b in zip(r0.rows, r1.rows):
            assert not a.ok or b.ok


def test_report_merge_and_csv():
    tf = constant(0.7)
    boxes = random_boxes(tf.domain, 4)
    a = check_interval_approx(const_net(0.7), tf, 0.2, boxes[:2])
    b = check_interval_approx(const_net(0.7), tf, 0.2, boxes[2:])
    merged = a.merge(b)
    assert merged.boxes_checked == 4
    assert merged.csv_rows()[0] == ["box", "l_cert", "u_cert", "n_lo", "n_hi", "inner_ok", "outer_ok"]
    assert CheckReport(0.1).passed


def test_multi_output_rejected():
    with pytest.raises(ShapeError):
        check_interval_approx(const_net(0.0, outputs=2), constant(0.0), 0.5, [])


# -- robustness ----------------------------------------------------------------------


def test_certify_constants():
    assert certify_robust(const_net(0.9), [0.3], 0.1) is Verdict.PROVEN_HIGH
    assert certify_robust(const_net(0.1), [0.3], 0.1) is Verdict.PROVEN_LOW
    assert certify_robust(const_net(0.5), [0.3], 0.1) is Verdict.PROVEN_HIGH
    assert classify_interval(Interval(0.4, 0.6)) is Verdict.UNKNOWN


@given(st.integers(0, 2**32 - 1))
def test_proven_verdicts_are_sound(seed):
    rng = np.random.default_rng(seed)
    b = GraphBuilder(1)
    x = b.input(0)
    h = b.act("sigmoid", b.add(b.scale(float(rng.normal(0, 4)), x), b.const(float(rng.normal()))))
    net = b.build(h)
    centre = rng.uniform(-2, 2, 1)
    eps = float(rng.uniform(0, 0.5))
    v = certify_robust(net, centre, eps)
    ys = eval_batch(net, centre + rng.uniform(-eps, eps, (500, 1)))[:, 0]
    if v is Verdict.PROVEN_LOW:
        assert np.all(ys < 0.5)
    elif v is Verdict.PROVEN_HIGH:
        assert np.all(ys >= 0.5)


def test_iua_of_robust_target_certifies_every_ball():
    tf = robust_target()
    bp = build_iua(tf, 0.1, "sigmoid")
    pts = ROBUST_POINTS[:, None]
    verdicts = certify_robust_many(bp.network, pts, 0.05)
    expected = [Verdict.PROVEN_HIGH if t else Verdict.PROVEN_LOW for t in tf(pts) > 0.5]
    assert verdicts == expected


def test_nary_examples():
    assert dominant_class([0.8, 0.0], [0.9, 0.1]) == 0
    assert dominant_class([0.0, 0.8], [0.1, 0.9]) == 1
    assert dominant_class([0.4, 0.5], [0.6, 0.7]) is None
    assert dominant_class([0.5, 0.2], [0.6, 0.5]) is None  # touching bounds are a tie
    b = GraphBuilder(1)
    net = b.build([b.const(0.85), b.const(0.05)])
    assert certify_robust_nary(net, [0.0], 1.0) == 0


@pytest.fixture(scope="module")
def zeroed_net():
    # one output per class, each approximating |y| on its own class and 0 elsewhere
    g = robust_target()
    parts = []
    for sign in (-1.0, 1.0):
        tf = TargetFunction(lambda xs, s=sign: np.maximum(s * (g(xs) - 0.5), 0.0), g.domain, g.lipschitz,
                            f"class{int(sign > 0)}")
        parts.append(build_iua(tf, 0.05, "sigmoid").network)
    return stack_graphs(parts)


def test_zeroed_construction_is_certified(zeroed_net):
    g = robust_target()
    for p in ROBUST_POINTS:
        want = int(g(np.array([[p]]))[0] > 0.5)
        assert certify_robust_nary(zeroed_net, [p], 0.05) == want


def test_nary_argmax_invariance(zeroed_net):
    rng = np.random.default_rng(5)
    proven = 0
    for x, eps in zip(rng.uniform(0, 4, 30), rng.uniform(0, 0.3, 30)):
        c = certify_robust_nary(zeroed_net, [x], eps)
        if c is None:
            continue
        proven += 1
        ys = eval_batch(zeroed_net, rng.uniform(max(0.0, x - eps), min(4.0, x + eps), (100, 1)))
        assert np.all(np.argmax(ys, axis=1) == c)
    assert proven > 0
