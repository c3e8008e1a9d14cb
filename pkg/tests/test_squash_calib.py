import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iua.errors import CalibrationError, CellTooSmallError, LimitsUnreachableError, ThetaBudgetError
from iua.experiments import indicator_suite
from iua.interval import IntervalBox, abstract_eval, abstract_eval_batch
from iua.nn_expr import (
    BUILTIN_ACTIVATIONS,
    ActivationProfile,
    eval,
    eval_batch,
    make_squashable,
    register_activation,
    unregister_activation,
)
from iua.squash_calib import (
    Calibration,
    GridBox,
    build_1d_indicator,
    build_box_indicator,
    build_cell_sum,
    calibrate,
    find_limit_bound,
    step_approx,
)

ULP = 4 * np.finfo(float).eps  # outward rounding may overshoot exact bounds


def test_sigmoid_limit_bound_against_closed_form():
    exact = math.log(19.0)  # σ(D) = 0.95
    d = find_limit_bound("sigmoid", 0.05, margin=False)
    assert exact <= d <= exact * 1.002
    assert find_limit_bound("sigmoid", 0.05) == 2 * d


def test_relu_limit_bound_one_is_enough():
    t = make_squashable("relu").normalized
    for theta in (0.4, 0.05, 1e-6):
        assert t(np.array([1.0]))[0] > 1 - theta and t(np.array([-1.0]))[0] < theta
        assert find_limit_bound("relu", theta, margin=False) <= 1.0


def test_theta_precondition():
    with pytest.raises(CalibrationError):
        find_limit_bound("tanh", 0.5)
    with pytest.raises(CalibrationError):
        Calibration.make(0.1, 1.0, 0.5)
    with pytest.raises(CalibrationError):
        Calibration(0.1, 1.0, 0.25, 8.1)


def test_misdeclared_limits_are_caught():
    register_activation(ActivationProfile("atan_bad", np.arctan, (-math.pi / 2, math.pi)), replace=True)
    try:
        with pytest.raises(LimitsUnreachableError):
            find_limit_bound("atan_bad", 0.01)
    finally:
        unregister_activation("atan_bad")


@pytest.mark.parametrize("act", BUILTIN_ACTIVATIONS)
@pytest.mark.parametrize("theta", [0.3, 0.05, 1e-4])
def test_limit_bound_holds(act, theta):
    d = find_limit_bound(act, theta)
    t = make_squashable(act).normalized
    v = t(np.array([d, -d, 10 * d, -10 * d]))
    assert v[0] > 1 - theta and v[2] > 1 - theta
    assert v[1] < theta and v[3] < theta


def test_calibration_mu_identity():
    cal = calibrate("sigmoid", 0.05, 0.25)
    assert cal.mu == 2 * cal.dee / cal.epsilon
    assert Calibration.from_dict(cal.to_dict()) == cal


def test_step_approx_examples():
    cal = calibrate("sigmoid", 0.05, 0.25)
    g = step_approx("sigmoid", cal, 0.0)
    assert eval(g, [0.0])[0] == 0.5
    assert eval(g, [0.125])[0] > 0.95
    assert eval(g, [-0.125])[0] < 0.05
    shifted = step_approx("sigmoid", cal, 1.3)
    assert eval(shifted, [1.3])[0] == pytest.approx(0.5, abs=1e-12)


@given(st.sampled_from(BUILTIN_ACTIVATIONS), st.floats(1e-4, 0.45), st.floats(0.02, 0.49),
       st.floats(-3, 3), st.floats(0, 5))
def test_step_approx_dilation_clauses(act, theta, eps, center, off):
    cal = calibrate(act, theta, eps)
    g = step_approx(act, cal, center)
    ys = eval_batch(g, np.array([[center + 0.5 * eps + off], [center - 0.5 * eps - off]]))[:, 0]
    assert 1 - theta < ys[0] <= 1
    assert 0 <= ys[1] < theta


def test_1d_indicator_examples():
    cal = calibrate("sigmoid", 0.02, 0.1)
    a, b = 0.3, 0.6
    g = build_1d_indicator("sigmoid", cal, a, b)
    inside = abstract_eval(g, IntervalBox.from_bounds([a], [b]))[0]
    assert 1 - 2 * cal.theta < inside.lo and inside.hi <= 1 + ULP
    left = abstract_eval(g, IntervalBox.from_bounds([-1.0], [a - cal.epsilon]))[0]
    assert -cal.theta < left.lo and left.hi < cal.theta
    mid = eval(g, [(a + b) / 2])[0]
    assert 1 - 2 * cal.theta < mid <= 1 + ULP
    with pytest.raises(CellTooSmallError):
        build_1d_indicator("sigmoid", cal, 0.3, 0.35)


@given(st.integers(0, 2**32 - 1))
def test_single_bump_three_cases(seed):
    rng = np.random.default_rng(seed)
    act = BUILTIN_ACTIVATIONS[int(rng.integers(len(BUILTIN_ACTIVATIONS)))]
    cal = calibrate(act, float(rng.uniform(0.001, 0.45)), float(rng.uniform(0.02, 0.49)))
    eps, th = cal.epsilon, cal.theta
    a = float(rng.uniform(-2, 2))
    b = a + int(rng.integers(1, 6)) * eps
    g = build_1d_indicator(act, cal, a, b)
    u = sorted(rng.uniform(a, b, 2))
    w = float(rng.uniform(0, 3))
    gap = float(rng.uniform(0, 1)) * (rng.random() < 0.7)
    boxes = np.array([
        [u[0], u[1]],
        [a - eps - gap - w, a - eps - gap],
        [b + eps + gap, b + eps + gap + w],
        sorted(rng.uniform(a - 3, b + 3, 2)),
    ])
    L, U = abstract_eval_batch(g, boxes[:, :1], boxes[:, 1:])
    L, U = L[:, 0], U[:, 0]
    assert 1 - 2 * th < L[0] and U[0] <= 1 + ULP
    for k in (1, 2):
        assert -th < L[k] and U[k] < th
    assert np.all(U <= 1 + ULP)


def test_box_indicator_examples():
    cal = calibrate("sigmoid", 0.025, 0.25)
    G = GridBox(((0.0, 1.0), (0.0, 1.0)))
    g = build_box_indicator("sigmoid", cal, G)
    inside = abstract_eval(g, IntervalBox.from_bounds(G.lo, G.hi))[0]
    assert inside.lo > 1 - cal.theta and inside.hi <= 1 + ULP
    far = abstract_eval(g, IntervalBox.point([1.0 + 2 * cal.epsilon, 0.5]))[0]
    assert 0 <= far.lo and far.hi < cal.theta
    xs = np.array([[0.5, 0.5], [0.2, 0.9], [-0.6, 0.5], [0.5, 1.7]])
    np.testing.assert_allclose(eval_batch(g, xs)[:, 0], [1, 1, 0, 0], atol=1e-2)


def test_theta_budget_is_enforced():
    cal = calibrate("sigmoid", 0.1, 0.25)  # 1/(4m+2) = 0.1 for m = 2
    build_box_indicator("sigmoid", cal, GridBox(((0, 1), (0, 1))))
    with pytest.raises(ThetaBudgetError, match="1/\\(4m\\+2\\)"):
        build_box_indicator("sigmoid", cal, GridBox(((0, 1), (0, 1), (0, 1))))


def test_neighborhood():
    G = GridBox(((0.0, 0.1), (0.0, 0.1)))
    assert G.neighborhood(0.1) == GridBox(((-0.1, 0.2), (-0.1, 0.2)))


def test_cell_sum_signs():
    cal = calibrate("tanh", 0.05, 0.2)
    G = GridBox(((0.0, 0.4), (1.0, 1.2)))
    cell = build_cell_sum("tanh", cal, G)
    L, U = abstract_eval_batch(cell, np.array([[0.1, 1.0], [0.6, 1.0]]), np.array([[0.3, 1.2], [0.9, 1.1]]))
    assert L[0, 0] > 0
    assert U[1, 0] < 0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_indicator_statements_hold(seed):
    out = indicator_suite(per_class=30, seed=seed)
    assert out.passed, out.message
