import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iua.errors import (
    CalibrationRequiredError,
    DegenerateLimitsError,
    GraphStructureError,
    InputArityError,
    NotSquashableError,
    NumericOverflowError,
    ShapeError,
    UnknownActivationError,
)
from iua.experiments import random_graph
from iua.nn_expr import (
    ActivationProfile,
    ExprGraph,
    GraphBuilder,
    boolean_gate,
    eval,
    eval_batch,
    evaluate_reference,
    get_activation,
    lower_squashed,
    make_squashable,
    register_activation,
    registered_activations,
    sigma_example_graph,
    unregister_activation,
    stack_graphs,
)
from iua.squash_calib import StepApprox, calibrate


def _sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def test_constant_graph():
    b = GraphBuilder(2)
    g = b.build(b.const(3.0))
    assert eval(g, [0.7, -4.0]).tolist() == [3.0]


def test_sigma_example_at_origin():
    assert eval(sigma_example_graph(), [0.0, 0.0])[0] == 0.5


def test_sigma_example_matches_scalar_formula():
    got = eval(sigma_example_graph(), [1.0, 0.4])[0]
    assert got == pytest.approx(_sigmoid(1.0 + 0.5 * 0.4), abs=1e-15)
    assert got == pytest.approx(0.76852, abs=5e-6)


def test_dimension_mismatch():
    with pytest.raises(InputArityError):
        eval(sigma_example_graph(), [1.0])


def test_overflow_is_reported():
    b = GraphBuilder(1)
    x = b.input(0)
    for _ in range(12):
        x = b.scale(1e30, x)
    with pytest.raises(NumericOverflowError):
        eval(b.build(x), [1.0])


def test_eval_is_bit_deterministic(rng):
    for _ in range(20):
        g = random_graph(rng)
        x = rng.uniform(-2, 2, g.input_dim)
        assert eval(g, x).tobytes() == eval(g, x).tobytes()


def test_vectorised_eval_matches_recursive_reference(rng):
    for _ in range(50):
        g = random_graph(rng)
        x = rng.uniform(-2, 2, g.input_dim)
        np.testing.assert_allclose(eval(g, x), evaluate_reference(g, x), rtol=0, atol=0)


def test_builder_hash_conses_and_rejects_forward_refs():
    b = GraphBuilder(1)
    x = b.input(0)
    assert b.add(x, b.const(1.0)) == b.add(b.const(1.0), x)
    with pytest.raises(GraphStructureError):
        b.add(x, 99)
    with pytest.raises(GraphStructureError):
        b.input(1)
    with pytest.raises(GraphStructureError):
        b.const(math.inf)


def test_bulk_sum_rows_matches_numpy(rng):
    b = GraphBuilder(3)
    xs = [b.input(i) for i in range(3)]
    ids = np.array([[xs[0], xs[1], xs[2], xs[0], xs[1]]] * 4)
    outs = b.sum_rows(ids)
    g = b.build(list(outs))
    x = rng.uniform(-1, 1, 3)
    np.testing.assert_allclose(eval(g, x), [2 * x[0] + 2 * x[1] + x[2]] * 4)


@pytest.mark.parametrize("name", registered_activations())
def test_normalized_profiles_are_monotone_and_in_unit_range(name, rng):
    t = make_squashable(name).normalized
    x = np.sort(rng.uniform(-50, 50, 10_000))
    x[::7] = rng.normal(0, 2, len(x[::7]))
    x.sort()
    y = t(x)
    assert np.all(y >= -1e-12) and np.all(y <= 1 + 1e-12)
    assert np.all(np.diff(y) >= -1e-12)
    assert t(np.array([-1e6]))[0] == pytest.approx(0.0, abs=1e-6)
    assert t(np.array([1e6]))[0] == pytest.approx(1.0, abs=1e-6)


def test_relu_normalization_closed_form(rng):
    t = make_squashable("relu").normalized
    x = rng.uniform(-3, 3, 1000)
    expected = np.where(x <= -1, 0.0, np.where(x >= 0, 1.0, x + 1.0))
    np.testing.assert_allclose(t(x), expected, atol=1e-12)


def test_sigmoid_is_only_renormalised_by_identity(rng):
    x = rng.uniform(-10, 10, 100)
    np.testing.assert_allclose(make_squashable("sigmoid").normalized(x), [_sigmoid(v) for v in x], rtol=1e-14)


def test_elu_composite_limits():
    prof = make_squashable("elu")
    assert prof.construction == "composite"
    # ELU(1 - ELU(-x)) tends to ELU(2) = 2 on the right and -1 on the left
    big = np.array([-40.0, 40.0])
    raw = get_activation("elu").raw
    comp = raw(1 - raw(-big))
    np.testing.assert_allclose(comp, [-1.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(prof.normalized(big), (comp + 1) / 3, atol=1e-15)


def test_smooth_relu_right_limit():
    a = 1.0
    prof = make_squashable("smoothrelu")
    # t'(+inf) = t(1) = 1 - log(2)
    raw = get_activation("smoothrelu").raw
    assert raw(np.array([1.0]))[0] == pytest.approx(1 - math.log(1 + a) / a)
    assert prof.normalized(np.array([5.0]))[0] == 1.0


@pytest.fixture
def scratch_activations():
    names = ["bump_test", "flat_test", "arctan_test"]
    yield names
    for n in names:
        unregister_activation(n)


def test_user_activation_checks(scratch_activations):
    register_activation(
        ActivationProfile("bump_test", lambda x: np.exp(-np.asarray(x) ** 2), (0.0, 0.0)), replace=True
    )
    with pytest.raises(NotSquashableError):
        make_squashable("bump_test")
    register_activation(
        ActivationProfile("flat_test", lambda x: np.zeros_like(np.asarray(x, float)), (0.5, 0.5)), replace=True
    )
    with pytest.raises(DegenerateLimitsError):
        make_squashable("flat_test")
    register_activation(
        ActivationProfile("arctan_test", lambda x: np.arctan(x), (-math.pi / 2, math.pi / 2)), replace=True
    )
    t = make_squashable("arctan_test").normalized
    assert t(np.array([0.0]))[0] == pytest.approx(0.5)


def test_unknown_activation():
    with pytest.raises(UnknownActivationError):
        get_activation("nope")
    with pytest.raises(UnknownActivationError):
        b = GraphBuilder(1)
        b.act("nope", b.input(0))


@pytest.mark.parametrize("name", registered_activations())
def test_lowering_preserves_semantics(name):
    b = GraphBuilder(1)
    g = b.build(b.act(name + ":sq", b.scale(0.7, b.input(0))))
    low = lower_squashed(g)
    assert all(not k.endswith(":sq") for k in low.activations)
    xs = np.linspace(-8, 8, 301)[:, None]
    np.testing.assert_allclose(eval_batch(g, xs), eval_batch(low, xs), atol=1e-12)


def test_json_round_trip_is_bit_exact(rng):
    for _ in range(20):
        g = random_graph(rng)
        g2 = ExprGraph.from_json(g.to_json())
        assert g2.to_json() == g.to_json()
        np.testing.assert_array_equal(g2.coef, g.coef)
        x = rng.uniform(-1, 1, g.input_dim)
        assert eval(g, x).tobytes() == eval(g2, x).tobytes()


def test_json_rejects_forward_reference():
    d = json.loads(sigma_example_graph().to_json())
    d["nodes"][2]["payload"]["arg"] = 5
    with pytest.raises(GraphStructureError):
        ExprGraph.from_dict(d)


def test_boolean_gates():
    cal = calibrate("sigmoid", 0.05, 0.25)
    step = StepApprox.create("sigmoid", cal)
    b = GraphBuilder(2)
    x, y = b.input(0), b.input(1)
    g = b.build([
        boolean_gate(b, "NOT", [x]),
        boolean_gate(b, "AND", [x, y], step),
        boolean_gate(b, "OR", [x, y], step),
    ])
    not1, and11, _ = eval(g, [1.0, 1.0])
    assert not1 == 0.0
    assert 0.95 < and11 <= 1.0
    _, _, or00 = eval(g, [0.0, 0.0])
    assert 0.0 <= or00 < 0.05
    with pytest.raises(CalibrationRequiredError):
        boolean_gate(b, "AND", [x, y])


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(-3, 3))
def test_scale_and_sum_agree_with_arithmetic(x, c):
    b = GraphBuilder(2)
    g = b.build(b.add(b.scale(c, b.input(0)), b.input(1)))
    assert eval(g, x)[0] == c * x[0] + x[1]


def test_stack_graphs(rng):
    b1 = GraphBuilder(2)
    g1 = b1.build(b1.act("tanh", b1.add(b1.input(0), b1.input(1))))
    b2 = GraphBuilder(2)
    g2 = b2.build([b2.act("sigmoid", b2.input(1)), b2.act("tanh", b2.input(0))])
    s = stack_graphs([g1, g2])
    assert s.num_outputs == 3 and len(s) == len(g1) + len(g2)
    xs = rng.normal(size=(20, 2))
    np.testing.assert_array_equal(eval_batch(s, xs), np.hstack([eval_batch(g1, xs), eval_batch(g2, xs)]))
    assert ExprGraph.from_json(s.to_json()).to_json() == s.to_json()
    b3 = GraphBuilder(1)
    with pytest.raises(ShapeError):
        stack_graphs([g1, b3.build(b3.input(0))])
