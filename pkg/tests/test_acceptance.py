"""The nine acceptance criteria, each at its stated size, tolerance and time limit."""

import math

from conftest import ACCEPTANCE_LINES
from iua.experiments import (
    end_to_end,
    hardness_suite,
    indicator_suite,
    robustness_demo,
    slice_identity,
    slice_suite,
    soundness_fuzz,
    worked_example,
)
from iua.iua_builder import quadratic2d, sin2x


def record(n, outcome, limit):
    within = outcome.seconds < limit
    ok = outcome.passed and within
    status = "PASS" if ok else "FAIL"
    note = "" if within else f" [over the {limit:g}s limit]"
    line = f"[{status}] criterion {n} {outcome.name}: {outcome.message} ({outcome.seconds:.1f}s){note}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert outcome.passed, outcome.message
    assert within, f"took {outcome.seconds:.1f}s, limit {limit}s"


def test_criterion_1_soundness_fuzz():
    out = soundness_fuzz(n_pairs=1000, points=100)
    assert out.data["triples"] >= 1000 and out.data["violations"] == 0
    record(1, out, 30)


def test_criterion_2_indicator_suite():
    out = indicator_suite(per_class=100, dims=(1, 2, 3))
    record(2, out, 60)


def test_criterion_3_slice_suite():
    out = slice_suite(per_class=100)
    record(3, out, 120)


def test_criterion_4_sin2x_end_to_end():
    out = end_to_end(sin2x(), 1.2, "sigmoid", 200, seed=7, spacing=0.01, expect_tau=0.4, expect_slices=5)
    assert math.isclose(out.data["blueprint"]["tau"], 0.4)
    assert out.data["blueprint"]["nontrivial_slices"] == 5
    assert out.data["max_gap"] <= 0.02
    record(4, out, 120)


def test_criterion_5_quadratic2d_relu():
    out = end_to_end(quadratic2d(), 0.75, "relu", 100, seed=7, spacing=0.01)
    record(5, out, 600)


def test_criterion_6_slice_identity():
    out = slice_identity(n_points=1000, tol=1e-9)
    record(6, out, 5)


def test_criterion_7_hardness_gap():
    out = hardness_suite(n_cnf=50, n_dnf=20, delta=0.25)
    assert out.data["cnf_agree"] == 100 and out.data["dnf_agree"] == 40
    record(7, out, 300)


def test_criterion_8_robustness_demo():
    out = robustness_demo(delta=0.1, eps=0.05, margin=0.2)
    assert out.data["verdicts"].count("Unknown") == 0 and len(out.data["verdicts"]) == 10
    record(8, out, 60)


def test_criterion_9_worked_example():
    out = worked_example(max_ulps=4)
    record(9, out, 1)
