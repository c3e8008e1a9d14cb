"""Compact version of the invariant suite, runnable without pytest (``iua selftest``)."""

from __future__ import annotations

from . import experiments as ex
from .iua_builder import quadratic2d, sin2x


def run_selftest(verbose: bool = True) -> bool:
    checks = [
        lambda: ex.worked_example(),
        lambda: ex.soundness_fuzz(n_pairs=200, points=50),
        lambda: ex.indicator_suite(per_class=20),
        lambda: ex.slice_identity(n_points=200),
        lambda: ex.slice_suite(per_class=20, max_draws=1000),
        lambda: ex.end_to_end(sin2x(), 1.2, "sigmoid", 50, expect_tau=0.4, expect_slices=5),
        lambda: ex.end_to_end(quadratic2d(), 0.75, "relu", 10),
        lambda: ex.hardness_suite(n_cnf=10, n_dnf=5, samples=1000),
        lambda: ex.robustness_demo(),
    ]
    ok = True
    for run in checks:
        out = run()
        ok &= out.passed
        if verbose:
            print(out.line(), flush=True)
    return ok
