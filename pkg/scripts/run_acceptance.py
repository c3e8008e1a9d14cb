"""Run all nine acceptance criteria and print one pass/fail line each.

Usage: python3 scripts/run_acceptance.py [--only 4 5]
"""

import argparse
import sys

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

CRITERIA = {
    1: (30, lambda: soundness_fuzz(1000, 100)),
    2: (60, lambda: indicator_suite(100, (1, 2, 3))),
    3: (120, lambda: slice_suite(per_class=100)),
    4: (120, lambda: end_to_end(sin2x(), 1.2, "sigmoid", 200, seed=7, spacing=0.01,
                                expect_tau=0.4, expect_slices=5)),
    5: (600, lambda: end_to_end(quadratic2d(), 0.75, "relu", 100, seed=7, spacing=0.01)),
    6: (5, lambda: slice_identity(1000)),
    7: (300, lambda: hardness_suite(50, 20, delta=0.25)),
    8: (60, lambda: robustness_demo(0.1, 0.05, 0.2)),
    9: (1, lambda: worked_example(4)),
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--only", type=int, nargs="+", choices=sorted(CRITERIA))
    args = ap.parse_args(argv)
    failed = 0
    for n in args.only or sorted(CRITERIA):
        limit, run = CRITERIA[n]
        out = run()
        ok = out.passed and out.seconds < limit
        failed += not ok
        late = "" if out.seconds < limit else f" [over the {limit}s limit]"
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {n} {out.name}: {out.message} ({out.seconds:.1f}s){late}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
