"""Certify robustness of an approximation of a margin-0.2 classifier at ten points."""

import argparse

from iua.experiments import ROBUST_POINTS, robustness_demo


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delta", type=float, default=0.1)
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--act", default="sigmoid")
    args = ap.parse_args(argv)
    out = robustness_demo(args.delta, args.eps, 0.2, args.act)
    print(out.line())
    for x, v in zip(ROBUST_POINTS, out.data["verdicts"]):
        print(f"  x={x:<5} {v}")
    return 0 if out.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
