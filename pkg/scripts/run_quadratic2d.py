"""Approximate x^2 + y^2 on [0,1]^2 and check containment on random boxes."""

import argparse
import json

from iua.experiments import end_to_end
from iua.iua_builder import quadratic2d


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delta", type=float, default=0.75)
    ap.add_argument("--act", default="relu")
    ap.add_argument("--boxes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--spacing", type=float, default=0.01)
    args = ap.parse_args(argv)
    out = end_to_end(quadratic2d(), args.delta, args.act, args.boxes, seed=args.seed, spacing=args.spacing)
    print(out.line())
    print(json.dumps(out.data, indent=1, default=float))
    return 0 if out.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
