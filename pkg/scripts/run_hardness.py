"""Gap checks for encoded random 3CNF and 3DNF instances."""

import argparse

from iua.experiments import hardness_suite


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cnf", type=int, default=50, help="satisfiable and unsatisfiable instances each")
    ap.add_argument("--dnf", type=int, default=20, help="tautologies and non-tautologies each")
    ap.add_argument("--delta", type=float, default=0.25)
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--act", default="sigmoid")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    out = hardness_suite(args.cnf, args.dnf, args.delta, args.samples, args.seed, args.act)
    print(out.line())
    return 0 if out.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
