"""Command-line front end: ``iua {build,check,certify,reduce,gap,selftest,plotdata}``.

Exit codes: 0 on success, 1 when a check finds failures, 2 on usage or
input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import IuaError
from .hardness import encode, gap_check, parse_dimacs
from .interval import IntervalBox, parse_interval
from .iua_builder import (
    BUILTIN_TARGETS,
    TargetFunction,
    build_iua,
    constant,
    from_csv,
    target_from_spec,
)
from .nn_expr import ExprGraph, eval_batch, registered_activations
from .verify import (
    certify_robust,
    certify_robust_nary,
    check_interval_approx,
    random_boxes,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass
class RunConfig:
    subcommand: str
    seed: int = 0
    params: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        params = {k: v for k, v in sorted(vars(args).items()) if k not in ("cmd", "func", "seed")}
        return cls(args.cmd, getattr(args, "seed", 0) or 0, params)

    def header(self) -> str:
        return "# config " + json.dumps(asdict(self), sort_keys=True, default=str)


# -- helpers ---------------------------------------------------------------


def _domain(specs: list[str] | None, default: IntervalBox | None = None) -> IntervalBox | None:
    if not specs:
        return default
    return IntervalBox(tuple(parse_interval(s) for s in specs))


def _target(args) -> TargetFunction:
    dom = _domain(args.domain)
    if args.fn == "constant":
        tf = constant(args.value, dom)
    elif args.fn == "csv":
        if not args.csv or args.lipschitz is None:
            raise ValueError("--fn csv needs --csv PATH and --lipschitz L")
        return from_csv(args.csv, args.lipschitz)
    elif args.fn in BUILTIN_TARGETS:
        tf = BUILTIN_TARGETS[args.fn](dom)
    else:
        raise ValueError(f"unknown target {args.fn!r}")
    if args.lipschitz is not None and args.lipschitz != tf.lipschitz:
        tf = TargetFunction(tf.oracle, tf.domain, args.lipschitz, tf.name, tf.params)
    return tf


def _read_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _load_net(path: str) -> tuple[ExprGraph, dict]:
    d = _read_json(path)
    if d.get("format") == "iua-blueprint/1":
        return ExprGraph.from_dict(d["network"]), d
    return ExprGraph.from_dict(d), d


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _csv_text(rows, header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(header + "\n")
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _add_target_args(p: argparse.ArgumentParser, required: bool):
    p.add_argument("--fn", choices=sorted(BUILTIN_TARGETS) + ["constant", "csv"], required=required)
    p.add_argument("--domain", action="append", metavar="LO:HI", help="one per input dimension")
    p.add_argument("--lipschitz", type=float, help="∞-norm Lipschitz constant")
    p.add_argument("--value", type=float, default=1.0, help="value for --fn constant")
    p.add_argument("--csv", help="gridded samples for --fn csv")


# -- subcommands -----------------------------------------------------------


def cmd_build(args) -> int:
    tf = _target(args)
    tf.validate()
    bp = build_iua(tf, args.delta, args.act, max_boxes=args.max_boxes)
    bp.check_parameters()
    _write(args.out, bp.to_json())
    print(json.dumps(bp.summary(), default=float), file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def cmd_check(args) -> int:
    if args.blueprint:
        d = _read_json(args.blueprint)
        net = ExprGraph.from_dict(d["network"])
        tf = target_from_spec(d["target"])
        delta = args.delta if args.delta is not None else float(d["delta"])
    else:
        if not args.net or not args.fn or args.delta is None:
            raise ValueError("check needs --blueprint, or --net with --fn and --delta")
        net, _ = _load_net(args.net)
        tf = _target(args)
        delta = args.delta
    boxes = random_boxes(tf.domain, args.boxes, args.seed)
    rep = check_interval_approx(net, tf, delta, boxes, spacing=args.spacing, jobs=args.jobs)
    if args.report:
        _write(args.report, _csv_text(rep.csv_rows(), RunConfig.from_args(args).header()))
    print(json.dumps({
        "boxes_checked": rep.boxes_checked,
        "failures": len(rep.failures),
        "min_inner_slack": rep.min_inner_slack,
        "max_outer_slack": rep.max_outer_slack,
        "max_oracle_gap": rep.max_gap,
    }))
    return EXIT_OK if rep.passed else EXIT_FAIL


def _points(specs: list[str]) -> np.ndarray:
    return np.array([[float(v) for v in s.split(",")] for s in specs])


def cmd_certify(args) -> int:
    net, _ = _load_net(args.net)
    rows = [["point", "verdict"]]
    for x in _points(args.point):
        if net.num_outputs == 1:
            v = certify_robust(net, x, args.eps).value
        else:
            c = certify_robust_nary(net, x, args.eps)
            v = "Unknown" if c is None else f"Proven({c})"
        rows.append([",".join(repr(float(t)) for t in x), v])
    _write(None, _csv_text(rows))
    return EXIT_OK


def _formula(args):
    with open(args.dimacs) as fh:
        return parse_dimacs(fh.read(), args.mode)


def cmd_reduce(args) -> int:
    f = _formula(args)
    net = encode(f, args.delta, args.act)
    _write(args.out, net.to_json())
    return EXIT_OK


def cmd_gap(args) -> int:
    f = _formula(args)
    if args.net:
        net, _ = _load_net(args.net)
    else:
        net = encode(f, args.delta, args.act)
    r = gap_check(net, f, args.delta, args.samples, args.seed, args.force)
    print(json.dumps({
        "result": r.kind.value,
        "extreme": r.extreme,
        "oracle": r.oracle,
        "witness": None if r.witness is None else r.witness.tolist(),
        "reason": r.reason,
    }))
    return EXIT_OK if r.kind.value != "Violation" else EXIT_FAIL


def cmd_plotdata(args) -> int:
    d = _read_json(args.blueprint)
    net = ExprGraph.from_dict(d["network"])
    tf = target_from_spec(d["target"])
    dom = tf.domain
    axes = [np.linspace(iv.lo, iv.hi, args.points) for iv in dom.dims]
    mesh = np.meshgrid(*axes, indexing="ij")
    xs = np.stack([g.ravel() for g in mesh], axis=1)
    fx, nx = tf(xs), eval_batch(net, xs)[:, 0]
    names = ["x"] if dom.dim == 1 else [f"x{i + 1}" for i in range(dom.dim)]
    rows = [names + ["f", "N"]] + [[repr(float(v)) for v in row] + [repr(float(a)), repr(float(b))]
                                  for row, a, b in zip(xs, fx, nx)]
    header = RunConfig.from_args(args).header()
    _write(args.prefix + "_curve.csv", _csv_text(rows, header))
    rep = check_interval_approx(net, tf, float(d["delta"]), random_boxes(dom, args.boxes, args.seed),
                                spacing=args.spacing)
    _write(args.prefix + "_boxes.csv", _csv_text(rep.csv_rows(), header))
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    ok = run_selftest(verbose=not args.quiet)
    return EXIT_OK if ok else EXIT_FAIL


# -- entry point -------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iua", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    acts = registered_activations()

    p = sub.add_parser("build", help="construct an approximation network and its blueprint")
    _add_target_args(p, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--act", choices=acts, default="sigmoid")
    p.add_argument("--max-boxes", type=int, default=None, help="cap on |𝒢| (env IUA_MAX_BOXES)")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("check", help="test the interval-approximation contract on random boxes")
    p.add_argument("--blueprint")
    p.add_argument("--net")
    _add_target_args(p, required=False)
    p.add_argument("--delta", type=float)
    p.add_argument("--boxes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spacing", type=float, default=0.005, help="range-oracle sample spacing")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--report")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("certify", help="certify robustness on ∞-norm balls")
    p.add_argument("--net", required=True, help="network or blueprint JSON")
    p.add_argument("--point", action="append", required=True, help="comma-separated coordinates")
    p.add_argument("--eps", type=float, required=True)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("reduce", help="encode a DIMACS 3CNF/3DNF formula as a network")
    p.add_argument("--dimacs", required=True)
    p.add_argument("--mode", choices=["cnf", "dnf"])
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--act", choices=acts, default="sigmoid")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("gap", help="check the output gap of an encoded formula")
    p.add_argument("--dimacs", required=True)
    p.add_argument("--net")
    p.add_argument("--mode", choices=["cnf", "dnf"])
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--act", choices=acts, default="sigmoid")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true", help="allow brute force beyond 20 variables")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("selftest", help="run the built-in invariant suite")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("plotdata", help="emit CSVs of f, N and box intervals for plotting")
    p.add_argument("--blueprint", required=True)
    p.add_argument("--prefix", required=True)
    p.add_argument("--points", type=int, default=501)
    p.add_argument("--boxes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spacing", type=float, default=0.005)
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    try:
        return args.func(args)
    except (IuaError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"iua {args.cmd}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
