"""Build the sin(2x)+1 approximation and dump curve and box data for plotting."""

import argparse
import json
from pathlib import Path

from iua.cli import main as cli


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delta", type=float, default=1.2)
    ap.add_argument("--act", default="sigmoid")
    ap.add_argument("--boxes", type=int, default=200)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--outdir", default="runs/sin2x")
    args = ap.parse_args(argv)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    bp = out / "blueprint.json"
    code = cli(["build", "--fn", "sin2x", "--delta", str(args.delta), "--act", args.act, "--out", str(bp)])
    if code:
        return code
    code = cli(["check", "--blueprint", str(bp), "--boxes", str(args.boxes), "--seed", str(args.seed),
                "--spacing", "0.01", "--report", str(out / "check.csv")])
    cli(["plotdata", "--blueprint", str(bp), "--prefix", str(out / "sin2x"), "--boxes", str(args.boxes),
         "--seed", str(args.seed), "--spacing", "0.01"])
    summary = {k: v for k, v in json.loads(bp.read_text()).items() if k not in ("network", "slice_boxes")}
    print(json.dumps(summary, indent=1, default=float))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
