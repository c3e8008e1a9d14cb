import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from iua.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from iua.nn_expr import GraphBuilder

TWO_CLAUSES = "p cnf 4 2\n1 -2 3 0\n-1 2 4 0\n"


@pytest.fixture(scope="module")
def blueprint(tmp_path_factory):
    path = tmp_path_factory.mktemp("bp") / "bp.json"
    assert main(["build", "--fn", "sin2x", "--delta", "1.2", "--act", "sigmoid", "--out", str(path)]) == EXIT_OK
    return path


def read_report(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    assert lines[0].startswith("# config ")
    return json.loads(lines[0][len("# config "):]), list(csv.reader(lines[1:]))


def test_build_writes_blueprint(blueprint):
    d = json.loads(blueprint.read_text())
    assert d["format"] == "iua-blueprint/1" and d["K"] == 5 and d["nontrivial_slices"] == 5


def test_check_passes_and_reports(blueprint, tmp_path, capsys):
    report = tmp_path / "out.csv"
    code = main(["check", "--blueprint", str(blueprint), "--boxes", "200", "--seed", "7",
                 "--spacing", "0.01", "--report", str(report)])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["boxes_checked"] == 200 and summary["failures"] == 0
    config, rows = read_report(report)
    assert config["subcommand"] == "check" and config["seed"] == 7
    assert rows[0] == ["box", "l_cert", "u_cert", "n_lo", "n_hi", "inner_ok", "outer_ok"]
    assert len(rows) == 201 and all(r[5] == r[6] == "true" for r in rows[1:])


def test_check_is_deterministic(blueprint, tmp_path):
    outs = []
    for name, jobs in (("a.csv", "1"), ("b.csv", "3")):
        p = tmp_path / name
        main(["check", "--blueprint", str(blueprint), "--boxes", "30", "--seed", "3", "--jobs", jobs,
              "--spacing", "0.02", "--report", str(p)])
        outs.append(p.read_text().splitlines()[1:])
    assert outs[0] == outs[1]


def test_negative_control_exits_one(tmp_path):
    b = GraphBuilder(1)
    net = tmp_path / "zero.json"
    net.write_text(b.build(b.const(0.0)).to_json())
    code = main(["check", "--net", str(net), "--fn", "constant", "--value", "1", "--delta", "0.5",
                 "--boxes", "10"])
    assert code == EXIT_FAIL


@pytest.mark.parametrize("argv", [
    [],
    ["build"],
    ["build", "--fn", "nope", "--delta", "1"],
    ["check", "--boxes", "5"],
    ["certify", "--net", "/nonexistent.json", "--point", "1", "--eps", "0.1"],
    ["build", "--fn", "sin2x", "--delta", "0.001", "--max-boxes", "100"],
])
def test_usage_errors_exit_two(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_certify(blueprint, capsys):
    assert main(["certify", "--net", str(blueprint), "--point", "0.8", "--point", "2.4",
                 "--eps", "0.01"]) == EXIT_OK
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["point", "verdict"]
    assert [r[1] for r in rows[1:]] == ["ProvenHigh", "ProvenLow"]


def test_certify_nary(tmp_path, capsys):
    b = GraphBuilder(1)
    net = tmp_path / "two.json"
    net.write_text(b.build([b.const(0.1), b.const(0.9)]).to_json())
    assert main(["certify", "--net", str(net), "--point", "0", "--eps", "1"]) == EXIT_OK
    assert "Proven(1)" in capsys.readouterr().out


def test_reduce_and_gap(tmp_path, capsys):
    cnf = tmp_path / "f.cnf"
    cnf.write_text(TWO_CLAUSES)
    net = tmp_path / "net.json"
    assert main(["reduce", "--dimacs", str(cnf), "--out", str(net)]) == EXIT_OK
    assert main(["gap", "--net", str(net), "--dimacs", str(cnf), "--samples", "1000"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["result"] == "GapHigh" and out["oracle"] is True
    bad = tmp_path / "bad.cnf"
    bad.write_text("p cnf 3 1\n1 2 0\n")
    assert main(["reduce", "--dimacs", str(bad)]) == EXIT_USAGE


def test_plotdata(blueprint, tmp_path):
    prefix = str(tmp_path / "prefix")
    assert main(["plotdata", "--blueprint", str(blueprint), "--prefix", prefix, "--points", "51",
                 "--boxes", "20", "--spacing", "0.02"]) == EXIT_OK
    _, curve = read_report(prefix + "_curve.csv")
    assert curve[0] == ["x", "f", "N"] and len(curve) == 52
    vals = np.array(curve[1:], float)
    assert np.max(np.abs(vals[:, 1] - vals[:, 2])) <= 1.2
    _, boxes = read_report(prefix + "_boxes.csv")
    assert len(boxes) == 21


def test_selftest_exits_zero():
    assert main(["selftest", "--quiet"]) == EXIT_OK


@pytest.mark.skipif(shutil.which("iua") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["iua", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "selftest" in res.stdout
