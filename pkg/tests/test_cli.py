"""Command-line interface: exit codes, reports, certificate files, determinism."""

from __future__ import annotations

import json
import math

import pytest

from nlcert import cli
from nlcert.cli import RunConfig, main, strip_timing, validate_report
from nlcert.expr import eval_expr


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def mc_report(tmp_path_factory):
    d = tmp_path_factory.mktemp("mc")
    out, certs = d / "report.json", d / "certs"
    code = main(["certify", "--file", "mc.prob", "--bound", "-1.92", "--points", "sin=2",
                 "--iters", "2", "--out", str(out), "--cert-dir", str(certs)])
    return code, json.loads(out.read_text()), certs


def test_certify_mc_exit_zero(mc_report):
    code, rep, _ = mc_report
    assert code == cli.EXIT_OK
    assert rep["status"] == "certified"
    assert rep["bound"] >= -1.92
    assert rep["boxes"] <= 64


def test_report_validates_and_round_trips(mc_report):
    _, rep, _ = mc_report
    validate_report(rep)
    again = json.loads(json.dumps(rep))
    validate_report(again)
    assert again == rep
    assert rep["config"]["points"] == {"sin": 2}


def test_report_validation_rejects_bad_shape(mc_report):
    _, rep, _ = mc_report
    bad = dict(rep)
    bad.pop("records")
    with pytest.raises(ValueError):
        validate_report(bad)
    with pytest.raises(ValueError):
        validate_report({**rep, "schema": "other/0"})


def test_certificate_files_reverify(mc_report, capsys):
    _, rep, certs = mc_report
    names = [r["certificate"] for r in rep["records"] if r["certificate"]]
    assert names
    for name in names[:5]:
        code, out, _ = _run(["verify", str(certs / name)], capsys)
        assert code == cli.EXIT_OK
        assert "accepted=True" in out


def test_tampered_certificate_is_rejected(mc_report, tmp_path, capsys):
    _, rep, certs = mc_report
    name = next(r["certificate"] for r in rep["records"] if r["certificate"])
    d = json.loads((certs / name).read_text())
    d["mu"] = "1000000"  # claim far more than the certificate proves
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    code, _, err = _run(["verify", str(path)], capsys)
    assert code in (cli.EXIT_INCONCLUSIVE, cli.EXIT_ERROR)


def test_unreachable_bound_is_inconclusive(capsys):
    code, out, _ = _run(["certify", "--file", "mc.prob", "--bound", "0", "--max-boxes", "2",
                         "--iters", "1"], capsys)
    assert code == cli.EXIT_INCONCLUSIVE
    assert "inconclusive" in out


def test_malformed_file_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.prob"
    p.write_text("var x in [0, 1];\nobjective x +* 2;\n")
    code, _, err = _run(["certify", "--file", str(p), "--bound", "0"], capsys)
    assert code == cli.EXIT_ERROR
    assert "line 2" in err


def test_missing_file_is_an_error(capsys):
    code, _, err = _run(["minimize", "--file", "/nonexistent.prob"], capsys)
    assert code == cli.EXIT_ERROR
    assert "no such problem file" in err


def test_constraints_are_rejected(tmp_path, capsys):
    p = tmp_path / "c.prob"
    p.write_text("var x in [0, 1];\nconstraint x - 0.5 >= 0;\nobjective x;\n")
    code, _, err = _run(["minimize", "--file", str(p)], capsys)
    assert code == cli.EXIT_ERROR


@pytest.mark.parametrize("argv", [
    ["certify", "--file", "mc.prob"],  # missing --bound
    ["minimize", "--file", "mc.prob", "--approx", "taylor"],
    ["minimize", "--file", "mc.prob", "--points", "sin"],
    ["minimize", "--file", "mc.prob", "--points", "sin=0"],
    ["minimize", "--file", "mc.prob", "--reduce-lift", "l1:0"],
    ["minimize", "--file", "mc.prob", "--order", "0"],
    ["bench", "nosuch"],
])
def test_bad_arguments_exit_two(argv, capsys):
    code, _, _ = _run(argv, capsys)
    assert code == cli.EXIT_ERROR


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(file="mc.prob", mode="certify")
    with pytest.raises(ValueError):
        RunConfig(file="mc.prob", mode="minimize", tol=0.0)
    cfg = RunConfig(file="mc.prob", mode="minimize", points={"sin": 2}, iters=5)
    assert cfg.optim_config().iter_max == 2


def test_atan_alias_in_points():
    assert cli._assignments(["atan=3,sin=2"], "--points") == {"arctan": 3, "sin": 2}


def test_minimize_polynomial_file(tmp_path, capsys):
    p = tmp_path / "q.prob"
    p.write_text("var x in [-1, 2];\nvar y in [-1, 1];\nobjective (x - 1)^2 + y^2 - 1;\n")
    out = tmp_path / "r.json"
    code, _, _ = _run(["minimize", "--file", str(p), "--out", str(out)], capsys)
    assert code == cli.EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["mode"] == "minimize" and rep["status"] == "converged"
    assert -1.0 - 0.02 <= rep["bound"] <= -1.0 + 1e-9


def test_repeated_runs_are_identical_modulo_timing(tmp_path):
    reps = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        main(["certify", "--file", "mc.prob", "--bound", "-1.95", "--iters", "1",
              "--out", str(out)])
        reps.append(strip_timing(json.loads(out.read_text())))
    assert json.dumps(reps[0], sort_keys=True) == json.dumps(reps[1], sort_keys=True)


def test_strip_timing_removes_row_times():
    d = {"timing": {"wall_seconds": 1.0}, "rows": [{"bound": 1.0, "time": 2.0}]}
    assert strip_timing(d) == {"rows": [{"bound": 1.0}]}


def test_bench_mc_row(tmp_path, capsys):
    out = tmp_path / "b.json"
    code, stdout, _ = _run(["bench", "mc", "--out", str(out)], capsys)
    assert code == cli.EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["kind"] == "bench" and rep["suite"] == "mc"
    (row,) = rep["rows"]
    assert row["status"] == "certified" and row["boxes"] <= 64
    assert json.loads(stdout.strip().splitlines()[0]) == row


def test_swf_problem_shapes():
    p = cli.swf_problem(3)
    assert p.nvars == 3
    q = cli.swf_problem(3, eps=1)
    assert q.nvars == 3
    x = [100.0, 200.0, 300.0]
    want = -sum((x[i] + x[i + 1]) * math.sin(math.sqrt(x[i])) for i in range(2))
    assert eval_expr(q.objective, x) == pytest.approx(want)


def test_version_flag(capsys):
    code, out, _ = _run(["--version"], capsys)
    assert code == cli.EXIT_OK
    assert "nlcert" in out
