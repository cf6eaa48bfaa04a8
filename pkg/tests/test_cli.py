import json

import pytest

from poincare_lab.cli import run_command
from poincare_lab.config import parse_config
from poincare_lab.errors import ParameterError
from poincare_lab.report import RunReport, emit_report, metric, parse_report

K5 = "[scenario]\nkind = graph\ngraph = complete\nn = 5\nx0 = all\n"


@pytest.fixture
def cfg(tmp_path):
    def write(text, name="run.cfg"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def test_verify_poincare_k5(cfg, tmp_path):
    out = tmp_path / "r.json"
    assert run_command(["verify-poincare", "--config", cfg(K5), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["constants"]["constant"]["value"] == pytest.approx(0.5, abs=1e-12)
    assert doc["status"] == "passed" and doc["violations"] == []


def test_constant_path_infeasible(cfg, tmp_path):
    out = tmp_path / "r.json"
    text = "[scenario]\nkind = graph\ngraph = path\nn = 10\nx0 = none\n"
    assert run_command(["check-admissibility", "--config", cfg(text), "--out", str(out)]) == 2
    doc = json.loads(out.read_text())
    assert doc["certificate"]["feasible"] is False
    assert doc["certificate"]["closest"]["kind"] == "connect"


def test_unbounded_exit_one(cfg, tmp_path):
    text = "[scenario]\nkind = graph\ngraph = triangles\n"
    assert run_command(["verify-poincare", "--config", cfg(text), "--out", str(tmp_path / "r.json")]) == 1
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["constants"]["constant"]["value"] is None
    assert doc["constants"]["constant"]["bounded"] is False


def test_usage_errors(cfg, capsys):
    assert run_command(["bogus"]) == 2
    assert run_command(["verify-poincare", "--nope"]) == 2
    assert run_command(["verify-poincare"]) == 2
    assert run_command(["verify-poincare", "--config", cfg(K5 + "typo = 1\n")]) == 2
    assert "error" in capsys.readouterr().err


def test_config_rejects_unknown():
    with pytest.raises(ParameterError):
        parse_config(K5 + "[extra]\na = 1\n")
    with pytest.raises(ParameterError):
        parse_config("[scenario]\nn = 3\n")
    with pytest.raises(ParameterError):
        parse_config(K5 + "[constants]\np = two\n")


def test_estimate_and_logsob(cfg, tmp_path):
    text = "[scenario]\nkind = lattice\nd = 1\nL = 8\nh = 0.25\ns_exp = 2\neps = 0.5\nn_scales = 2\n"
    path = cfg(text)
    out = tmp_path / "e.json"
    assert run_command(["estimate-constant", "--config", path, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    c = doc["constants"]
    assert c["lower_bound"]["value"] <= c["exact_p2"]["value"] <= c["chain"]["constructive_upper"]["value"]
    assert run_command(["verify-logsob", "--config", path, "--out", str(out)]) == 0
    assert 0.99 <= json.loads(out.read_text())["logsob"]["max_value"]["value"] <= 1


def test_determinism_and_csv(cfg, tmp_path):
    path = cfg("[scenario]\nkind = boltzmann\nd = 1\nL = 3\nh = 0.25\n[constants]\nsamples = 50\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run_command(["verify-poincare", "--config", path, "--format", "csv", "--seed", "5",
                            "--out", str(out), "--threads", "1"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = parse_report(a.read_bytes(), "csv")
    assert ("constants.constant" in {r[0] for r in rows})


def test_report_round_trip():
    rep = RunReport("x", 3, {"kind": "graph", "n": 5},
                    constants={"c": metric(0.1 + 0.2, 1e-10), "big": metric(float("inf"), 0.0)},
                    violations=[{"point": 1, "deficit": 1e-300}])
    data = emit_report(rep, "json")
    assert parse_report(data, "json") == rep.to_dict()
    assert b"0.30000000000000004" in data
    rows = parse_report(emit_report(rep, "csv"), "csv")
    leaves = [
        "command", "constants.big", "constants.c", "exit_code", "scenario.kind", "scenario.n", "seed",
        "status", "version", "violations[0].deficit", "violations[0].point",
    ]
    assert [r[0] for r in rows] == leaves
