import json
import subprocess
import sys

import pytest

from flowcredit.cli import main


def gen(tmp_path, kind, *extra):
    out = tmp_path / kind
    assert main(["gen", kind, "--out", str(out), *extra]) == 0
    return out


def attribute(case, *extra):
    return ["attribute", "--graph", str(case / "graph.json"), "--fg", str(case / "fg.json"),
            "--bg", str(case / "bg.json"), *extra]


def test_or_attribution_with_checks(tmp_path, capsys):
    case = gen(tmp_path, "or")
    capsys.readouterr()
    out = tmp_path / "r.json"
    dot = tmp_path / "r.dot"
    code = main(attribute(case, "--exact", "--check-axioms", "--out", str(out), "--dot", str(dot)))
    assert code == 0
    doc = json.loads(out.read_text())
    credit = {(r["from"], r["to"]): r["credit"] for r in doc["edges"]}
    assert credit == {("X1", "f"): 0.5, ("X2", "f"): 0.5}
    assert doc["passed"] and {c["name"] for c in doc["checks"]} == {"efficiency", "conservation"}
    assert dot.read_text().startswith("digraph")


def test_chain_with_dummy_scan_to_stdout(tmp_path, capsys):
    case = gen(tmp_path, "chain")
    capsys.readouterr()
    assert main(attribute(case, "--dummy-scan")) == 0
    doc = json.loads(capsys.readouterr().out)
    credit = {(r["from"], r["to"]): r["credit"] for r in doc["edges"]}
    assert credit[("X1", "X2")] == pytest.approx(-1.82)
    assert credit[("X1", "f")] == 0.0


def test_failed_check_exit_code(tmp_path, capsys, monkeypatch):
    from flowcredit import flow
    real = flow.check_conservation

    def failing(g, attr, tol=1e-9):
        res = real(g, attr, tol)
        res.passed = False
        res.failures = [{"node": "X2", "error": 1.0}]
        return res
    monkeypatch.setattr("flowcredit.io.check_conservation", failing)
    case = gen(tmp_path, "chain")
    capsys.readouterr()
    assert main(attribute(case, "--check-axioms")) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["passed"] is False and err["failures"][0]["check"] == "conservation"


def test_mc_reports_are_byte_identical(tmp_path):
    case = gen(tmp_path, "random", "--seed", "3")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(attribute(case, "--mc", "2000", "--seed", "7", "--out", str(a))) == 0
    assert main(attribute(case, "--mc", "2000", "--seed", "7", "--out", str(b))) == 0
    assert a.read_bytes() == b.read_bytes()


def test_config_cap_env(tmp_path, capsys, monkeypatch):
    case = gen(tmp_path, "random", "--seed", "1")
    monkeypatch.setenv("FLOWCREDIT_CONFIG_CAP", "1")
    capsys.readouterr()
    assert main(attribute(case)) == 2
    assert "--mc" in capsys.readouterr().err


def test_validate(tmp_path, capsys):
    case = gen(tmp_path, "chain")
    capsys.readouterr()
    assert main(["validate", "--graph", str(case / "graph.json")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["valid"] and doc["nodes"] == 5 and doc["configurations"] == 8
    bad = tmp_path / "bad.json"
    bad.write_text('{"nodes": [')
    assert main(["validate", "--graph", str(bad)]) == 2
    assert "ParseError" in capsys.readouterr().err


def test_oracles(tmp_path, capsys):
    case = gen(tmp_path, "chain")
    files = ["--graph", str(case / "graph.json"), "--fg", str(case / "fg.json"),
             "--bg", str(case / "bg.json")]
    capsys.readouterr()
    assert main(["oracle", "shapley", *files]) == 0
    assert json.loads(capsys.readouterr().out)["values"]["X4"] == pytest.approx(-1.82)
    assert main(["oracle", "linear", *files]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["indirect"]["X1"] == pytest.approx(-1.82)
    assert main(["oracle", "owen", *files]) == 2
    tree = gen(tmp_path, "diamond", "--sink-expr", "B * C")
    capsys.readouterr()
    files = ["--graph", str(tree / "graph.json"), "--fg", str(tree / "fg.json"),
             "--bg", str(tree / "bg.json")]
    assert main(["oracle", "owen", *files]) == 0
    edges = json.loads(capsys.readouterr().out)["edges"]
    assert [e["value"] for e in edges] == [0.5, 0.5]


def test_module_entry_point(tmp_path):
    case = gen(tmp_path, "or")
    res = subprocess.run([sys.executable, "-m", "flowcredit", *attribute(case)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["target_delta"] == 1.0
