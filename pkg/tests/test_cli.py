from __future__ import annotations

import json
import shutil
import subprocess

import pytest

from hobn.cli import RunConfig, main
from hobn.suite import check_suite

from conftest import CORPUS


def call(capsys, *argv: str) -> tuple[int, str, str]:
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_infer_posterior(capsys):
    code, out, _ = call(capsys, "infer", str(CORPUS / "sprinkler_posterior.hobn"), "--posterior")
    assert code == 0
    assert "evidence: 0.687" in out
    assert "0.481135" in out


def test_infer_json(capsys):
    code, out, _ = call(capsys, "infer", str(CORPUS / "evidence.hobn"), "--posterior", "--cost", "--json")
    data = json.loads(out)
    assert code == 0
    assert data["evidence"] == pytest.approx(0.148)
    assert data["cost"]["m"] == 2
    assert data["factor"]["scope"] == [{"name": "X1", "observed": None}, {"name": "X2", "observed": True}]


def test_cost_prints_multiplications(capsys):
    code, out, _ = call(capsys, "cost", str(CORPUS / "chain_t1.hobn"))
    assert code == 0
    assert "multiplications: 12" in out
    assert "i-cond" in out


def test_reduce_trace(capsys):
    code, out, _ = call(capsys, "reduce", str(CORPUS / "two_coins.hobn"), "--trace")
    assert code == 0
    assert "steps: 3" in out
    assert "[der! at" in out


def test_type_show_derivation(capsys):
    code, out, _ = call(capsys, "type", str(CORPUS / "two_coins.hobn"), "--show-derivation")
    assert code == 0
    assert "type: X2 * X3" in out
    assert "i-bang" in out


def test_type_json_round_trips(capsys, tmp_path):
    code, out, _ = call(capsys, "type", str(CORPUS / "evidence.hobn"), "--json")
    assert code == 0
    path = tmp_path / "d.json"
    path.write_text(out)
    code, out2, _ = call(capsys, "type", str(path), "--json")
    assert code == 0
    assert json.loads(out2) == json.loads(out)


def test_graph_bn_json_and_dot(capsys, tmp_path):
    code, out, _ = call(capsys, "graph", str(CORPUS / "sprinkler.hobn"), "--bn")
    data = json.loads(out)
    assert code == 0 and len(data["nodes"]) == 4
    dot = tmp_path / "g.dot"
    code, out, _ = call(capsys, "graph", str(CORPUS / "sprinkler.hobn"), "--flow", "--dot", str(dot))
    assert code == 0 and dot.read_text().startswith("digraph")
    assert json.loads(out)["acyclic"] is True


def test_parse_prints_program(capsys):
    code, out, _ = call(capsys, "parse", str(CORPUS / "evidence.hobn"))
    assert code == 0 and out.startswith("let rain")


@pytest.mark.parametrize("argv, code", [
    (["parse", "syntax_error.hobn"], 2),
    (["type", "ill_typed.hobn"], 3),
    (["type", "name_clash.deriv.json"], 3),
    (["reduce", "loop.hobn", "--fuel", "10"], 4),
    (["infer", "zero_evidence.hobn"], 5),
    (["infer", "missing.hobn"], 1),
])
def test_exit_codes(capsys, argv, code):
    argv = [argv[0], str(CORPUS / argv[1]), *argv[2:]]
    got, out, err = call(capsys, *argv)
    assert got == code
    assert err.startswith("hobn:")
    assert len(err.strip().splitlines()) == 1


def test_fuel_environment_variable(capsys, monkeypatch):
    monkeypatch.setenv("HOBN_FUEL", "10")
    code, _, _ = call(capsys, "reduce", str(CORPUS / "loop.hobn"))
    assert code == 4


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig("explode")
    with pytest.raises(ValueError):
        RunConfig("reduce", "x.hobn", fuel=0)


def test_exit_codes_are_deterministic(capsys):
    codes = {call(capsys, "infer", str(CORPUS / "zero_evidence.hobn"))[0] for _ in range(3)}
    assert codes == {5}


def test_console_script_is_installed():
    exe = shutil.which("hobn")
    if exe is None:
        pytest.skip("package not installed")
    proc = subprocess.run([exe, "cost", str(CORPUS / "chain_t2.hobn")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "multiplications: 8" in proc.stdout


def test_check_empty_corpus(capsys, tmp_path):
    code, out, _ = call(capsys, "check", str(tmp_path))
    assert code == 0
    assert "0 checked, 0 failed" in out


def test_check_reports_failure(capsys, tmp_path):
    (tmp_path / "bad.hobn").write_text("# expect: exit 5\nsample bern(0.5)\n")
    code, out, _ = call(capsys, "check", str(tmp_path), "--json")
    assert code == 1
    assert json.loads(out)["failures"] == ["bad.hobn"]


def test_check_intended_rejection(capsys, tmp_path):
    shutil.copy(CORPUS / "name_clash.deriv.json", tmp_path)
    code, out, _ = call(capsys, "check", str(tmp_path))
    assert code == 0
    assert "intended rejection" in out


def test_check_fuzz_is_seeded(tmp_path):
    a = check_suite(tmp_path, fuzz=3, seed=11).to_json()
    b = check_suite(tmp_path, fuzz=3, seed=11).to_json()
    assert a == b and a["ok"] and a["files"] == 6


def test_check_parallel_matches_sequential():
    # Only the fast files, to keep the test short.
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as d:
        for name in ("evidence.hobn", "two_coins.hobn", "loop.hobn", "name_clash.deriv.json"):
            shutil.copy(CORPUS / name, d)
        seq = check_suite(Path(d)).to_json()
        par = check_suite(Path(d), jobs=4).to_json()
    assert seq == par and seq["ok"]
