import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from vsspipe import fixtures as fx
from vsspipe.cli import main


def _digests(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    out = tmp_path_factory.mktemp("ws") / "out"
    assert main(["pipeline", "all", "--auto-approve", "--out", str(out)]) == 0
    return out


def test_passk(capsys):
    assert main(["eval", "passk", "--n", "5", "--c", "4", "--k", "1"]) == 0
    assert capsys.readouterr().out.strip() == "0.8"


def test_passk_cases(capsys):
    assert main(["eval", "passk", "--cases", str(fx.path("passk_cases.json"))]) == 0
    assert "MISMATCH" not in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["eval", "passk", "--n", "5"],
    ["eval", "passk", "--n", "3", "--c", "4", "--k", "1"],
    ["run", "--feature", "x.feature", "--steps", "x.jsonl"],
])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    if argv[0] == "run":
        (tmp_path / "x.feature").write_text(fx.hvac_feature())
        (tmp_path / "x.jsonl").write_text(fx.hvac_steps())
    assert main(argv) == 2


def test_bad_config_exits_2(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("catalog: [1, 2\n")
    assert main(["gen", "gherkin", "--config", str(cfg)]) == 2


def test_refine_on_empty_workspace(tmp_path, capsys):
    assert main(["refine", "--out", str(tmp_path / "empty")]) == 1
    assert "map signals" in capsys.readouterr().err


def test_catalog_flatten(tmp_path, capsys):
    assert main(["catalog", "flatten"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == fx.expected("catalog_entries")
    out = tmp_path / "cat.csv"
    assert main(["catalog", "flatten", "--format", "csv", "-o", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "path,kind,datatype"


def test_pipeline_summary(workspace):
    summary = (workspace / "eval" / "summary.txt").read_text()
    assert "gherkin valid           32" in summary
    assert "bundles correct         32" in summary
    summary = json.loads((workspace / "eval" / "summary.json").read_text())
    rows = {r["run"]: r for r in summary["mapping"]}
    for run, want in fx.expected("mapping_rows").items():
        assert rows[run]["correct"] == f"{want['correct']}/{want['expected']}"
        assert rows[run]["false_positives"] == want["false_positives"]


def test_pipeline_idempotent(workspace, tmp_path):
    before = _digests(workspace)
    assert main(["pipeline", "all", "--auto-approve", "--out", str(workspace)]) == 0
    assert _digests(workspace) == before


def test_review_gate_holds_unapproved(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["gen", "gherkin", "--out", str(out)]) == 0
    assert main(["map", "signals", "--out", str(out)]) == 1
    assert "review approve" in capsys.readouterr().err
    assert main(["review", "approve", "Req_CPDS_04.1", "--out", str(out)]) == 0
    assert main(["map", "signals", "--out", str(out)]) == 0
    assert sorted(p.name for p in (out / "mappings").glob("*.json")) == ["Req_CPDS_04.1.json"]
    capsys.readouterr()
    assert main(["review", "status", "--out", str(out)]) == 0
    status = capsys.readouterr().out
    assert "approved  gherkin/Req_CPDS_04.1.feature" in status


def test_approved_artifact_not_overwritten(workspace, tmp_path, capsys):
    rel = "gherkin/Req_CPDS_01.1.feature"
    target = workspace / rel
    original = target.read_text()
    edited = tmp_path / "edit.feature"
    edited.write_text(original.replace("Feature: ", "Feature: Edited ", 1))
    assert main(["review", "edit", rel, "--from", str(edited), "--out", str(workspace)]) == 0
    changed = target.read_text()
    assert changed != original
    capsys.readouterr()
    assert main(["gen", "gherkin", "--out", str(workspace)]) == 0
    assert "kept 1 approved file(s)" in capsys.readouterr().out
    assert target.read_text() == changed
    assert main(["gen", "gherkin", "--force", "--out", str(workspace)]) == 0
    assert target.read_text() == original


def test_run_spawn(tmp_path, capsys):
    feat, steps = tmp_path / "h.feature", tmp_path / "h.steps.jsonl"
    feat.write_text(fx.hvac_feature())
    steps.write_text(fx.hvac_steps())
    trace = tmp_path / "trace.jsonl"
    assert main(["run", "--spawn", "--feature", str(feat), "--steps", str(steps), "--trace", str(trace)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[-3:] == fx.expected("hvac_summary")
    assert any("moving to standby" in line for line in out)
    temps = [r["value"] for r in map(json.loads, trace.read_text().splitlines())
             if r["path"] == "Vehicle.Cabin.HVAC.CabinTemperature"]
    assert temps[:2] == [18.0, 22.0]


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "vsspipe.cli", "eval", "passk", "--n", "10", "--c", "3", "--k", "2"],
                         capture_output=True, text=True, timeout=60)
    assert res.returncode == 0
    assert abs(float(res.stdout) - (1 - 21 / 45)) < 1e-6
