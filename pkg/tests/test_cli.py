import csv
import io
import json
import subprocess
import sys

import pytest

from damperkit.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_examples_report_each_reference(capsys):
    code, out, _ = run(capsys, "examples", "--which", "1")
    lines = [ln.strip() for ln in out.splitlines() if ln.strip().startswith(("PASS", "FAIL"))]
    assert len(lines) == 8
    # the block jitter and the end-to-end jitter miss their reference values
    failing = [ln.split()[1] for ln in lines if ln.startswith("FAIL")]
    assert failing == ["block[0].jitter", "e2e.jitter"]
    assert code == 1


def test_examples_json(capsys, tmp_path):
    target = tmp_path / "ex.json"
    code, _, _ = run(capsys, "examples", "--which", "3", "--format", "json", "--out", str(target))
    records = json.loads(target.read_text())
    assert {r["example"] for r in records} == {3}
    assert code == (0 if all(r["passed"] for r in records) else 1)


def test_table1(capsys):
    code, out, _ = run(capsys, "table1")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["method"] for r in rows] == ["white_rabbit", "gptp", "ntp"]
    assert [r["threshold_ms"] for r in rows[:2]] == ["3.96", "39.96"]
    assert [r["status"] for r in rows] == ["PASS", "PASS", "UNRECONCILED"]
    assert code == 0


def test_analyze_csv_and_json_agree(capsys):
    _, out_csv, _ = run(capsys, "analyze", "--config", "ex1", "--mode", "per_block")
    _, out_json, _ = run(capsys, "analyze", "--config", "ex1", "--mode", "per_block", "--format", "json")
    rows = list(csv.DictReader(io.StringIO(out_csv)))
    records = json.loads(out_json)
    assert [r["block_id"] for r in rows] == [r["block_id"] for r in records]
    assert len(rows) == 8 and rows[-1]["block_id"] == "e2e"
    assert float(rows[-1]["jitter_us"]) == pytest.approx(records[-1]["jitter_us"], abs=1e-3)


def test_analyze_precision_ns(capsys):
    _, out, _ = run(capsys, "analyze", "--config", "ex1", "--mode", "te", "--precision-ns")
    (row,) = list(csv.DictReader(io.StringIO(out)))
    assert "jitter_us" not in row
    assert row["jitter_ns"] == str(int(row["jitter_ns"]))


def test_simulate_writes_csv_and_summary(capsys, tmp_path):
    target = tmp_path / "trace.csv"
    code, out, _ = run(capsys, "simulate", "--config", "ex1", "--seed", "3", "--out", str(target))
    summary = json.loads(out)
    rows = list(csv.DictReader(target.open()))
    assert len(rows) == summary["packets"] == 1000
    assert summary["violations"] == []
    assert code == 0


def test_simulate_tightness(capsys):
    code, out, _ = run(capsys, "simulate", "--config", "ex1", "--scenario", "tightness-upper-drift")
    (row,) = list(csv.DictReader(io.StringIO(out)))
    assert round(int(row["delay_ps"]) / 1e6, 2) == 257.13
    assert code == 0


def test_simulate_rgcq(capsys):
    code, out, _ = run(capsys, "simulate", "--scenario", "rgcq-reorder", "--clock-pair", "downstream_slower",
                       "--trials", "500")
    (row,) = list(csv.DictReader(io.StringIO(out)))
    assert float(row["reorder_frequency"]) == 0
    assert code == 0


def test_case_study(capsys):
    code, out, _ = run(capsys, "case-study", "orion", "--deployment", "none,fopleq", "--format", "json")
    rows = json.loads(out)
    assert {r["deployment"] for r in rows} == {"none", "fopleq"}
    assert all(r["converged"] for r in rows)
    assert code == 0


class TestExitCodes:
    def test_missing_file(self, capsys):
        code, _, err = run(capsys, "analyze", "--config", "/nonexistent.json")
        assert code == 2
        assert err.startswith("error: ")

    def test_invalid_config(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema": 1, "kind": "paths", "flows": []}')
        code, _, err = run(capsys, "analyze", "--config", str(bad))
        assert code == 2
        assert f"{bad}:1:" in err

    def test_unknown_deployment(self, capsys):
        code, _, _ = run(capsys, "case-study", "orion", "--deployment", "teleport")
        assert code == 2

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["simulate"])
        assert info.value.code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "damperkit", "table1", "--format", "json"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert len(json.loads(proc.stdout)) == 3
