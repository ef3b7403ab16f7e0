from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from crt_records import __version__
from crt_records.cli import build_id, dumps_csv, main
from crt_records.errors import InvalidParameterError
from crt_records.record_process import RECORD_COLUMNS
from crt_records.suites import RunConfig, pmap, worker_count


def test_sample_tree_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(["sample-tree", "--n", "20", "--seed", "3", "--out", str(a)]) == 0
    assert main(["sample-tree", "--n", "20", "--seed", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 39


def test_sample_tree_edge_cases(tmp_path, capsys):
    assert main(["sample-tree", "--n", "1"]) == 0
    out = capsys.readouterr().out
    assert len(out.splitlines()) == 1 and out.startswith("- ")
    assert main(["sample-tree", "--grid", "2", "--out", str(tmp_path / "h.txt")]) == 0
    lines = (tmp_path / "h.txt").read_text().splitlines()
    assert lines[0].startswith("# step_mass") and len(lines) == 4


def test_unwritable_path(capsys):
    assert main(["sample-tree", "--n", "3", "--out", "/nonexistent-dir/x.txt"]) == 2


def test_verify_analytics(tmp_path, capsys):
    out = tmp_path / "an.json"
    assert main(["verify", "--suite", "analytics", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["passed"] is True
    assert rep["build"].startswith(__version__)
    assert rep["config"]["alpha"] == 0.5 and rep["config"]["suite"] == "analytics"
    assert all({"name", "value", "target", "tolerance", "passed"} <= set(c) for c in rep["checks"])
    assert main(["verify-analytics", "--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "b.json").read_bytes() == out.read_bytes()


def test_underpowered_rayleigh(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["verify", "--suite", "rayleigh", "--replicates", "10", "--out", str(out)]) == 2
    assert "underpowered" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("argv", [
    ["verify", "--suite", "nope"],
    ["verify", "--suite", "moments", "--alpha", "-1"],
    ["verify", "--suite", "moments", "--replicates", "abc"],
    ["verify", "--suite", "moments", "--seed", "-4"],
    ["verify", "--suite", "moments", "--format", "xml"],
    ["sample-tree"],
])
def test_usage_errors(tmp_path, capsys, argv):
    out = tmp_path / "x.out"
    assert main(argv + ["--out", str(out)]) == 2
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_statistical_failure_exit_code(tmp_path, capsys):
    out = tmp_path / "m.json"
    code = main(["verify", "--suite", "moments", "--replicates", "2000", "--threshold-scale", "1e-9",
                 "--out", str(out)])
    assert code == 1
    assert json.loads(out.read_text())["passed"] is False


def test_records_csv_schema(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["verify", "--suite", "rayleigh", "--n", "256", "--replicates", "1000", "--format", "csv",
                 "--out", str(out), "--threshold-scale", "3"])
    assert code in (0, 1)
    rows = list(csv.reader(out.open()))
    assert tuple(rows[0]) == RECORD_COLUMNS
    assert len(rows) == 1001
    summary = json.loads((tmp_path / "r.csv.summary.json").read_text())
    assert summary["config"]["format"] == "csv"
    assert [f.name for f in tmp_path.iterdir() if f.name.startswith(".")] == []


def test_dumps_csv_uses_repr_floats():
    text = dumps_csv(("a", "b"), [{"a": 1, "b": 0.1}, {"a": 2, "b": 1e-20}])
    assert text == "a,b\n1,0.1\n2,1e-20\n"


def test_run_config_defaults_and_validation():
    cfg = RunConfig(suite="masses")
    assert cfg.grid == 100_000 and cfg.replicates == 200
    assert "out" not in cfg.as_dict()
    with pytest.raises(InvalidParameterError):
        RunConfig(suite="other")
    with pytest.raises(InvalidParameterError):
        RunConfig(suite="moments", format="xml")
    with pytest.raises(InvalidParameterError):
        RunConfig(suite="moments", alpha=0.0)
    with pytest.raises(InvalidParameterError):
        RunConfig(suite="moments", threshold_scale=0.0)


def test_worker_env(monkeypatch):
    monkeypatch.setenv("CRT_RECORDS_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("CRT_RECORDS_THREADS", "many")
    with pytest.raises(InvalidParameterError):
        worker_count()
    assert pmap(abs, [-1, 2, -3], workers=2) == [1, 2, 3]


def test_build_id():
    assert build_id().startswith(__version__)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "crt_records", "sample-tree", "--n", "2"],
                         capture_output=True, text=True, cwd=tmp_path)
    assert res.returncode == 0
    assert len(res.stdout.splitlines()) == 3
