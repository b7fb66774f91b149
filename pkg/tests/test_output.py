import csv
import json

import pytest

from gpcflock.harness import RunRecord, run
from gpcflock.output import (
    OutputError,
    emit,
    emit_table,
    load_record_json,
    record_columns,
    write_record_csv,
)
from gpcflock.recipes import LINEAR, control_panel, run_recipe, uniform_base


def test_empty_record_header_only(tmp_path):
    rec = RunRecord.empty(uniform_base(N=2, M=1))
    path = write_record_csv(rec, tmp_path / "empty.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 1
    assert lines[0].split(",") == record_columns(rec)


def test_csv_header_names_every_column(tmp_path):
    rec = run(control_panel(1.0, LINEAR, 1.0, T=0.1))
    path = emit(rec, tmp_path / "ctrl", "csv")
    rows = list(csv.reader(path.open()))
    header = rows[0]
    assert header[0] == "t" and "u_0_0" in header and "diverged" in header and "mean_drift" not in header
    assert all(len(r) == len(header) for r in rows)
    assert len(rows) == len(rec.times) + 1
    # values survive the text round trip exactly
    assert float(rows[-1][1]) == rec.vbar[-1, 0, 0]


def test_uncontrolled_csv_has_drift_column(tmp_path):
    rec = run(uniform_base(T=0.05))
    path = emit(rec, tmp_path / "u.csv", "csv")
    header = path.read_text().splitlines()[0].split(",")
    assert "mean_drift" in header and "u_0_0" not in header


def test_json_round_trip_bit_exact(tmp_path):
    for cfg in (uniform_base(T=0.1), control_panel(1.0, LINEAR, 0.1, T=0.1)):
        rec = run(cfg)
        path = emit(rec, tmp_path / cfg.name, "json")
        back = load_record_json(path)
        assert back == rec
        assert json.loads(path.read_text())["schema"].startswith("gpcflock.runrecord/")


def test_json_rejects_other_schema(tmp_path):
    p = tmp_path / "x.json"
    p.write_text(json.dumps({"schema": "other/9"}))
    with pytest.raises(ValueError):
        load_record_json(p)


def test_byte_identical_reruns(tmp_path):
    cfg = uniform_base(T=0.2)
    a = emit(run(cfg), tmp_path / "a", "csv").read_bytes()
    b = emit(run(cfg), tmp_path / "b", "csv").read_bytes()
    assert a == b


def test_io_error_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OutputError, match="file"):
        emit(RunRecord.empty(uniform_base()), blocker / "sub" / "r", "csv")


def test_table_json(tmp_path):
    path = emit_table(["M", "err"], [[1, 0.5], [2, 0.25]], tmp_path / "t", "json")
    data = json.loads(path.read_text())
    assert data["columns"] == ["M", "err"] and data["rows"] == [[1.0, 0.5], [2.0, 0.25]]


def test_fig4_recipe_emits_four_overlay_files(tmp_path):
    paths = run_recipe("fig4", tmp_path)
    assert len(paths) == 4
    for p in paths:
        rows = list(csv.DictReader(p.open()))
        series = {r["series"] for r in rows}
        kappas = sorted(s.rsplit("_k", 1)[1] for s in series)
        assert kappas == ["0.1", "1", "inf"]
