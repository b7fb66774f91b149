import csv
import json
import shutil
import subprocess

import pytest

from gpcflock.cli import main, parse_orders
from gpcflock.config import dump_config, load_config
from gpcflock.rate import Deterministic
from gpcflock.recipes import LINEAR, control_panel, uniform_base


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "scenario.yaml"
    dump_config(uniform_base(name="s", T=0.2), path)
    return path


def test_parse_orders():
    assert parse_orders("0..3") == [0, 1, 2, 3]
    assert parse_orders("1,4,6") == [1, 4, 6]


def test_simulate_writes_csv(cfg_path, tmp_path):
    assert main(["simulate", str(cfg_path), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.reader((tmp_path / "o" / "s.csv").open()))
    assert len(rows) == 202


def test_flags_override_config(cfg_path, tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", str(cfg_path), "--out", str(out), "--dt", "0.01", "--order", "2", "--format", "json", "--seed", "5"]) == 0
    data = json.loads((out / "s.json").read_text())
    assert data["M"] == 2 and data["config"]["dt"] == 0.01 and data["config"]["init"]["seed"] == 5


def test_kappa_flag(tmp_path):
    path = tmp_path / "c.yaml"
    dump_config(control_panel(1.0, LINEAR, 1.0, T=0.1).replace(name="c"), path)
    assert main(["simulate", str(path), "--kappa", "0.5", "--out", str(tmp_path)]) == 0
    assert main(["simulate", str(path), "--kappa", "inf", "--out", str(tmp_path)]) == 0
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert "mean_drift" in header  # control switched off


def test_kappa_without_control_is_config_error(cfg_path):
    assert main(["simulate", str(cfg_path), "--kappa", "1.0"]) == 2


def test_converge_and_oracle_and_mc(cfg_path, tmp_path, capsys):
    out = str(tmp_path / "o")
    assert main(["converge", str(cfg_path), "--orders", "0..2", "--out", out]) == 0
    assert "M=  2" in capsys.readouterr().out
    assert main(["oracle", str(cfg_path), "--out", out]) == 0
    assert main(["compare-mc", str(cfg_path), "--samples", "50", "--dt", "0.01", "--out", out]) == 0
    assert main(["compare-mc", str(cfg_path), "--samples", "0", "--out", out]) == 2


def test_config_error_exit(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("N: 0\n")
    assert main(["simulate", str(bad)]) == 2


def test_oracle_unavailable_is_config_error(tmp_path):
    path = tmp_path / "c.yaml"
    dump_config(control_panel(1.0, LINEAR, 1.0, T=0.1), path)
    assert main(["oracle", str(path), "--out", str(tmp_path)]) == 2


def test_divergence_exit_with_partial_output(tmp_path):
    path = tmp_path / "d.yaml"
    dump_config(uniform_base(name="d", M=1, T=2.0, dt=1e-2, rate=Deterministic(-30.0)), path)
    assert main(["simulate", str(path), "--out", str(tmp_path)]) == 3
    rows = list(csv.reader((tmp_path / "d.csv").open()))
    assert 1 < len(rows) < 202 and rows[-1][-1] == "1"


def test_io_error_exit(cfg_path, tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["simulate", str(cfg_path), "--out", str(blocker / "x")]) == 4
    assert main(["simulate", str(tmp_path / "missing.yaml")]) == 4


def test_recipe_with_overrides(tmp_path):
    assert main(["recipe", "fig3", "--out", str(tmp_path), "--order", "4"]) == 0
    assert (tmp_path / "fig3" / "summary.csv").exists()


@pytest.mark.skipif(shutil.which("gpcflock") is None, reason="console script not installed")
def test_console_script(cfg_path, tmp_path):
    res = subprocess.run(["gpcflock", "simulate", str(cfg_path), "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip().endswith("s.csv")
    assert load_config(cfg_path).name == "s"
