"""Command-line interface: exit codes, output files, overrides."""

import csv
import json
import shutil
import subprocess

import pytest

from kpo_anneal.cli import main

MICRO_CFG = """
base = lock-1kpo
dim_per_mode = 12
p_mhz = 50
omega_d_mhz = 10
t_s_ns = 40
t_sp_ns = 40
t_pp_ns = 120
t_r_ns = 60
t_rd_ns = 30
n_pump = 2
backend = numpy
sweep.n_pump = 1, 2
"""


@pytest.fixture
def micro_cfg(tmp_path):
    path = tmp_path / "micro.cfg"
    path.write_text(MICRO_CFG)
    return path


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    for name in ("lock-1kpo", "corr-2kpo", "anneal-2kpo", "slope-sweep",
                 "delay-sweep"):
        assert name in out


def test_validate_ok(micro_cfg, capsys):
    assert main(["validate", str(micro_cfg)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("ok:")
    assert "2 sweep point(s)" in out


def test_validate_rejects_bad_file(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("base = lock-1kpo\nwibble = 3\n")
    assert main(["validate", str(bad)]) == 1
    assert "wibble" in capsys.readouterr().err

    assert main(["validate", str(tmp_path / "missing.cfg")]) == 1
    assert main(["validate", "no-such-builtin"]) == 1


def test_run_writes_csv(micro_cfg, tmp_path, capsys):
    out = tmp_path / "result.csv"
    assert main(["run", "--scenario", str(micro_cfg), "--out", str(out)]) == 0
    with open(out, newline="") as f:
        rows = list(csv.reader(f))
    assert len(rows) == 3  # header + two sweep points
    header = rows[0]
    assert header[0] == "schedule.n_pump"
    assert "xi_plus" in header
    assert all(r[header.index("error")] == "" for r in rows[1:])


def test_run_writes_json_and_fast_renames(micro_cfg, tmp_path):
    out = tmp_path / "result.json"
    assert main(["run", "--scenario", str(micro_cfg), "--fast",
                 "--out", str(out), "--format", "json"]) == 0
    with open(out) as f:
        obj = json.load(f)
    assert obj["schema"] == 1
    assert obj["scenario"].endswith("-fast")
    assert len(obj["rows"]) == 2


def test_run_builtin_name_with_overrides(tmp_path):
    out = tmp_path / "r.csv"
    code = main(["run", "--scenario", "lock-1kpo",
                 "--set", "t_s_ns=40", "--set", "t_sp_ns=40",
                 "--set", "t_pp_ns=120", "--set", "t_r_ns=60",
                 "--set", "t_rd_ns=30", "--set", "n_pump=2",
                 "--set", "p_mhz=50", "--set", "backend=numpy",
                 "--set", "sweep.omega_d_mhz=10",
                 "--dim", "10", "--out", str(out)])
    assert code == 0
    with open(out, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0][0] == "drives.omega_d"
    assert len(rows) == 2


def test_run_config_errors(micro_cfg, tmp_path, capsys):
    out = str(tmp_path / "r.csv")
    assert main(["run", "--scenario", "no-such", "--out", out]) == 1
    assert main(["run", "--scenario", str(micro_cfg), "--out", out,
                 "--set", "bogus=1"]) == 1
    assert main(["run", "--scenario", str(micro_cfg), "--out", out,
                 "--set", "notanassignment"]) == 1
    # argparse usage problems surface as config errors, not exit 2
    assert main(["run", "--scenario", str(micro_cfg)]) == 1
    assert main(["run", "--scenario", str(micro_cfg), "--out", out,
                 "--format", "xml"]) == 1
    capsys.readouterr()


def test_run_numerical_failure_exit_code(micro_cfg, tmp_path, capsys):
    out = tmp_path / "r.csv"
    # second readout delay pushes the window past the plateau: that point
    # fails, the sweep completes, and the partial table is still written
    code = main(["run", "--scenario", str(micro_cfg), "--out", str(out),
                 "--set", "sweep.t_rd_ns=30,5000"])
    assert code == 2
    assert "failed" in capsys.readouterr().err
    with open(out, newline="") as f:
        rows = list(csv.reader(f))
    assert len(rows) == 3
    err_col = rows[0].index("error")
    assert rows[1][err_col] == ""
    assert rows[2][err_col] != ""


def test_run_unwritable_output(micro_cfg, tmp_path, capsys):
    out = tmp_path / "no" / "such" / "dir" / "r.csv"
    assert main(["run", "--scenario", str(micro_cfg), "--out", str(out)]) == 1
    assert "error:" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("kpo-anneal") is None,
                    reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["kpo-anneal", "list-scenarios"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "corr-2kpo" in proc.stdout
