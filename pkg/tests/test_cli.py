import json
import subprocess
import sys

import pytest

from evoshift.cli import main

CONFIG = """
[model]
kind = "quadratic"
r = 2.0
g = "1"
theta = "sin(2*pi*t)"

[grid]
n_points = 257

[solver]
steps_per_period = 64

[scenario]
mode = "eigen"
epsilon = [0.2]
"""


@pytest.fixture
def config_path(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(CONFIG)
    return p


def test_run_succeeds(config_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(config_path), "--out", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text())["ok"] is True
    assert "s00_eigen_eps0.2_c1: ok" in capsys.readouterr().out


def test_mode_override(config_path, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(config_path), "--out", str(out), "--mode", "critical-speed"]) == 0
    assert json.loads((out / "summary.json").read_text())["mode"] == "critical-speed"


def test_invalid_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(CONFIG.replace("r = 2.0\n", ""))
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "model.r" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path):
    assert main(["run", str(tmp_path / "missing.toml")]) == 2


def test_failed_scenario_exit_code(tmp_path):
    p = tmp_path / "fail.toml"
    p.write_text(CONFIG.replace('mode = "eigen"', 'mode = "hj-profile"') + "c = [50.0]\n")
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 1


def test_check_subset(capsys):
    assert main(["check", "--only", "10"]) == 0
    assert "[PASS]" in capsys.readouterr().out
    assert main(["check", "--only", "99"]) == 2


def test_console_script_and_log_env(config_path, tmp_path):
    env = {"EVOSHIFT_LOG": "info", "PATH": "/usr/bin:/bin"}
    proc = subprocess.run([sys.executable, "-m", "evoshift.cli", "run", str(config_path), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert "INFO" in proc.stderr
