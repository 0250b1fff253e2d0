from __future__ import annotations

import subprocess
import sys

import pytest

from koopnav.cli import EXIT_OK, EXIT_RUNTIME, EXIT_SCENARIO, main


def test_run(scenario_dir, tmp_path, capsys):
    assert main(["run", str(scenario_dir / "no_obstacles.yaml"), "--out", str(tmp_path), "--seed", "3"]) == EXIT_OK
    assert (tmp_path / "run.csv").exists() and (tmp_path / "trajectory.svg").exists()
    assert "reached_goal=True" in capsys.readouterr().out


def test_predict(scenario_dir, capsys):
    path = str(scenario_dir / "circular_prediction.yaml")
    assert main(["predict", path, "--lifting", "p", "--history", "10", "--lookahead", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "lifting=psi_p" in out and "rmse=" in out


def test_predict_insufficient(tmp_path, capsys):
    f = tmp_path / "short.yaml"
    f.write_text("goal: [0, 0, 2]\nobstacles: [{radius: 0.5, motion: {center: [5, 0, 2]}}]\nsim: {duration: 3}\n")
    assert main(["predict", str(f)]) == EXIT_OK
    assert "insufficient" in capsys.readouterr().out


def test_bench(scenario_dir, capsys):
    assert main(["bench", str(scenario_dir / "three_obstacles.yaml"), "--reps", "10"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "koopman_fit_predict" in out and "mpc_build_solve" in out


@pytest.mark.parametrize("argv", [
    ["run", "/nonexistent/scenario.yaml"],
    ["bench", "{scen}", "--reps", "3"],
    ["predict", "{scen}", "--history", "40"],
    ["predict", "{empty}"],
])
def test_validation_failures(argv, scenario_dir, capsys):
    argv = [a.format(scen=scenario_dir / "three_obstacles.yaml", empty=scenario_dir / "no_obstacles.yaml")
            for a in argv]
    assert main(argv) == EXIT_SCENARIO
    assert "scenario error" in capsys.readouterr().err


def test_runtime_failure(scenario_dir, tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    assert main(["run", str(scenario_dir / "no_obstacles.yaml"), "--out", str(blocker / "x")]) == EXIT_RUNTIME


def test_module_entry_point(scenario_dir):
    proc = subprocess.run([sys.executable, "-m", "koopnav", "run", "/nonexistent.yaml"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_SCENARIO
