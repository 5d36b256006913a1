import numpy as np
import pytest

from lsshell.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VANISHED, exit_code, main
from lsshell.errors import ConfigError, SingularSystemError, StructureVanishedError
from lsshell.optimizer import read_history


def test_run_missing_config_is_config_error(tmp_path):
    assert main(["run", str(tmp_path / "missing.toml")]) == EXIT_CONFIG


def test_exit_code_categories():
    assert exit_code(ConfigError("x")) == EXIT_CONFIG
    assert exit_code(SingularSystemError("x", 2)) == EXIT_NUMERICAL
    assert exit_code(StructureVanishedError("x")) == EXIT_VANISHED


def test_check_prints_diagnostics_and_writes_nothing(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(["check", "plate"]) == 0
    text = capsys.readouterr().out
    for key in ("F ", "vertices", "triangles", "median 1/|grad phi|"):
        assert key in text
    assert list(tmp_path.iterdir()) == []


def test_initial_surface_outside_domain_is_config_error(tmp_path):
    cfg = tmp_path / "empty.toml"
    cfg.write_text("""
[domain]
extents = [1.0, 1.0, 0.5]
h_grid = 0.05
[initial]
kind = "plane"
z0 = 2.0
[material]
E = 1e5
nu = 0.3
thickness = 0.01
[filter]
R = 0.05
[supports]
clamp = [[[0, 0], [0, 1], [0, 0.5]]]
[loads]
area = [0, 0, -0.01]
[optimizer]
alpha = 100.0
""")
    assert main(["check", str(cfg)]) == EXIT_CONFIG


def test_run_and_export_round_trip(tmp_path):
    out = tmp_path / "out"
    assert main(["-q", "run", "dome", "--out", str(out), "--max-iters", "3", "--export-every", "1",
                 "--threads", "1", "--seed", "7"]) == 0
    rows = read_history(out / "history.csv")
    assert len(rows) == 3
    assert (out / "iter_0002" / "surface.obj").exists()
    exp = tmp_path / "exp"
    assert main(["-q", "export", str(out / "state.npz"), "--out", str(exp)]) == 0
    assert (exp / "final.obj").read_bytes() == (out / "final.obj").read_bytes()
    assert (exp / "best.obj").read_bytes() == (out / "best.obj").read_bytes()
    assert (exp / "final" / "fields.vtk").exists()


def test_export_bad_state(tmp_path):
    bad = tmp_path / "state.npz"
    np.savez(bad, psi=np.zeros(3))
    assert main(["export", str(bad)]) == EXIT_CONFIG


def test_negative_threads_rejected():
    assert main(["check", "dome", "--threads", "-2"]) == EXIT_CONFIG
