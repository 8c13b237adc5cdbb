import csv
import json
import math
from pathlib import Path

import pytest

from mane.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_NUMERIC, EXIT_PASS, main, resolve_config
from mane.errors import ConfigError

PRESETS = Path(__file__).resolve().parents[1] / "presets"


def run(tmp_path, command, preset, *sets):
    out = tmp_path / f"{preset}.json"
    argv = [command, "--config", str(PRESETS / f"{preset}.cfg"), "--out", str(out)]
    for s in sets:
        argv += ["--set", s]
    code = main(argv)
    report = json.loads(out.read_text()) if out.exists() else None
    return code, report, out


def test_integrate_kinetic_winding(tmp_path):
    code, rep, out = run(tmp_path, "integrate", "kinetic_integrate")
    assert code == EXIT_PASS and rep["pass"]
    assert rep["result"]["winding"] == [1, 0]
    assert max(rep["result"]["winding_distance"]) < 0.01
    rows = list(csv.reader(open(out.with_suffix(".csv"))))
    assert rows[0] == ["t", "q0", "q1", "p0", "p1", "H"]
    assert len(rows) == 102


def test_integrate_sol_rest(tmp_path):
    code, rep, _ = run(tmp_path, "integrate", "sol_rest_integrate")
    assert code == EXIT_PASS
    assert rep["result"]["max_abs_M"] <= 1e-10
    assert rep["result"]["monitor_drifts"]["m"] <= 1e-12


def test_integrate_reduced(tmp_path):
    code, rep, out = run(tmp_path, "integrate", "sol_reduced_integrate", "T=10")
    assert code == EXIT_PASS
    assert rep["config"]["T"] == 10.0           # override wins
    header = next(csv.reader(open(out.with_suffix(".csv"))))
    assert header == ["t", "z", "Mx", "My", "Mz", "H", "m"]


def test_zero_step_is_a_config_error(tmp_path, capsys):
    code, rep, _ = run(tmp_path, "integrate", "kinetic_integrate", "dt=0")
    assert code == EXIT_CONFIG and rep is None
    assert "dt" in capsys.readouterr().err


@pytest.mark.parametrize("bad", ["colour=red", "T=abc", "order=3", "hamiltonian=torus"])
def test_invalid_settings_rejected(tmp_path, bad):
    code, _, _ = run(tmp_path, "integrate", "kinetic_integrate", bad)
    assert code == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["integrate", "--config", str(tmp_path / "nope.cfg"),
                 "--out", str(tmp_path / "o.json")]) == EXIT_CONFIG


def test_solver_failure_exit_code(tmp_path):
    cfg = tmp_path / "blow.cfg"
    cfg.write_text("hamiltonian = sol\nq = 0,0,0\np = 30,30,30\nT = 100\ndt = 5\n")
    assert main(["integrate", "--config", str(cfg), "--out", str(tmp_path / "o.json")]) == EXIT_NUMERIC


def test_reports_are_deterministic(tmp_path):
    _, _, a = run(tmp_path, "integrate", "kinetic_integrate")
    first = a.read_bytes()
    _, _, b = run(tmp_path, "integrate", "kinetic_integrate")
    assert b.read_bytes() == first
    rep = json.loads(first)
    assert rep["schema_version"] == 1
    assert rep["config"]["seed"] == 0 and rep["config"]["hamiltonian"] == "kinetic"


def test_critical_kinetic(tmp_path):
    code, rep, _ = run(tmp_path, "critical", "kinetic_critical")
    assert code == EXIT_PASS
    est = rep["result"]["estimate"]
    assert abs(est["value"]) <= 1e-6 and est["lower_bound"] == 0.0
    assert rep["result"]["suspension"]["gap"] <= 1e-6


def test_critical_closed_theta(tmp_path):
    code, rep, _ = run(tmp_path, "critical", "closed_theta_critical")
    assert code == EXIT_PASS
    assert abs(rep["result"]["estimate"]["harmonic_coefficients"][0] + 0.7) <= 1e-3


def test_critical_bracket_failure_exit_code(tmp_path):
    code, rep, _ = run(tmp_path, "critical", "kinetic_critical", "bracket_lo=0.1",
                       "suspension=false")
    assert code == EXIT_FAIL and rep["pass"] is False


def test_stability_kinetic_passes(tmp_path):
    code, rep, _ = run(tmp_path, "stability", "kinetic_suspension_stability", "samples=2000")
    assert code == EXIT_PASS
    assert rep["result"]["pass"] is True and rep["result"]["min_lambda_X"] > 0.3


def test_liouville_control_fails(tmp_path):
    code, rep, _ = run(tmp_path, "stability", "liouville_negative_control", "samples=2000")
    assert code == EXIT_FAIL and rep["result"]["pass"] is False


def test_stability_rejects_wide_bump(tmp_path, capsys):
    eps = math.sqrt(2 * 0.45)
    code, _, _ = run(tmp_path, "stability", "kinetic_suspension_stability", f"eps={eps}")
    assert code == EXIT_CONFIG
    assert "eps" in capsys.readouterr().err


def test_sol_claim_default(tmp_path):
    code, rep, _ = run(tmp_path, "sol-claim", "sol_claim")
    assert code == EXIT_PASS
    orbits = rep["result"]["orbits"]
    assert len(orbits) > 0
    assert all(abs(o["integral_Mz_over_T"]) <= 1e-6 for o in orbits)
    assert any(o["m"] != 0 and o["log_identity_residual"] <= 1e-8 for o in orbits)


def test_sol_claim_empty_window(tmp_path, capsys):
    code, rep, _ = run(tmp_path, "sol-claim", "sol_claim", "n_seeds=0")
    assert code == EXIT_PASS
    assert rep["result"]["count"] == 0 and rep["warnings"]
    assert "warning" in capsys.readouterr().err


def test_command_mismatch_rejected():
    with pytest.raises(ConfigError):
        resolve_config("critical", {"command": "integrate"})
    with pytest.raises(ConfigError):
        resolve_config("critical", {"dt": "0.1"})
    cfg = resolve_config("critical", {"grid": "32, 32"})
    assert cfg["grid"] == [32, 32] and cfg.seed == 0
