import csv
import json

import numpy as np
import pytest

from adiabat.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_UNRESOLVED, main, run


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def out(tmp_path):
    return tmp_path / "out"


def test_singularities_json(out):
    assert main(["singularities", "--out", str(out)]) == EXIT_OK
    js = json.loads((out / "singularities.json").read_text())
    assert js["schema_version"] == 1
    assert js["gamma_theory"] == pytest.approx(np.pi / 2)


def test_oracle_table_agrees(out):
    assert main(["oracle", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "oracle.csv")
    assert len(rows) == 8
    for r in rows:
        assert float(r["quadrature"]) == pytest.approx(float(r["closed_form"]), rel=1e-8)


def test_simulate_at_zero_eps_is_flat(out):
    assert main(["simulate", "--out", str(out), "--set", "simulate.eps=0"]) == EXIT_OK
    rows = read_csv(out / "trajectory.csv")
    assert {r["I"] for r in rows} == {"1"}
    assert list(rows[0]) == ["t", "I", "phi", "xi", "eta", "K"]
    assert (out / "trajectory.svg").read_text().lstrip().startswith("<?xml")


def test_simulate_without_svg(out):
    assert main(["simulate", "--out", str(out), "--set", "output.formats=csv"]) == EXIT_OK
    assert (out / "trajectory.csv").exists()
    assert not (out / "trajectory.svg").exists()


def test_fit_gamma_standard_window(out):
    assert main(["fit-gamma", "--out", str(out)]) == EXIT_OK
    js = json.loads((out / "gamma_fit.json").read_text())
    assert js["schema_version"] == 1
    assert abs(js["gamma_hat"] - 1.5707963) / 1.5707963 <= 0.05
    assert (out / "gamma_fit.svg").exists()
    # refit from the stored sweep
    again = out.parent / "again"
    assert main(["fit-gamma", "--out", str(again), "--sweep-csv", str(out / "sweep.csv")]) == EXIT_OK
    js2 = json.loads((again / "gamma_fit.json").read_text())
    assert js2["gamma_hat"] == js["gamma_hat"]


def test_sweep_output_is_deterministic(tmp_path):
    args = ["sweep", "--set", "integration.method=rk4_fixed", "--set", "integration.step=0.1",
            "--set", "sweep.eps=0.2 0.15"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


def test_sweep_mostly_unresolved_exits_2(out):
    # predicted changes below 1e-12 cannot be resolved
    code = main(["sweep", "--out", str(out), "--set", "sweep.eps=0.03 0.035 0.04 0.1"])
    assert code == EXIT_UNRESOLVED


def test_sweep_few_unresolved_still_succeeds(out):
    code = main(["sweep", "--out", str(out), "--set", "sweep.eps=0.03 0.1 0.12 0.15 0.2"])
    assert code == EXIT_OK


def test_phase_scan_outputs(out):
    assert main(["phase-scan", "--out", str(out), "--set", "phase.eps=0.15"]) == EXIT_OK
    rows = read_csv(out / "phase_scan.csv")
    assert len(rows) == 8
    js = json.loads((out / "phase_scan.json").read_text())
    assert js["schema_version"] == 1
    assert (out / "phase_scan.svg").exists()


def test_report_passes_on_standard_window(out):
    assert main(["report", "--out", str(out)]) == EXIT_OK
    js = json.loads((out / "report.json").read_text())
    assert js["passed"] is True
    assert js["gamma_theory"] == pytest.approx(np.pi / 2)
    assert set(js["checks"]) == {"gamma_rel", "k_drift", "flatness", "first_order"}


def test_report_fails_on_tight_tolerance(out):
    assert main(["report", "--out", str(out), "--set", "tolerance.gamma_rel=1e-6"]) == EXIT_UNRESOLVED
    js = json.loads((out / "report.json").read_text())
    assert js["passed"] is False and js["checks"]["gamma_rel"]["pass"] is False


def test_config_file(tmp_path, out):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("model.eta0 = 8.0\nsingularities.k_max = 2\n", encoding="utf-8")
    assert run("singularities", cfg, (), out) == EXIT_OK
    js = json.loads((out / "singularities.json").read_text())
    assert len(js["singularities"]) == 4
    assert js["gamma_theory"] == pytest.approx(np.pi / 4)


def test_config_error_exit_code(tmp_path, out, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("model.eta0 = 2\nmodel.eta0 = 3\n")
    assert run("singularities", cfg, (), out) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err
    assert run("singularities", tmp_path / "missing.cfg", (), out) == EXIT_CONFIG


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == EXIT_CONFIG


def test_numeric_failure_exit_code(out, capsys):
    code = main(["simulate", "--out", str(out), "--set", "integration.method=rk4_fixed",
                 "--set", "integration.step=10", "--set", "simulate.eps=2", "--set", "model.eta0=0.01"])
    assert code == EXIT_NUMERIC
    assert "numeric failure" in capsys.readouterr().err


def test_svg_output_is_reproducible(tmp_path):
    args = ["simulate", "--set", "simulate.eps=0.2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "trajectory.svg").read_bytes() == (tmp_path / "b" / "trajectory.svg").read_bytes()
