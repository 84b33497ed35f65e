"""Command-line experiment runner.

    adiabat <subcommand> [--config FILE] [--set key=value ...] [--out DIR]

Exit codes: 0 success, 1 usage/config error, 2 unresolved-results threshold
exceeded (or report tolerances failed), 3 internal numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .config import ExperimentConfig, parse_config
from .errors import AdiabatError, ConfigError
from .integrator import fmt17, integrate
from .model import ReducedState

log = logging.getLogger("adiabat")

EXIT_OK, EXIT_CONFIG, EXIT_UNRESOLVED, EXIT_NUMERIC = 0, 1, 2, 3
UNRESOLVED_LIMIT = 0.25

SUBCOMMANDS = ("simulate", "sweep", "fit-gamma", "oracle", "singularities", "phase-scan", "report")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _svg(cfg: ExperimentConfig) -> bool:
    return "svg" in cfg.formats


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    from .plotting import plot_trajectory

    eps = cfg["simulate.eps"]
    settings = cfg.settings
    if eps == 0:
        half = cfg["integration.xi_reach"] / 0.1
        settings = replace(settings, t_span=(-half, half))
    state0 = ReducedState(cfg["initial.I0"], cfg["initial.phi0"], 0.0, cfg["model.eta0"])
    traj = integrate(cfg.system, state0, eps, settings)
    traj.to_csv(out / "trajectory.csv")
    if _svg(cfg):
        plot_trajectory(traj, out / "trajectory.svg", eps)
    print(f"simulate: eps={eps:g} samples={len(traj.times)} max_K_drift={traj.max_K_drift:.3e}")
    return EXIT_OK


def _run_sweep(cfg: ExperimentConfig, out: Path):
    sweep = analysis.sweep_epsilon(
        cfg.system, cfg["model.eta0"], cfg["initial.phi0"], cfg.eps_grid,
        cfg.settings, I0=cfg["initial.I0"], workers=cfg.workers,
    )
    sweep.to_csv(out / "sweep.csv")
    frac = sweep.unresolved_fraction
    if frac > 0:
        log.warning("%d of %d sweep points unresolved", round(frac * len(sweep.rows)), len(sweep.rows))
    return sweep


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> int:
    sweep = _run_sweep(cfg, out)
    for r in sweep.rows:
        print(f"eps={r.eps:.6g} delta_I={r.result.delta_I:.6e} resolved={r.usable}")
    return EXIT_UNRESOLVED if sweep.unresolved_fraction > UNRESOLVED_LIMIT else EXIT_OK


def cmd_fit_gamma(cfg: ExperimentConfig, out: Path, sweep_csv=None) -> int:
    from .plotting import plot_gamma_fit

    if sweep_csv:
        model = analysis.model_snapshot(cfg.system, cfg["model.eta0"])
        sweep = analysis.SweepResult.read_csv(sweep_csv, model)
    else:
        sweep = _run_sweep(cfg, out)
    fit = analysis.fit_gamma(sweep)
    fit.write_json(out / "gamma_fit.json")
    if _svg(cfg):
        plot_gamma_fit(sweep, fit, out / "gamma_fit.svg")
    print(f"gamma_hat={fit.gamma_hat:.8f} gamma_theory={fit.gamma_theory:.8f} "
          f"stderr={fit.stderr_gamma:.2e}")
    return EXIT_UNRESOLVED if sweep.unresolved_fraction > UNRESOLVED_LIMIT else EXIT_OK


def cmd_oracle(cfg: ExperimentConfig, out: Path) -> int:
    eps_list = cfg["oracle.eps"] or tuple(cfg.eps_grid)
    omega, eta0, phi0, g = cfg["model.omega"], cfg["model.eta0"], cfg["initial.phi0"], cfg.system.g
    with open(out / "oracle.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "phi0", "closed_form", "quadrature", "rel_diff"])
        for eps in eps_list:
            a = analysis.melnikov_oracle(omega, eta0, eps, phi0, g)
            b = analysis.melnikov_quadrature(omega, eta0, eps, phi0, g)
            rel = abs(a - b) / abs(a) if a != 0 else abs(b)
            w.writerow([fmt17(eps), fmt17(phi0), fmt17(a), fmt17(b), fmt17(rel)])
            print(f"eps={eps:.6g} closed_form={a:.15e} quadrature={b:.15e} rel_diff={rel:.2e}")
    return EXIT_OK


def cmd_singularities(cfg: ExperimentConfig, out: Path) -> int:
    s = analysis.singularities(cfg["model.eta0"], cfg["singularities.k_min"],
                               cfg["singularities.k_max"], omega=cfg["model.omega"])
    _write_json(out / "singularities.json", s.to_json())
    print(f"nearest |Im xi| = {s.nearest_distance:.12g}, gamma = {s.gamma_theory:.12g}")
    return EXIT_OK


def cmd_phase_scan(cfg: ExperimentConfig, out: Path) -> int:
    from .plotting import plot_phase_scan

    scan = analysis.phase_scan(cfg.system, cfg["model.eta0"], cfg["phase.eps"],
                               analysis.phase_grid(cfg["phase.n"]), cfg.settings,
                               I0=cfg["initial.I0"], workers=cfg.workers)
    scan.to_csv(out / "phase_scan.csv")
    _write_json(out / "phase_scan.json", {
        "schema_version": analysis.SCHEMA_VERSION,
        "eps": cfg["phase.eps"],
        "amplitude": scan.amplitude,
        "phase": scan.phase,
        "residual": scan.residual,
    })
    if _svg(cfg):
        plot_phase_scan(scan, out / "phase_scan.svg")
    print(f"A={scan.amplitude:.6e} delta={scan.phase:.4e} residual={scan.residual:.4f}")
    return EXIT_OK


def cmd_report(cfg: ExperimentConfig, out: Path) -> int:
    from .plotting import plot_gamma_fit

    sweep = _run_sweep(cfg, out)
    fit = analysis.fit_gamma(sweep)
    fit.write_json(out / "gamma_fit.json")
    if _svg(cfg):
        plot_gamma_fit(sweep, fit, out / "gamma_fit.svg")
    omega, eta0 = cfg["model.omega"], cfg["model.eta0"]
    dev = max(
        abs(r.result.delta_I / analysis.melnikov_oracle(omega, eta0, r.eps, r.phi0, cfg.system.g) - 1) / r.eps
        for r in sweep.rows
    )
    measured = {
        "gamma_rel": fit.relative_error,
        "k_drift": max(r.result.K_drift for r in sweep.rows),
        "flatness": max(r.result.plateau_flatness for r in sweep.rows),
        "first_order": dev,
    }
    checks = {}
    for name, value in measured.items():
        tol = cfg[f"tolerance.{name}"]
        ok = value is not None and math.isfinite(value) and value <= tol
        checks[name] = {"value": value, "tolerance": tol, "pass": bool(ok)}
    passed = all(c["pass"] for c in checks.values()) and sweep.unresolved_fraction == 0
    _write_json(out / "report.json", {
        "schema_version": analysis.SCHEMA_VERSION,
        "gamma_hat": fit.gamma_hat,
        "gamma_theory": fit.gamma_theory,
        "stderr": fit.stderr_gamma,
        "n_points": fit.n_points,
        "unresolved_fraction": sweep.unresolved_fraction,
        "checks": checks,
        "passed": passed,
    })
    for name, c in checks.items():
        print(f"{'PASS' if c['pass'] else 'FAIL'} {name}: {c['value']:.4g} (tolerance {c['tolerance']:.4g})")
    return EXIT_OK if passed else EXIT_UNRESOLVED


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adiabat", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", type=Path, help="key = value configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration key (repeatable)")
    p.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    p.add_argument("--sweep-csv", type=Path, help="fit-gamma: read an existing sweep CSV")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(subcommand, config_path=None, overrides=(), out=None, sweep_csv=None) -> int:
    try:
        text = Path(config_path).read_text(encoding="utf-8") if config_path else ""
        cfg = parse_config(text, overrides)
    except (ConfigError, OSError) as exc:
        print(f"adiabat: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(out) if out else Path(cfg["output.directory"])
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"adiabat: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    handlers = {
        "simulate": cmd_simulate,
        "sweep": cmd_sweep,
        "fit-gamma": lambda c, o: cmd_fit_gamma(c, o, sweep_csv),
        "oracle": cmd_oracle,
        "singularities": cmd_singularities,
        "phase-scan": cmd_phase_scan,
        "report": cmd_report,
    }
    try:
        return handlers[subcommand](cfg, out_dir)
    except (AdiabatError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"adiabat: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(args.subcommand, args.config, args.overrides, args.out, args.sweep_csv)


if __name__ == "__main__":
    sys.exit(main())
