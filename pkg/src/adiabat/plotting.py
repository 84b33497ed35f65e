"""Static figures written next to the CSV/JSON outputs."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "adiabat"
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3
plt.rcParams["font.size"] = 10

_SAVE_KW = {"metadata": {"Date": None}}


def _save(fig, path):
    fig.tight_layout()
    kw = _SAVE_KW if str(path).endswith(".svg") else {}
    fig.savefig(path, **kw)
    plt.close(fig)


def plot_trajectory(traj, path, eps=None):
    """Action change I(t) - I(0) and conserved-quantity drift against fast time."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax1.plot(traj.times, traj.action_change, lw=1.0, color="C0")
    ax1.set_ylabel(r"$I(t) - I(0)$")
    if eps is not None:
        ax1.set_title(rf"$\varepsilon = {eps:g}$")
    ax2.plot(traj.times, traj.K_values - traj.K_values[np.searchsorted(traj.times, 0.0)],
             lw=1.0, color="C3")
    ax2.set_ylabel(r"$K(t) - K(0)$")
    ax2.set_xlabel("t")
    _save(fig, path)


def plot_gamma_fit(sweep, fit, path):
    """log(eps*|dI|) against 1/eps with the fitted line and the theoretical slope."""
    eps = sweep.eps
    d = np.abs(sweep.delta_I)
    ok = np.array([r.usable for r in sweep.rows])
    x = 1.0 / eps
    y = np.log(eps * np.where(d > 0, d, np.nan))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(x[ok], y[ok], "o", color="C0", label="measured")
    if np.any(~ok):
        ax.plot(x[~ok], y[~ok], "x", color="0.5", label="unresolved")
    xs = np.linspace(x.min(), x.max(), 50)
    ax.plot(xs, fit.log_prefactor - fit.gamma_hat * xs, "-", color="C1",
            label=rf"fit $\hat\gamma = {fit.gamma_hat:.5f}$")
    if fit.gamma_theory is not None:
        x0 = xs[0]
        y0 = fit.log_prefactor - fit.gamma_hat * x0
        ax.plot(xs, y0 - fit.gamma_theory * (xs - x0), "--", color="k",
                label=rf"slope $-\gamma = -{fit.gamma_theory:.5f}$")
    ax.set_xlabel(r"$1/\varepsilon$")
    ax.set_ylabel(r"$\log(\varepsilon\,|\Delta I|)$")
    ax.legend()
    _save(fig, path)


def plot_phase_scan(scan, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ok = scan.resolved
    ax.plot(scan.phi0[ok], scan.delta_I[ok], "o", color="C0", label="measured")
    if np.any(~ok):
        ax.plot(scan.phi0[~ok], scan.delta_I[~ok], "x", color="0.5", label="unresolved")
    p = np.linspace(0, 2 * math.pi, 200)
    ax.plot(p, scan.amplitude * np.sin(p + scan.phase), "-", color="C1",
            label=rf"$A\sin(\varphi_0+\delta)$, residual {scan.residual:.3%}")
    ax.set_xlabel(r"$\varphi_0$")
    ax.set_ylabel(r"$\Delta I$")
    ax.legend()
    _save(fig, path)
