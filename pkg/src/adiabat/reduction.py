"""Isoenergetic reduction and flow-box charts of the slow motion.

On a fixed energy level H0(I, y, x) + eps*H1(I, phi, y, x) = h0 the action can
be solved for, I = I(y, x, phi; h0).  At eps = 0 this defines the slow
Hamiltonian F0(y, x) = -I(y, x; h0) whose flow

    dx/dxi = dF0/dy = (dH0/dy) / omega0,   dy/dxi = -dF0/dx = -(dH0/dx) / omega0

is straightened by flow-box coordinates: eta is the value of F0 on a level
line and xi the slow time along it, measured from an initial section.  The map
(xi, eta) -> (x, y) has unit Jacobian determinant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, ModelDomainError
from .integrator import fixed_step_solve, fmt17
from .model import GenericSlowFast, flowbox_from_xy, xy_from_flowbox

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50


def isoenergetic_reduce(system: GenericSlowFast, phi, y, x, h0, eps, full_output=False):
    """Solve H0(I, y, x) + eps*H1(I, phi, y, x) = h0 for I inside the action box.

    Newton iteration with derivative omega0 + eps*dH1/dI, falling back to a
    bracketed solve when Newton leaves the box or stalls.  With
    ``full_output`` returns (I, newton_iterations, residual).
    """
    lo, hi = system.box["I"]

    def residual(I):
        return float(system.H0(I, y, x) + eps * system.H1(I, phi, y, x) - h0)

    I = 0.5 * (lo + hi)
    iterations = 0
    r = residual(I)
    while abs(r) > NEWTON_TOL and iterations < NEWTON_MAXITER:
        d = float(system.dH0_dI(I, y, x) + eps * system.dH1_dI(I, phi, y, x))
        if d == 0.0:
            break
        I_new = I - r / d
        if not lo <= I_new <= hi:
            break
        I = I_new
        iterations += 1
        r = residual(I)

    if abs(r) > NEWTON_TOL:
        r_lo, r_hi = residual(lo), residual(hi)
        if r_lo * r_hi > 0:
            raise ConvergenceError(
                f"energy h0 = {h0!r} not attained for I in [{lo}, {hi}] (root outside box)"
            )
        I = brentq(residual, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        r = residual(I)
        if abs(r) > NEWTON_TOL:
            raise ConvergenceError(f"isoenergetic reduction residual {r!r} exceeds {NEWTON_TOL}")
    if full_output:
        return I, iterations, r
    return I


def _reduce_vec(system: GenericSlowFast, y, x, h0):
    """Vectorised eps = 0 reduction: I(y, x) with H0(I, y, x) = h0."""
    lo, hi = system.box["I"]
    I = np.full(np.broadcast(y, x).shape, 0.5 * (lo + hi))
    for _ in range(NEWTON_MAXITER):
        r = system.H0(I, y, x) - h0
        if np.all(np.abs(r) <= NEWTON_TOL):
            return I
        I = I - r / system.dH0_dI(I, y, x)
    r = system.H0(I, y, x) - h0
    if np.any(np.abs(r) > NEWTON_TOL):
        raise ConvergenceError(f"slow-flow reduction did not converge (max residual {np.max(np.abs(r))!r})")
    return I


def slow_hamiltonian(system: GenericSlowFast, y, x, h0):
    """F0(y, x) = -I(y, x; h0)."""
    return -_reduce_vec(system, y, x, h0)


@dataclass(frozen=True)
class FlowBoxChart:
    """A chart (xi, eta) -> (x, y) with optional inverse and a validity box."""

    forward: Callable
    inverse: Callable | None
    xi_bounds: tuple[float, float]
    eta_bounds: tuple[float, float]
    grid_xi: np.ndarray | None = None
    grid_eta: np.ndarray | None = None
    grid_x: np.ndarray | None = None
    grid_y: np.ndarray | None = None

    def contains(self, xi, eta, margin=0.0) -> bool:
        return (
            self.xi_bounds[0] + margin <= xi <= self.xi_bounds[1] - margin
            and self.eta_bounds[0] + margin <= eta <= self.eta_bounds[1] - margin
        )

    def to_csv(self, path):
        if self.grid_x is None:
            raise ValueError("chart carries no grid to export")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["xi", "eta", "x", "y"])
            for i, eta in enumerate(self.grid_eta):
                for j, xi in enumerate(self.grid_xi):
                    w.writerow([fmt17(xi), fmt17(eta), fmt17(self.grid_x[i, j]), fmt17(self.grid_y[i, j])])


def example_chart(omega=1.0, h0=0.0, xi_bounds=(-20.0, 20.0), eta_bounds=(0.25, 8.0)) -> FlowBoxChart:
    """Closed-form chart of the example system in reduced-Hamiltonian coordinates.

    With F0 = (y**2/2 + exp(-x) - h0)/omega the slow time is omega times the
    closed-form xi, and the level value is (slow energy - h0)/omega.  For
    omega = 1, h0 = 0 the chart coincides with :func:`xy_from_flowbox`.
    """

    def forward(xi, eta):
        return xy_from_flowbox(np.asarray(xi) / omega, h0 + omega * np.asarray(eta))

    def inverse(x, y):
        xi_t, eta_t = flowbox_from_xy(x, y)
        return omega * np.asarray(xi_t), (np.asarray(eta_t) - h0) / omega

    return FlowBoxChart(forward, inverse, xi_bounds, eta_bounds)


def jacobian_det(chart: FlowBoxChart, point, rel_step=1e-6):
    """Central-difference determinant of d(x, y)/d(xi, eta) at ``point``.

    ``point`` is (xi, eta); array entries are evaluated elementwise.
    """
    xi = np.asarray(point[0], dtype=float)
    eta = np.asarray(point[1], dtype=float)
    hx = rel_step * np.maximum(1.0, np.abs(xi))
    he = rel_step * np.maximum(1.0, np.abs(eta))
    for a, b in zip(np.ravel(xi), np.ravel(eta)):
        margin_ok = (
            chart.xi_bounds[0] < a - rel_step * max(1.0, abs(a))
            and a + rel_step * max(1.0, abs(a)) < chart.xi_bounds[1]
            and chart.eta_bounds[0] < b - rel_step * max(1.0, abs(b))
            and b + rel_step * max(1.0, abs(b)) < chart.eta_bounds[1]
        )
        if not margin_ok:
            raise ModelDomainError(f"point {(float(a), float(b))} too near the chart edge for the stencil")
    xp, yp = chart.forward(xi + hx, eta)
    xm, ym = chart.forward(xi - hx, eta)
    x_xi, y_xi = (np.asarray(xp) - xm) / (2 * hx), (np.asarray(yp) - ym) / (2 * hx)
    xp, yp = chart.forward(xi, eta + he)
    xm, ym = chart.forward(xi, eta - he)
    x_eta, y_eta = (np.asarray(xp) - xm) / (2 * he), (np.asarray(yp) - ym) / (2 * he)
    det = x_xi * y_eta - x_eta * y_xi
    return float(det) if np.ndim(det) == 0 else det


class _SlowFlowChart:
    """Forward and inverse maps of a flow-box chart built by integrating the slow flow."""

    def __init__(self, system, h0, section_y, xi_max, max_step):
        self.system = system
        self.h0 = h0
        self.section_y = section_y
        self.n_steps = max(50, int(math.ceil(xi_max / max_step)))
        self.grid = None

    def section(self, eta):
        """Point of the initial section y = section_y with F0 = eta.

        Since F0 = -I on the energy level, the point solves H0(-eta, y_s, x) = h0.
        """
        eta = np.asarray(eta, dtype=float)
        levels, where = np.unique(eta.ravel(), return_inverse=True)
        lo, hi = self.system.box["x"]
        ys = self.section_y
        roots = np.empty_like(levels)
        for i, e in enumerate(levels):
            fn = lambda x: float(self.system.H0(-e, ys, x)) - self.h0
            if fn(lo) * fn(hi) > 0:
                raise ConvergenceError(f"initial section misses level eta = {e!r} inside x box")
            roots[i] = brentq(fn, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        return roots[where].reshape(eta.shape)

    def _field(self, z):
        x, y = z
        I = _reduce_vec(self.system, y, x, self.h0)
        w = self.system.dH0_dI(I, y, x)
        return np.array([self.system.dH0_dy(I, y, x) / w, -self.system.dH0_dx(I, y, x) / w])

    def forward(self, xi, eta):
        xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
        shape = xi.shape
        x0 = self.section(eta.ravel())
        z0 = np.array([x0, np.full_like(x0, self.section_y)])
        z = fixed_step_solve(self._field, z0, xi.ravel(), self.n_steps)
        x, y = z[0].reshape(shape), z[1].reshape(shape)
        if x.ndim == 0:
            return float(x), float(y)
        return x, y

    def inverse(self, x, y):
        """Nearest grid node as seed, then Newton on the forward map."""
        gx, gy, gxi, geta = self.grid
        d = (gx - x) ** 2 + (gy - y) ** 2
        i, j = np.unravel_index(np.argmin(d), d.shape)
        xi, eta = gxi[j], geta[i]
        target = np.array([x, y])
        h = 1e-6
        for _ in range(NEWTON_MAXITER):
            # centre and the four stencil points in one batched forward call
            px = xi + np.array([0.0, h, -h, 0.0, 0.0])
            pe = eta + np.array([0.0, 0.0, 0.0, h, -h])
            fx, fy = self.forward(px, pe)
            r = np.array([fx[0], fy[0]]) - target
            if np.max(np.abs(r)) <= 1e-13 * (1.0 + np.max(np.abs(target))):
                return float(xi), float(eta)
            J = np.array([
                [(fx[1] - fx[2]) / (2 * h), (fx[3] - fx[4]) / (2 * h)],
                [(fy[1] - fy[2]) / (2 * h), (fy[3] - fy[4]) / (2 * h)],
            ])
            dxi, deta = np.linalg.solve(J, r)
            xi, eta = xi - dxi, eta - deta
            if abs(dxi) + abs(deta) < 1e-15:
                return float(xi), float(eta)
        raise ConvergenceError(f"chart inverse did not converge at (x, y) = {(x, y)}")


def build_flowbox(system: GenericSlowFast, h0, xi_grid, eta_grid, section_y=0.0,
                  max_step=0.025, fold_tol=1e-3) -> FlowBoxChart:
    """Flow-box chart of the slow flow of F0 on the energy level h0.

    The initial section is the line y = ``section_y`` parametrised by the level
    value eta.  Each grid node is reached by integrating the slow flow from the
    section for a slow time xi with a fixed number of 8th-order steps.
    """
    xi_grid = np.asarray(xi_grid, dtype=float)
    eta_grid = np.asarray(eta_grid, dtype=float)
    xi_max = max(abs(xi_grid[0]), abs(xi_grid[-1]))
    chart = _SlowFlowChart(system, h0, section_y, xi_max, max_step)
    XI, ETA = np.meshgrid(xi_grid, eta_grid)
    try:
        gx, gy = chart.forward(XI, ETA)
    except FloatingPointError as exc:
        raise ConvergenceError(f"slow-flow integration failed: {exc}") from exc
    if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gy))):
        raise ConvergenceError("slow-flow integration produced non-finite values")
    if len(xi_grid) > 1 and len(eta_grid) > 1:
        x_eta, x_xi = np.gradient(gx, eta_grid, xi_grid)
        y_eta, y_xi = np.gradient(gy, eta_grid, xi_grid)
        det = x_xi * y_eta - x_eta * y_xi
        if np.min(np.abs(det)) < fold_tol:
            raise ConvergenceError(f"fold detected: grid Jacobian reaches {np.min(np.abs(det))!r}")
    chart.grid = (gx, gy, xi_grid, eta_grid)
    return FlowBoxChart(
        forward=chart.forward,
        inverse=chart.inverse,
        xi_bounds=(float(xi_grid[0]), float(xi_grid[-1])),
        eta_bounds=(float(eta_grid[0]), float(eta_grid[-1])),
        grid_xi=xi_grid,
        grid_eta=eta_grid,
        grid_x=gx,
        grid_y=gy,
    )
