"""Action, period and frequency of a frozen one-degree-of-freedom fast system.

The action of a closed orbit E(p, q) = h is the enclosed area divided by 2*pi.
The orbit is split into an upper and a lower momentum branch between the two
turning points q_- < q_+ on the line p = p_center, and

    I = 1/(2 pi) * integral_{q_-}^{q_+} (p_up(q) - p_down(q)) dq
    T = integral_{q_-}^{q_+} (1/E_p(p_up, q) - 1/E_p(p_down, q)) dq

Both integrands have square-root behaviour at the turning points, which the
substitution q = q_mid - half_width*cos(theta) removes; the smooth integrand in
theta is then handled by composite Gauss-Legendre panels.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import NoClosedOrbitError

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class QuadratureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FrozenFastSystem:
    """Fast Hamiltonian E(p, q) with the slow parameters baked in.

    The orbits are assumed to cross every vertical line q = const at most twice
    and to have their turning points on the line p = p_center; ``q_center`` is a
    point inside the potential well.
    """

    energy: Callable[[float, float], float]
    dE_dp: Callable[[float, float], float]
    dE_dq: Callable[[float, float], float]
    q_bounds: tuple[float, float]
    p_bounds: tuple[float, float]
    q_center: float = 0.0
    p_center: float = 0.0

    def turning_points(self, h):
        e = self.energy
        pc, qc = self.p_center, self.q_center
        if not e(pc, qc) < h:
            raise NoClosedOrbitError(f"energy {h!r} is below the well bottom {e(pc, qc)!r}")
        lo, hi = self.q_bounds
        for edge in (lo, hi):
            if not e(pc, edge) > h:
                raise NoClosedOrbitError(
                    f"level E = {h!r} is not closed inside q in {self.q_bounds} (no turning point)"
                )
        g = lambda q: e(pc, q) - h
        return self._polish(g, lo, qc), self._polish(g, qc, hi)

    def _polish(self, g, a, b):
        root = brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        # one Newton step along q with the analytic derivative
        d = self.dE_dq(self.p_center, root)
        if d != 0.0:
            cand = root - g(root) / d
            if a <= cand <= b and abs(g(cand)) < abs(g(root)):
                root = cand
        return root

    def momentum_branches(self, q, h):
        e = self.energy
        pc = self.p_center
        plo, phi = self.p_bounds
        g = lambda p: e(p, q) - h
        if not (g(phi) > 0 and g(plo) > 0):
            raise NoClosedOrbitError(f"orbit leaves the momentum box at q = {q!r}")
        if g(pc) >= 0:
            return pc, pc
        up = brentq(g, pc, phi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        down = brentq(g, plo, pc, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        return up, down


def _panel_rule(integrand, panels):
    edges = np.linspace(0.0, math.pi, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    theta = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return float(np.dot(w, [integrand(t) for t in theta]))


def _adaptive(integrand, rtol):
    panels = 2
    prev = _panel_rule(integrand, panels)
    for _ in range(6):
        panels *= 2
        cur = _panel_rule(integrand, panels)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev = cur
    warnings.warn(f"quadrature tolerance {rtol} not met; estimate {cur!r}", QuadratureWarning)
    return cur


def action_of_energy(system: FrozenFastSystem, h, rtol=1e-12) -> float:
    """Action I = (enclosed area)/(2 pi) of the orbit E = h."""
    q_lo, q_hi = system.turning_points(h)
    mid, half = 0.5 * (q_hi + q_lo), 0.5 * (q_hi - q_lo)

    def integrand(theta):
        q = mid - half * math.cos(theta)
        up, down = system.momentum_branches(q, h)
        return (up - down) * half * math.sin(theta)

    return _adaptive(integrand, rtol) / (2.0 * math.pi)


def period_of_energy(system: FrozenFastSystem, h, rtol=1e-12) -> tuple[float, float]:
    """Period T of the orbit E = h and its frequency 2 pi / T."""
    q_lo, q_hi = system.turning_points(h)
    mid, half = 0.5 * (q_hi + q_lo), 0.5 * (q_hi - q_lo)

    def integrand(theta):
        q = mid - half * math.cos(theta)
        up, down = system.momentum_branches(q, h)
        vu, vd = system.dE_dp(up, q), system.dE_dp(down, q)
        if vu == 0.0 or vd == 0.0:
            raise NoClosedOrbitError(f"turning-point regularisation failed at q = {q!r}")
        return (1.0 / vu - 1.0 / vd) * half * math.sin(theta)

    T = _adaptive(integrand, rtol)
    return T, 2.0 * math.pi / T


def frequency_of_energy(system: FrozenFastSystem, h, rtol=1e-12) -> float:
    return period_of_energy(system, h, rtol)[1]


def natural_system(potential, dpotential, q_bounds, q_center=0.0, p_max=None) -> FrozenFastSystem:
    """FrozenFastSystem for E = p**2/2 + V(q)."""
    if p_max is None:
        p_max = 10.0 * (1.0 + max(abs(q_bounds[0]), abs(q_bounds[1])))
    return FrozenFastSystem(
        energy=lambda p, q: 0.5 * p * p + potential(q),
        dE_dp=lambda p, q: p,
        dE_dq=lambda p, q: dpotential(q),
        q_bounds=q_bounds,
        p_bounds=(-p_max, p_max),
        q_center=q_center,
    )
