"""Long-horizon explicit Runge-Kutta integration with conserved-quantity monitoring.

Two methods are provided:

* ``rk8_adaptive`` -- the Dormand-Prince 8(5,3) pair with error control.
* ``rk4_fixed``    -- classical fourth-order Runge-Kutta with a fixed step,
  kept for self-convergence studies.

Trajectories straddle t = 0: the state is integrated backward to ``t_min`` and
forward to ``t_max`` from the same initial condition and the two legs are
concatenated.  The action increments of every step are also summed in a
compensated accumulator, so that changes of order 1e-12 in I remain visible
above the rounding of the state itself.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
# Butcher tableau of DOP853 (Hairer, Norsett & Wanner); stepping and control are ours
from scipy.integrate._ivp import dop853_coefficients as _dop

from .errors import IntegrationError, ModelDomainError

METHODS = ("rk4_fixed", "rk8_adaptive")

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0

_RK4_A = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 1.0]])
_RK4_B = np.array([1.0, 2.0, 2.0, 1.0]) / 6.0
_RK4_C = np.array([0.0, 0.5, 0.5, 1.0])

_N = _dop.N_STAGES
_A8 = _dop.A[:_N, :_N]
_B8 = _dop.B
_C8 = _dop.C[:_N]
_E3 = _dop.E3
_E5 = _dop.E5


class CompensatedSum:
    """Running sum with Neumaier's error compensation."""

    __slots__ = ("_sum", "_comp")

    def __init__(self, start=0.0):
        self._sum = float(start)
        self._comp = 0.0

    def add(self, value):
        value = float(value)
        total = self._sum + value
        if abs(self._sum) >= abs(value):
            self._comp += (self._sum - total) + value
        else:
            self._comp += (value - total) + self._sum
        self._sum = total

    @property
    def value(self) -> float:
        return self._sum + self._comp


def accumulate_action(increments) -> float:
    """Compensated sum of action increments."""
    acc = CompensatedSum()
    for v in increments:
        acc.add(v)
    return acc.value


@dataclass(frozen=True)
class IntegrationSettings:
    """Integration controls.

    ``t_span`` may be left as None, in which case :meth:`for_eps` derives
    (-xi_reach/eps, xi_reach/eps) so that the slow coordinate reaches about
    ``xi_reach`` on both sides.
    """

    method: str = "rk8_adaptive"
    step: float = 0.05
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    t_span: tuple[float, float] | None = None
    xi_reach: float = 60.0
    sample_stride: int = 1
    conserved_check_stride: int = 1
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        for name in ("abs_tol", "rel_tol"):
            tol = getattr(self, name)
            if not 1e-15 < tol < 1e-3:
                raise ValueError(f"{name} must lie in (1e-15, 1e-3), got {tol!r}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.t_span is not None:
            t_min, t_max = self.t_span
            if not t_min < 0 < t_max:
                raise ValueError(f"t_span must straddle 0, got {self.t_span!r}")
        if self.sample_stride < 1 or self.conserved_check_stride < 1:
            raise ValueError("strides must be >= 1")

    def for_eps(self, eps) -> "IntegrationSettings":
        if self.t_span is not None:
            return self
        if eps <= 0:
            raise ValueError("t_span must be given explicitly when eps = 0")
        half = self.xi_reach / eps
        return replace(self, t_span=(-half, half))


@dataclass
class Trajectory:
    """Samples of one integration through t = 0.

    ``states`` has one row per sample in the field's state order.
    ``action_change`` holds the compensated sum of action increments
    I(t) - I(0) at every sample.
    """

    times: np.ndarray
    states: np.ndarray
    K_values: np.ndarray
    max_K_drift: float
    action_change: np.ndarray
    state_names: tuple[str, ...]
    action_index: int
    n_steps: int = 0
    K_drift_monitor: float = 0.0

    @property
    def I(self) -> np.ndarray:
        return self.states[:, self.action_index]

    @property
    def action_mismatch(self) -> float:
        """max |(I(t) - I(0)) - compensated sum|, a check on state rounding."""
        i0 = self.I[np.searchsorted(self.times, 0.0)]
        return float(np.max(np.abs(self.I - i0 - self.action_change)))

    def column(self, name) -> np.ndarray:
        return self.states[:, self.state_names.index(name)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", *self.state_names, "K"])
            for t, row, k in zip(self.times, self.states, self.K_values):
                writer.writerow([fmt17(t), *(fmt17(v) for v in row), fmt17(k)])


def fmt17(value) -> str:
    return f"{float(value):.17g}"


def _leg(field, y0, eps, t_end, settings):
    """Integrate one direction from t = 0; returns sample lists and diagnostics."""
    fun = field.rhs
    idx = field.action_index
    k0 = field.energy(y0, eps)
    direction = 1.0 if t_end > 0 else -1.0
    t, y = 0.0, np.array(y0, dtype=float)
    times, states, changes, kvals = [], [], [], []
    acc = CompensatedSum()
    monitor = 0.0
    n = 0

    def sample():
        times.append(t)
        states.append(y.copy())
        changes.append(acc.value)
        kvals.append(field.energy(y, eps))

    try:
        f = fun(t, y, eps)
    except ModelDomainError as exc:
        raise ModelDomainError(str(exc), t=t) from None

    if settings.method == "rk8_adaptive":
        h_abs = _initial_step(fun, t, y, f, t_end, eps, settings)
        K = np.empty((_N + 1, y.size))
    else:
        h_abs = settings.step

    while direction * (t_end - t) > 0:
        if n >= settings.max_steps:
            raise IntegrationError("step budget exhausted", t)
        try:
            if settings.method == "rk8_adaptive":
                t, y, f, h_abs, dI = _dop853_step(fun, t, y, f, h_abs, direction, t_end, eps,
                                                  settings, K, idx)
            else:
                h = direction * min(h_abs, abs(t_end - t))
                y_new, dI = _rk4_step(fun, t, y, h, eps, idx)
                t = t_end if abs(t_end - t) <= h_abs else t + h
                y = y_new
        except ModelDomainError as exc:
            if exc.t is None:
                raise ModelDomainError(str(exc), t=t) from None
            raise
        acc.add(dI)
        n += 1
        if n % settings.conserved_check_stride == 0:
            monitor = max(monitor, abs(field.energy(y, eps) - k0))
        if n % settings.sample_stride == 0 or direction * (t_end - t) <= 0:
            sample()
    return times, states, changes, kvals, monitor, n


def _rk4_step(fun, t, y, h, eps, idx):
    K = np.empty((4, y.size))
    for s in range(4):
        K[s] = fun(t + _RK4_C[s] * h, y + h * (_RK4_A[s, :s] @ K[:s]) if s else y, eps)
    incr = h * (_RK4_B @ K)
    return y + incr, incr[idx]


def _initial_step(fun, t0, y0, f0, t_end, eps, settings):
    scale = settings.abs_tol + np.abs(y0) * settings.rel_tol
    d0 = np.linalg.norm(y0 / scale) / math.sqrt(y0.size)
    d1 = np.linalg.norm(f0 / scale) / math.sqrt(y0.size)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    span = abs(t_end - t0)
    h0 = min(h0, span)
    direction = math.copysign(1.0, t_end - t0)
    f1 = fun(t0 + direction * h0, y0 + direction * h0 * f0, eps)
    d2 = np.linalg.norm((f1 - f0) / scale) / math.sqrt(y0.size) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100 * h0, h1, span)


def _dop853_step(fun, t, y, f, h_abs, direction, t_end, eps, settings, K, idx):
    min_step = 10 * abs(np.nextafter(t, direction * np.inf) - t)
    rejected = False
    while True:
        if h_abs < min_step:
            raise IntegrationError("step size underflow", t)
        h = direction * h_abs
        t_new = t + h
        if direction * (t_new - t_end) > 0:
            t_new = t_end
        h = t_new - t
        h_abs = abs(h)

        K[0] = f
        for s in range(1, _N):
            K[s] = fun(t + _C8[s] * h, y + h * (_A8[s, :s] @ K[:s]), eps)
        incr = h * (_B8 @ K[:_N])
        y_new = y + incr
        f_new = fun(t_new, y_new, eps)
        K[_N] = f_new

        scale = settings.abs_tol + np.maximum(np.abs(y), np.abs(y_new)) * settings.rel_tol
        err5 = (_E5 @ K) / scale
        err3 = (_E3 @ K) / scale
        e5 = float(err5 @ err5)
        e3 = float(err3 @ err3)
        if e5 == 0.0 and e3 == 0.0:
            err = 0.0
        else:
            err = h_abs * e5 / math.sqrt((e5 + 0.01 * e3) * y.size)

        if err < 1.0:
            factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, _SAFETY * err ** (-1 / 8))
            if rejected:
                factor = min(1.0, factor)
            return t_new, y_new, f_new, h_abs * factor, incr[idx]
        h_abs *= max(_MIN_FACTOR, _SAFETY * err ** (-1 / 8))
        rejected = True


def integrate(field, state0, eps, settings: IntegrationSettings | None = None) -> Trajectory:
    """Integrate ``field`` backward and forward from ``state0`` at t = 0.

    ``field`` is a model object exposing ``rhs(t, y, eps)``, ``energy(y, eps)``,
    ``state_names`` and ``action_index`` (``ExampleSystem`` or ``GenericSlowFast``).
    """
    settings = (settings or IntegrationSettings()).for_eps(eps)
    y0 = state0.as_array() if hasattr(state0, "as_array") else np.asarray(state0, dtype=float)
    t_min, t_max = settings.t_span

    tb, sb, cb, kb, mb, nb = _leg(field, y0, eps, t_min, settings)
    tf, sf, cf, kf, mf, nf = _leg(field, y0, eps, t_max, settings)
    k0 = field.energy(y0, eps)

    times = np.array(tb[::-1] + [0.0] + tf)
    states = np.array(sb[::-1] + [y0] + sf)
    changes = np.array(cb[::-1] + [0.0] + cf)
    kvals = np.array(kb[::-1] + [k0] + kf)
    return Trajectory(
        times=times,
        states=states,
        K_values=kvals,
        max_K_drift=float(np.max(np.abs(kvals - k0))),
        action_change=changes,
        state_names=tuple(field.state_names),
        action_index=field.action_index,
        n_steps=nb + nf,
        K_drift_monitor=max(mb, mf),
    )


def fixed_step_solve(fun, y0, t_end, n_steps, method="rk8"):
    """Vectorised fixed-step integration of dy/dt = fun(y) from 0 to ``t_end``.

    ``y0`` has shape (d, ...) and ``t_end`` broadcasts against the trailing
    axes, so many initial conditions run at once.  With a fixed number of steps
    the result is a smooth function of ``t_end`` and of the initial data,
    which finite-difference Jacobians rely on.
    """
    if method == "rk8":
        A, B, C = _A8, _B8, _C8
    elif method == "rk4":
        A, B, C = _RK4_A, _RK4_B, _RK4_C
    else:
        raise ValueError(f"unknown fixed-step method {method!r}")
    y = np.array(y0, dtype=float)
    h = np.asarray(t_end, dtype=float) / n_steps
    stages = [None] * len(B)
    for _ in range(n_steps):
        for s in range(len(B)):
            ys = y
            for j in range(s):
                if A[s, j] != 0.0:
                    ys = ys + (h * A[s, j]) * stages[j]
            stages[s] = fun(ys)
        y = y + h * sum(b * k for b, k in zip(B, stages) if b != 0.0)
    return y
