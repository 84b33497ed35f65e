"""Measurement of the action change, singularity-based rate, first-order oracle and fits.

For the example system with coupling g the first-order change of the action
along the unperturbed passage is

    dI1 = -eps * integral f(eps*t, eta0) * g'(omega*t + phi0) dt

and for g = cos this equals 2*pi*omega*sin(phi0) / (eps*sinh(gamma/eps)) with
gamma = pi*omega/sqrt(2*eta0), the distance of the nearest complex singularity
of f to the real axis multiplied by omega.
"""

from __future__ import annotations

import cmath
import csv
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ModelDomainError, UnresolvedError
from .integrator import IntegrationSettings, Trajectory, fmt17, integrate
from .model import ExampleSystem, GCoupling, ReducedState

SCHEMA_VERSION = 1

# asymptotic form of the closed-form oracle beyond this gamma/eps
_SINH_OVERFLOW = 700.0

_GL_LO, _GL_LO_W = np.polynomial.legendre.leggauss(12)
_GL_HI, _GL_HI_W = np.polynomial.legendre.leggauss(20)


class QuadratureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DeltaIResult:
    I_minus: float
    I_plus: float
    delta_I: float
    plateau_flatness: float
    K_drift: float
    resolved: bool = True

    def check(self):
        if not self.resolved:
            raise UnresolvedError(
                f"delta_I = {self.delta_I!r} not resolved above noise "
                f"(flatness {self.plateau_flatness!r}, K drift {self.K_drift!r})"
            )
        return self


def plateau_levels(traj: Trajectory, fraction=0.1):
    """Mean action and in-window variation over the outer ``fraction`` of each side."""
    t = traj.times
    t_min, t_max = t[0], t[-1]
    left = t <= (1.0 - fraction) * t_min
    right = t >= (1.0 - fraction) * t_max
    i0 = traj.I[np.searchsorted(t, 0.0)]
    out = []
    for mask in (left, right):
        vals = traj.action_change[mask]
        out.append((i0 + float(np.mean(vals)), float(np.ptp(vals))))
    return out


def measure_delta_I(system: ExampleSystem, state0: ReducedState, eps,
                    settings: IntegrationSettings | None = None, strict=False,
                    trajectory=False):
    """Integrate through the passage and return the plateau difference I+ - I-.

    The span must reach |xi| >= 40 on both sides so that the plateaus are flat.
    With ``strict`` an unresolved measurement raises :class:`UnresolvedError`.
    With ``trajectory`` returns (result, Trajectory).
    """
    settings = (settings or IntegrationSettings()).for_eps(eps) if eps > 0 else settings
    if settings is None or settings.t_span is None:
        raise ValueError("an explicit t_span is required when eps = 0")
    if eps > 0:
        reach = eps * min(-settings.t_span[0], settings.t_span[1])
        if reach < 40.0 - 1e-9:
            raise ValueError(f"span reaches |xi| = {reach:.3g} only; at least 40 is required")
    traj = integrate(system, state0, eps, settings)
    (i_minus, flat_m), (i_plus, flat_p) = plateau_levels(traj)
    delta = i_plus - i_minus
    flatness = max(flat_m, flat_p)
    noise = max(flatness, traj.max_K_drift)
    result = DeltaIResult(
        I_minus=i_minus,
        I_plus=i_plus,
        delta_I=delta,
        plateau_flatness=flatness,
        K_drift=traj.max_K_drift,
        resolved=delta != 0.0 and abs(delta) >= 10.0 * noise and flatness <= 0.01 * abs(delta),
    )
    if strict:
        result.check()
    return (result, traj) if trajectory else result


def theoretical_gamma(omega, eta0) -> float:
    """Sharp rate pi*omega/sqrt(2*eta0); any smaller positive constant also bounds the decay."""
    if not (omega > 0 and eta0 > 0):
        raise ModelDomainError(f"omega and eta0 must be positive, got {omega!r}, {eta0!r}")
    return math.pi * omega / math.sqrt(2.0 * eta0)


@dataclass(frozen=True)
class SingularitySet:
    eta0: float
    points: tuple[tuple[float, float], ...]
    gamma_theory: float | None = None

    @property
    def nearest_distance(self) -> float:
        return min(abs(im) for _, im in self.points)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "eta0": self.eta0,
            "singularities": [{"re": re, "im": im} for re, im in self.points],
            "nearest_distance": self.nearest_distance,
            "gamma_theory": self.gamma_theory,
        }


def singularities(eta0, k_min=-1, k_max=0, omega=None) -> SingularitySet:
    """Poles of f(., eta0) at xi = (2k+1)*pi*i/sqrt(2*eta0), k_min <= k <= k_max."""
    if not eta0 > 0:
        raise ModelDomainError(f"eta0 must be positive, got {eta0!r}")
    scale = math.pi / math.sqrt(2.0 * eta0)
    pts = tuple((0.0, (2 * k + 1) * scale) for k in range(k_min, k_max + 1))
    gamma = theoretical_gamma(omega, eta0) if omega is not None else None
    return SingularitySet(eta0, pts, gamma)


def f_envelope_complex(xi: complex, eta) -> complex:
    """f at complex xi via cosh(u + iv) = cosh u cos v + i sinh u sin v."""
    a = math.sqrt(eta / 2.0)
    u, v = a * xi.real, a * xi.imag
    c = complex(math.cosh(u) * math.cos(v), math.sinh(u) * math.sin(v))
    return eta / (c * c)


def _fourier_terms(g: GCoupling | None):
    """(k, d_k) with g'(phi) = Re sum d_k exp(i k phi)."""
    g = g or GCoupling.cosine()
    return [(k, complex(k * b, k * a)) for k, a, b in g.coefficients]


def _sech2_transform(nu, eta0):
    """integral eta0*sech(a u)**2 * cos(nu u) du = 2 pi nu / sinh(pi nu / (2a))."""
    z = math.pi * nu / math.sqrt(2.0 * eta0)
    if z > _SINH_OVERFLOW:
        return 4.0 * math.pi * nu * math.exp(-z)
    return 2.0 * math.pi * nu / math.sinh(z)


def melnikov_oracle(omega, eta0, eps, phi0, g: GCoupling | None = None) -> float:
    """Closed-form first-order action change.

    For g = cos: 2*pi*omega*sin(phi0) / (eps*sinh(gamma/eps)).
    """
    if not (omega > 0 and eta0 > 0 and eps > 0):
        raise ModelDomainError("omega, eta0 and eps must be positive")
    total = 0.0
    for k, d in _fourier_terms(g):
        nu = k * omega / eps
        # f even: integral f(eps t) exp(i k omega t) dt is real
        J = _sech2_transform(nu, eta0) / eps
        total += (d * cmath.exp(1j * k * phi0)).real * J
    return -eps * total


def _gl_pair(integrand, lo, hi):
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    q_lo = (integrand(mid[:, None] + half[:, None] * _GL_LO) @ _GL_LO_W) * half
    q_hi = (integrand(mid[:, None] + half[:, None] * _GL_HI) @ _GL_HI_W) * half
    return q_lo, q_hi


def _shifted_integral(nu, eta0, shift, s_max, rtol, panel, max_rounds=30):
    """integral_{-s_max}^{s_max} f(s + i*shift) exp(i nu s) ds by adaptive Gauss-Legendre panels.

    Returns (value, converged).  Panels whose 12- and 20-point rules disagree
    are bisected until they agree.
    """
    a = math.sqrt(eta0 / 2.0)

    def integrand(s):
        # f is even, so evaluate with Re z >= 0 where exp(-2 a z) cannot overflow
        z = np.where(s >= 0, 1.0, -1.0) * (s + 1j * shift)
        e = np.exp(-2.0 * a * z)
        return 4.0 * eta0 * e / (1.0 + e) ** 2 * np.exp(1j * nu * s)

    n = max(2, int(math.ceil(2 * s_max / panel)))
    edges = np.linspace(-s_max, s_max, n + 1)
    lo, hi = edges[:-1], edges[1:]
    q_lo, q_hi = _gl_pair(integrand, lo, hi)
    abs_tol = 1e-2 * rtol * max(abs(np.sum(q_hi)), 1e-300)
    total = 0.0 + 0.0j
    for _ in range(max_rounds):
        bad = np.abs(q_hi - q_lo) > abs_tol
        total += np.sum(q_hi[~bad])
        if not np.any(bad):
            return total, True
        mid = 0.5 * (lo[bad] + hi[bad])
        lo, hi = np.concatenate([lo[bad], mid]), np.concatenate([mid, hi[bad]])
        q_lo, q_hi = _gl_pair(integrand, lo, hi)
    return total + np.sum(q_hi), False


def melnikov_quadrature(omega, eta0, eps, phi0, g: GCoupling | None = None,
                        contour_shift=True, rtol=1e-12) -> float:
    """First-order action change by direct quadrature of the Melnikov-type integral.

    The integral over fast time t is taken in the slow variable u = eps*t with
    panels no longer than pi/(4 omega) in fast time.  With ``contour_shift`` each
    harmonic exp(i k omega t) is integrated along Im u = c just below the nearest
    pole of f, which removes the catastrophic cancellation of the real-axis
    integral when the result is exponentially small.  The range is extended
    until the tail bound 4*eta0*exp(-sqrt(2 eta0)|u|) falls below 1e-18 of the
    harmonic's integral.
    """
    if not (omega > 0 and eta0 > 0 and eps > 0):
        raise ModelDomainError("omega, eta0 and eps must be positive")
    rate = math.sqrt(2.0 * eta0)
    dist = math.pi / rate
    total = 0.0
    for k, d in _fourier_terms(g):
        nu = k * omega / eps
        c = max(dist - 1.0 / nu, 0.5 * dist) if contour_shift else 0.0
        panel = eps * math.pi / (4.0 * k * omega)
        # initial range from the expected magnitude 2 pi nu exp(-nu * dist)
        log_mag = math.log(2 * math.pi * nu) - nu * dist + nu * c
        s_max = max(10.0, (math.log(8.0 * eta0 / rate) + 41.5 - log_mag) / rate)
        for _ in range(20):
            J, converged = _shifted_integral(nu, eta0, c, s_max, rtol, panel)
            tail = 2.0 * 4.0 * eta0 * math.exp(-rate * s_max) / rate * 1.01
            if tail <= 1e-18 * abs(J) or s_max * rate > 740:
                break
            s_max *= 1.5
        if not converged or tail > 1e-18 * abs(J) and s_max * rate <= 740:
            warnings.warn(f"quadrature tolerance not met for harmonic {k}; estimate {J!r}",
                          QuadratureWarning)
        # back to the real axis: integral over u of f(u) exp(i nu u) = exp(-nu c) * J
        J_real_axis = J * math.exp(-nu * c) / eps
        total += (d * cmath.exp(1j * k * phi0) * J_real_axis).real
    return -eps * total


SWEEP_COLUMNS = ("eps", "phi0", "I_minus", "I_plus", "delta_I", "flatness", "K_drift")


@dataclass(frozen=True)
class SweepRow:
    eps: float
    phi0: float
    result: DeltaIResult
    predicted: float | None = None

    @property
    def resolvable(self) -> bool:
        """Oracle-predicted change large enough to sit above integration noise."""
        return self.predicted is None or abs(self.predicted) >= 1e-12

    @property
    def usable(self) -> bool:
        return self.result.resolved and self.resolvable


@dataclass
class SweepResult:
    rows: list[SweepRow]
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = [r.eps for r in self.rows]
        if any(e <= 0 for e in eps):
            raise ValueError("sweep eps values must be positive")
        d = np.diff(eps)
        if len(eps) > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("sweep eps values must be strictly monotone")

    @property
    def eps(self) -> np.ndarray:
        return np.array([r.eps for r in self.rows])

    @property
    def delta_I(self) -> np.ndarray:
        return np.array([r.result.delta_I for r in self.rows])

    @property
    def unresolved_fraction(self) -> float:
        if not self.rows:
            return 0.0
        return sum(not r.usable for r in self.rows) / len(self.rows)

    @classmethod
    def from_values(cls, eps, delta_I, phi0=math.pi / 2, model=None) -> "SweepResult":
        """Sweep built from bare (eps, delta_I) pairs, e.g. synthetic or oracle data."""
        rows = [
            SweepRow(float(e), phi0, DeltaIResult(0.0, float(d), float(d), 0.0, 0.0, d != 0.0))
            for e, d in zip(eps, delta_I)
        ]
        return cls(rows, dict(model or {}))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_COLUMNS)
            for r in self.rows:
                res = r.result
                w.writerow([fmt17(v) for v in (r.eps, r.phi0, res.I_minus, res.I_plus,
                                                res.delta_I, res.plateau_flatness, res.K_drift)])

    @classmethod
    def read_csv(cls, path, model=None) -> "SweepResult":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != SWEEP_COLUMNS:
                raise ValueError(f"{path}: expected columns {SWEEP_COLUMNS}, got {reader.fieldnames}")
            for rec in reader:
                v = {k: float(x) for k, x in rec.items()}
                noise = max(v["flatness"], v["K_drift"])
                d = v["delta_I"]
                resolved = d != 0.0 and abs(d) >= 10 * noise and v["flatness"] <= 0.01 * abs(d)
                res = DeltaIResult(v["I_minus"], v["I_plus"], d, v["flatness"], v["K_drift"], resolved)
                rows.append(SweepRow(v["eps"], v["phi0"], res))
        return cls(rows, dict(model or {}))


def _sweep_point(args):
    system, eta0, phi0, I0, eps, settings = args
    state0 = ReducedState(I0, phi0, 0.0, eta0)
    try:
        result = measure_delta_I(system, state0, eps, settings)
    except Exception as exc:  # one bad point must not abort the sweep
        warnings.warn(f"sweep point eps = {eps!r} failed: {exc}")
        nan = float("nan")
        result = DeltaIResult(nan, nan, nan, nan, nan, False)
    predicted = None
    if system.g.is_cosine or system.g.kind == "fourier":
        predicted = melnikov_oracle(system.omega, eta0, eps, phi0, system.g)
    return SweepRow(float(eps), float(phi0), result, predicted)


def _parallel_map(fn, tasks, workers):
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def model_snapshot(system: ExampleSystem, eta0, **extra) -> dict:
    return {"omega": system.omega, "eta0": eta0, "g": system.g.to_text(), **extra}


def sweep_epsilon(system: ExampleSystem, eta0, phi0, eps_grid,
                  settings: IntegrationSettings | None = None, I0=1.0, workers=1) -> SweepResult:
    """One plateau measurement per eps; points are independent and run data-parallel."""
    settings = settings or IntegrationSettings()
    grid = [float(e) for e in eps_grid]
    tasks = [(system, eta0, phi0, I0, e, settings) for e in grid]
    rows = _parallel_map(_sweep_point, tasks, workers)
    return SweepResult(rows, model_snapshot(system, eta0, phi0=phi0, I0=I0))


@dataclass(frozen=True)
class GammaFit:
    gamma_hat: float
    log_prefactor: float
    stderr_gamma: float
    residuals: tuple[float, ...]
    fit_window: tuple[float, float]
    gamma_theory: float | None = None
    residual_threshold: float = 0.1

    @property
    def n_points(self) -> int:
        return len(self.residuals)

    @property
    def poor_fit(self) -> bool:
        return max(abs(r) for r in self.residuals) > self.residual_threshold

    @property
    def relative_error(self) -> float | None:
        if self.gamma_theory is None:
            return None
        return abs(self.gamma_hat - self.gamma_theory) / self.gamma_theory

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "gamma_hat": self.gamma_hat,
            "gamma_theory": self.gamma_theory,
            "log_prefactor": self.log_prefactor,
            "stderr": self.stderr_gamma,
            "n_points": self.n_points,
            "residuals": list(self.residuals),
            "fit_window": list(self.fit_window),
            "poor_fit": self.poor_fit,
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


def fit_gamma(sweep: SweepResult, residual_threshold=0.1) -> GammaFit:
    """Least-squares fit of log(eps*|dI|) = log_prefactor - gamma/eps over resolved rows."""
    rows = [r for r in sweep.rows if r.usable]
    if len(rows) < 5:
        raise ValueError(f"need at least 5 resolved points, got {len(rows)}")
    phis = {r.phi0 for r in rows}
    if len(phis) > 1:
        raise ValueError(f"all points must share phi0, got {sorted(phis)}")
    eps = np.array([r.eps for r in rows])
    d = np.array([r.result.delta_I for r in rows])
    x = 1.0 / eps
    y = np.log(eps * np.abs(d))
    reg = stats.linregress(x, y)
    resid = y - (reg.intercept + reg.slope * x)
    gamma_theory = None
    if "omega" in sweep.model and "eta0" in sweep.model:
        gamma_theory = theoretical_gamma(sweep.model["omega"], sweep.model["eta0"])
    return GammaFit(
        gamma_hat=float(-reg.slope),
        log_prefactor=float(reg.intercept),
        stderr_gamma=float(reg.stderr),
        residuals=tuple(float(r) for r in resid),
        fit_window=(float(eps.min()), float(eps.max())),
        gamma_theory=gamma_theory,
        residual_threshold=residual_threshold,
    )


@dataclass(frozen=True)
class PhaseScan:
    """Fit dI(phi0) ~ amplitude * sin(phi0 + phase)."""

    amplitude: float
    phase: float
    residual: float
    phi0: np.ndarray
    delta_I: np.ndarray
    resolved: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["phi0", "delta_I", "resolved", "fit"])
            for p, d, ok in zip(self.phi0, self.delta_I, self.resolved):
                w.writerow([fmt17(p), fmt17(d), int(bool(ok)),
                            fmt17(self.amplitude * math.sin(p + self.phase))])


def fit_sinusoid(phi0, values, resolved=None) -> PhaseScan:
    """Linear least squares for values ~ alpha*sin(phi0) + beta*cos(phi0).

    The residual is ||values - fit|| / ||values|| over the resolved points.
    """
    phi0 = np.asarray(phi0, dtype=float)
    values = np.asarray(values, dtype=float)
    resolved = np.ones(phi0.shape, bool) if resolved is None else np.asarray(resolved, bool)
    if resolved.sum() < 6:
        raise ValueError(f"phase fit needs at least 6 resolved points, got {int(resolved.sum())}")
    p, v = phi0[resolved], values[resolved]
    M = np.column_stack([np.sin(p), np.cos(p)])
    (alpha, beta), *_ = np.linalg.lstsq(M, v, rcond=None)
    r = v - M @ np.array([alpha, beta])
    return PhaseScan(
        amplitude=float(math.hypot(alpha, beta)),
        phase=float(math.atan2(beta, alpha)),
        residual=float(np.linalg.norm(r) / np.linalg.norm(v)),
        phi0=phi0,
        delta_I=values,
        resolved=resolved,
    )


def _phase_point(args):
    system, eta0, phi0, I0, eps, settings = args
    return measure_delta_I(system, ReducedState(I0, phi0, 0.0, eta0), eps, settings)


def phase_scan(system: ExampleSystem, eta0, eps, phi0_grid,
               settings: IntegrationSettings | None = None, I0=1.0, workers=1) -> PhaseScan:
    """Measure dI over an equally spaced phi0 grid on [0, 2 pi) and fit a sinusoid."""
    grid = np.asarray(phi0_grid, dtype=float)
    if grid.size < 8:
        raise ValueError("phase scan needs at least 8 grid points")
    step = 2 * math.pi / grid.size
    if not np.allclose(np.diff(grid), step, rtol=0, atol=1e-9) or not 0 <= grid[0] < step:
        raise ValueError("phi0 grid must be equally spaced on [0, 2 pi)")
    settings = settings or IntegrationSettings()
    tasks = [(system, eta0, float(p), I0, eps, settings) for p in grid]
    results = _parallel_map(_phase_point, tasks, workers)
    values = np.array([r.delta_I for r in results])
    resolved = np.array([r.resolved for r in results])
    return fit_sinusoid(grid, values, resolved)


def phase_grid(n=8) -> np.ndarray:
    return np.arange(n) * (2 * math.pi / n)
