"""Slow-fast example system in flow-box coordinates and a generic standard-form system.

The example Hamiltonian is

    H = omega*I + y**2/2 + exp(-x) + eps*g(phi)*exp(-x)

Along the unperturbed slow motion the pair (x, y) is replaced by the flow-box
coordinates (xi, eta): eta = y**2/2 + exp(-x) is the slow energy and xi the slow
time measured from the turning point y = 0.  In these coordinates the
Hamiltonian reads

    K = omega*I + eta + eps*f(xi, eta)*g(phi),   f = eta / cosh(sqrt(eta/2)*xi)**2

and the equations of motion in fast time t are

    dxi/dt  =  eps + eps**2 * df/deta * g
    deta/dt = -eps**2 * df/dxi * g
    dI/dt   = -eps * f * g'(phi)
    dphi/dt =  omega
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ModelDomainError

TAU = 2.0 * math.pi

# |a*xi| above which the exponential form of sech**2 is used
_BRANCH_SWITCH = 20.0


@dataclass(frozen=True)
class GCoupling:
    """2*pi-periodic coupling g(phi) as a finite Fourier series.

    ``coefficients`` holds ``(k, a_k, b_k)`` with g = sum a_k cos(k phi) + b_k sin(k phi).
    The coefficients are rescaled on construction so that sum sqrt(a_k**2 + b_k**2)
    does not exceed 1, which bounds sup |g| by 1 on the real axis.
    """

    kind: str = "cosine"
    coefficients: tuple[tuple[int, float, float], ...] = ((1, 1.0, 0.0),)
    rho: float | None = None  # analyticity strip half-width; metadata only

    def __post_init__(self):
        if self.kind not in ("cosine", "fourier"):
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        if self.kind == "cosine":
            object.__setattr__(self, "coefficients", ((1, 1.0, 0.0),))
            return
        coeffs = tuple((int(k), float(a), float(b)) for k, a, b in self.coefficients)
        if not coeffs:
            raise ValueError("fourier coupling needs at least one harmonic")
        if any(k < 1 for k, _, _ in coeffs):
            raise ValueError("harmonic indices must be >= 1")
        total = sum(math.hypot(a, b) for _, a, b in coeffs)
        if total > 1.0:
            coeffs = tuple((k, a / total, b / total) for k, a, b in coeffs)
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def cosine(cls) -> "GCoupling":
        return cls("cosine")

    @classmethod
    def fourier(cls, coefficients, rho=None) -> "GCoupling":
        return cls("fourier", tuple(coefficients), rho)

    @property
    def is_cosine(self) -> bool:
        return self.coefficients == ((1, 1.0, 0.0),)

    def __call__(self, phi):
        phi = _reduce_angle(phi)
        if self.is_cosine:
            return np.cos(phi) if isinstance(phi, np.ndarray) else math.cos(phi)
        return sum(a * np.cos(k * phi) + b * np.sin(k * phi) for k, a, b in self.coefficients)

    def derivative(self, phi):
        phi = _reduce_angle(phi)
        if self.is_cosine:
            return -np.sin(phi) if isinstance(phi, np.ndarray) else -math.sin(phi)
        return sum(k * (b * np.cos(k * phi) - a * np.sin(k * phi)) for k, a, b in self.coefficients)

    def to_text(self) -> str:
        if self.kind == "cosine":
            return "cos"
        return " ".join(f"{k}:{a!r}:{b!r}" for k, a, b in self.coefficients)


def _reduce_angle(phi):
    if isinstance(phi, np.ndarray):
        return np.remainder(phi, TAU)
    return math.fmod(float(phi), TAU)


def _check_eta(eta):
    if np.any(np.asarray(eta) <= 0) or np.any(np.isnan(eta)):
        raise ModelDomainError(f"slow energy eta must be positive, got {np.asarray(eta).tolist()!r}")


def _sech2_tanh(s):
    """sech(s)**2 and tanh(s), overflow-free for any real s."""
    s = np.asarray(s, dtype=float)
    e = np.exp(-2.0 * np.abs(s))
    with np.errstate(over="ignore"):
        c = np.cosh(np.where(np.abs(s) > _BRANCH_SWITCH, 0.0, s))
    sech2 = np.where(np.abs(s) > _BRANCH_SWITCH, 4.0 * e / (1.0 + e) ** 2, 1.0 / c**2)
    tanh = np.tanh(s)
    return sech2, tanh


def f_envelope(xi, eta):
    """Coupling envelope f = eta / cosh(sqrt(eta/2) xi)**2 (scalar or array)."""
    _check_eta(eta)
    a = np.sqrt(np.asarray(eta, dtype=float) / 2.0)
    sech2, _ = _sech2_tanh(a * xi)
    out = eta * sech2
    return float(out) if np.ndim(out) == 0 else out


def f_partials(xi, eta):
    """Return (df/dxi, df/deta)."""
    _check_eta(eta)
    eta = np.asarray(eta, dtype=float)
    a = np.sqrt(eta / 2.0)
    s = a * xi
    sech2, tanh = _sech2_tanh(s)
    f_xi = -2.0 * a * eta * sech2 * tanh
    f_eta = sech2 * (1.0 - s * tanh)
    if np.ndim(f_xi) == 0 and np.ndim(f_eta) == 0:
        return float(f_xi), float(f_eta)
    return f_xi, f_eta


def _envelope_scalar(xi, eta):
    """(f, df/dxi, df/deta) with plain floats; the integrator's hot path."""
    if not eta > 0.0:
        raise ModelDomainError(f"slow energy eta must be positive, got {float(eta)!r}")
    a = math.sqrt(0.5 * eta)
    s = a * xi
    if abs(s) > _BRANCH_SWITCH:
        e = math.exp(-2.0 * abs(s))
        sech2 = 4.0 * e / (1.0 + e) ** 2
    else:
        sech2 = 1.0 / math.cosh(s) ** 2
    tanh = math.tanh(s)
    f = eta * sech2
    return f, -2.0 * a * f * tanh, sech2 * (1.0 - s * tanh)


def xy_from_flowbox(xi, eta):
    """Closed-form slow solution: (x, y) at slow time xi on the level y**2/2 + exp(-x) = eta."""
    _check_eta(eta)
    eta = np.asarray(eta, dtype=float)
    a = np.sqrt(eta / 2.0)
    s = np.abs(a * np.asarray(xi, dtype=float))
    log_cosh = s + np.log1p(np.exp(-2.0 * s)) - math.log(2.0)
    x = 2.0 * log_cosh - np.log(eta)
    y = np.sqrt(2.0 * eta) * np.tanh(a * xi)
    if np.ndim(x) == 0:
        return float(x), float(y)
    return x, y


def flowbox_from_xy(x, y):
    """Inverse of :func:`xy_from_flowbox`: returns (xi, eta)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    eta = 0.5 * y**2 + np.exp(-x)
    _check_eta(eta)
    a = np.sqrt(eta / 2.0)
    r = np.clip(y / np.sqrt(2.0 * eta), -(1.0 - 1e-15), 1.0 - 1e-15)
    # artanh loses digits as |r| -> 1; there cosh(a xi)**2 = eta*exp(x) is well conditioned
    z = np.sqrt(np.maximum(eta * np.exp(np.minimum(x, 700.0)), 1.0))
    s_far = np.sign(y) * np.log(z + np.sqrt(np.maximum(z * z - 1.0, 0.0)))
    s = np.where(np.abs(r) < 0.5, np.arctanh(r), s_far)
    xi = s / a
    if np.ndim(xi) == 0:
        return float(xi), float(eta)
    return xi, eta


@dataclass(frozen=True)
class ReducedState:
    """State in flow-box coordinates; phi is kept unwrapped."""

    I: float
    phi: float
    xi: float
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ModelDomainError(f"ReducedState needs eta > 0, got {self.eta!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.I, self.phi, self.xi, self.eta], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "ReducedState":
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class CartesianState:
    x: float
    y: float
    I: float
    phi: float

    @property
    def eta(self) -> float:
        return 0.5 * self.y**2 + math.exp(-self.x)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.I, self.phi], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "CartesianState":
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class ExampleSystem:
    """omega*I + eta + eps*f(xi, eta)*g(phi) with V0 = V1 = exp(-x)."""

    omega: float = 1.0
    g: GCoupling = field(default_factory=GCoupling.cosine)

    state_names = ("I", "phi", "xi", "eta")
    action_index = 0

    def __post_init__(self):
        if not (self.omega > 0 and math.isfinite(self.omega)):
            raise ValueError(f"omega must be positive and finite, got {self.omega!r}")

    def state(self, eta0, phi0=0.0, I0=1.0, xi0=0.0) -> ReducedState:
        return ReducedState(I0, phi0, xi0, eta0)

    def rhs(self, t, y, eps):
        """Array form of the vector field, state order (I, phi, xi, eta)."""
        _, phi, xi, eta = y
        try:
            f, f_xi, f_eta = _envelope_scalar(xi, eta)
        except ModelDomainError as exc:
            raise ModelDomainError(str(exc), t=t) from None
        g = self.g(phi)
        return np.array([
            -eps * f * self.g.derivative(phi),
            self.omega,
            eps + eps * eps * f_eta * g,
            -eps * eps * f_xi * g,
        ])

    def energy(self, y, eps) -> float:
        I, phi, xi, eta = y
        f, _, _ = _envelope_scalar(xi, eta)
        return self.omega * I + eta + eps * f * self.g(phi)

    def vector_field(self, state: ReducedState, eps) -> np.ndarray:
        return self.rhs(0.0, state.as_array(), eps)

    def hamiltonian_K(self, state: ReducedState, eps) -> float:
        return self.energy(state.as_array(), eps)

    def as_generic(self, box=None) -> "GenericSlowFast":
        """The same system in (x, y) coordinates as a standard-form system."""
        omega, g = self.omega, self.g
        box = box or {"I": (-50.0, 50.0), "y": (-10.0, 10.0), "x": (-10.0, 60.0)}
        return GenericSlowFast(
            H0=lambda I, y, x: omega * I + 0.5 * y**2 + np.exp(-x),
            H1=lambda I, phi, y, x: g(phi) * np.exp(-x),
            dH0_dI=lambda I, y, x: omega + 0.0 * (I + y + x),
            dH0_dy=lambda I, y, x: y + 0.0 * (I + x),
            dH0_dx=lambda I, y, x: -np.exp(-x) + 0.0 * (I + y),
            dH1_dI=lambda I, phi, y, x: 0.0 * (I + phi + y + x),
            dH1_dphi=lambda I, phi, y, x: g.derivative(phi) * np.exp(-x),
            dH1_dy=lambda I, phi, y, x: 0.0 * (I + phi + y + x),
            dH1_dx=lambda I, phi, y, x: -g(phi) * np.exp(-x),
            box=box,
        )


def vector_field(system: ExampleSystem, state: ReducedState, eps) -> np.ndarray:
    """Time derivatives (dI, dphi, dxi, deta) of the example system."""
    return system.vector_field(state, eps)


def hamiltonian_K(system: ExampleSystem, state: ReducedState, eps) -> float:
    return system.hamiltonian_K(state, eps)


@dataclass(frozen=True)
class GenericSlowFast:
    """Standard-form system H0(I, y, x) + eps*H1(I, phi, y, x).

    All callables must accept numpy arrays.  ``box`` maps "I", "y", "x" to
    (low, high) bounds of the real domain.  The frequency dH0/dI is sampled on
    the box at construction and must not vanish or change sign.
    """

    H0: Callable
    H1: Callable
    dH0_dI: Callable
    dH0_dy: Callable
    dH0_dx: Callable
    dH1_dI: Callable
    dH1_dphi: Callable
    dH1_dy: Callable
    dH1_dx: Callable
    box: dict = field(default_factory=dict)

    state_names = ("x", "y", "I", "phi")
    action_index = 2

    def __post_init__(self):
        for key in ("I", "y", "x"):
            lo, hi = self.box[key]
            if not lo < hi:
                raise ValueError(f"empty domain box for {key}: {(lo, hi)}")
        grids = [np.linspace(*self.box[k], 9) for k in ("I", "y", "x")]
        I, y, x = np.meshgrid(*grids, indexing="ij")
        w = np.asarray(self.dH0_dI(I, y, x), dtype=float)
        if np.any(w == 0) or np.any(np.sign(w) != np.sign(w.flat[0])):
            raise ValueError("dH0/dI vanishes or changes sign inside the domain box")

    def check_domain(self, I, y, x, t=None):
        for name, value in (("I", I), ("y", y), ("x", x)):
            lo, hi = self.box[name]
            if not lo <= value <= hi:
                raise ModelDomainError(
                    f"coordinate {name} = {value!r} outside domain box [{lo}, {hi}]", t=t
                )

    def rhs(self, t, state, eps):
        x, y, I, phi = state
        self.check_domain(I, y, x, t=t)
        return np.array([
            eps * (self.dH0_dy(I, y, x) + eps * self.dH1_dy(I, phi, y, x)),
            -eps * (self.dH0_dx(I, y, x) + eps * self.dH1_dx(I, phi, y, x)),
            -eps * self.dH1_dphi(I, phi, y, x),
            self.dH0_dI(I, y, x) + eps * self.dH1_dI(I, phi, y, x),
        ], dtype=float)

    def energy(self, state, eps) -> float:
        x, y, I, phi = state
        return float(self.H0(I, y, x) + eps * self.H1(I, phi, y, x))


def generic_vector_field(system: GenericSlowFast, state, eps) -> np.ndarray:
    """Standard-form derivatives (dx, dy, dI, dphi) for a CartesianState or array."""
    arr = state.as_array() if isinstance(state, CartesianState) else np.asarray(state, float)
    return system.rhs(0.0, arr, eps)

