"""Plain-text experiment configuration.

Format: one ``section.key = value`` per line, UTF-8, ``#`` starts a comment.
Unknown keys, duplicate keys and type mismatches are errors reported with
line numbers; missing keys take the defaults listed in ``SCHEMA``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .integrator import METHODS, IntegrationSettings
from .model import ExampleSystem, GCoupling

# key -> (type, default); type is one of float, int, str, "floats"
SCHEMA = {
    "model.omega": (float, 1.0),
    "model.eta0": (float, 2.0),
    "model.g": (str, "cos"),
    "initial.I0": (float, 1.0),
    "initial.phi0": (float, math.pi / 2),
    "integration.method": (str, "rk8_adaptive"),
    "integration.tol": (float, 1e-12),
    "integration.step": (float, 0.05),
    "integration.xi_reach": (float, 60.0),
    "integration.sample_stride": (int, 1),
    "simulate.eps": (float, 0.1),
    "sweep.eps": ("floats", ()),
    "sweep.eps_min": (float, 0.08),
    "sweep.eps_max": (float, 0.2),
    "sweep.n": (int, 8),
    "sweep.spacing": (str, "log"),
    "phase.eps": (float, 0.12),
    "phase.n": (int, 8),
    "oracle.eps": ("floats", ()),
    "singularities.k_min": (int, -1),
    "singularities.k_max": (int, 0),
    "tolerance.gamma_rel": (float, 0.05),
    "tolerance.k_drift": (float, 1e-10),
    "tolerance.flatness": (float, 1e-12),
    "tolerance.first_order": (float, 0.5),
    "output.directory": (str, "out"),
    "output.formats": (str, "csv,json,svg"),
    "parallel.workers": (int, 0),
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def system(self) -> ExampleSystem:
        return ExampleSystem(self["model.omega"], parse_g(self["model.g"]))

    @property
    def settings(self) -> IntegrationSettings:
        tol = self["integration.tol"]
        return IntegrationSettings(
            method=self["integration.method"],
            step=self["integration.step"],
            abs_tol=tol,
            rel_tol=tol,
            xi_reach=self["integration.xi_reach"],
            sample_stride=self["integration.sample_stride"],
        )

    @property
    def eps_grid(self) -> np.ndarray:
        if self["sweep.eps"]:
            return np.array(self["sweep.eps"], dtype=float)
        lo, hi, n = self["sweep.eps_min"], self["sweep.eps_max"], self["sweep.n"]
        if self["sweep.spacing"] == "log":
            return np.geomspace(lo, hi, n)
        return np.linspace(lo, hi, n)

    @property
    def workers(self) -> int | None:
        w = self["parallel.workers"]
        return None if w <= 0 else w

    @property
    def formats(self) -> set[str]:
        return {f.strip() for f in self["output.formats"].split(",") if f.strip()}


def parse_g(text) -> GCoupling:
    """``cos`` or a list of ``k:a:b`` harmonics, e.g. ``1:1.0:0.0 3:0.2:0.0``."""
    text = text.strip()
    if text in ("cos", "cosine"):
        return GCoupling.cosine()
    try:
        coeffs = []
        for term in text.replace(",", " ").split():
            k, a, b = term.split(":")
            coeffs.append((int(k), float(a), float(b)))
    except ValueError:
        raise ConfigError(f"cannot parse coupling {text!r}; use 'cos' or 'k:a:b ...'") from None
    return GCoupling.fourier(coeffs)


def _convert(key, raw, lineno):
    kind = SCHEMA[key][0]
    try:
        if kind is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind is int:
            return int(raw)
        if kind == "floats":
            vals = tuple(float(t) for t in raw.replace(",", " ").split())
            if not all(math.isfinite(v) for v in vals):
                raise ValueError
            return vals
        return raw
    except ValueError:
        expected = "finite number" if kind is float else "integer" if kind is int else "list of numbers"
        raise ConfigError(f"{key}: expected {expected}, got {raw!r}", lineno) from None


def _validate(values, lines):
    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", lines.get(key))

    if values["model.omega"] <= 0:
        fail("model.omega", "must be positive")
    if values["model.eta0"] <= 0:
        fail("model.eta0", "must be positive")
    if values["integration.method"] not in METHODS:
        fail("integration.method", f"must be one of {METHODS}")
    if not 1e-15 < values["integration.tol"] < 1e-3:
        fail("integration.tol", "must lie in (1e-15, 1e-3)")
    if values["integration.xi_reach"] < 40:
        fail("integration.xi_reach", "must be at least 40")
    if values["integration.step"] <= 0:
        fail("integration.step", "must be positive")
    for key in ("sweep.eps", "oracle.eps"):
        if any(e <= 0 for e in values[key]):
            fail(key, "entries must be positive")
    for key in ("sweep.eps_min", "sweep.eps_max", "phase.eps"):
        if values[key] <= 0:
            fail(key, "must be positive")
    if values["simulate.eps"] < 0:
        fail("simulate.eps", "must be non-negative")
    if values["sweep.spacing"] not in ("log", "linear"):
        fail("sweep.spacing", "must be 'log' or 'linear'")
    if values["sweep.n"] < 1 or values["phase.n"] < 8:
        fail("phase.n" if values["phase.n"] < 8 else "sweep.n", "grid too small")
    parse_g(values["model.g"])


def parse_config(text: str, overrides=None) -> ExperimentConfig:
    """Parse config text; ``overrides`` is a sequence of ``key=value`` strings applied last."""
    values = {k: default for k, (_, default) in SCHEMA.items()}
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno)
        seen[key] = lineno
        values[key] = _convert(key, raw, lineno)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not 'key=value'")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r} in override")
        values[key] = _convert(key, raw, None)
    _validate(values, seen)
    return ExperimentConfig(values)


def serialize_config(config: ExperimentConfig) -> str:
    out = []
    for key, (kind, _) in SCHEMA.items():
        v = config[key]
        if kind == "floats":
            text = ", ".join(repr(float(x)) for x in v)
        elif kind is float:
            text = repr(float(v))
        else:
            text = str(v)
        out.append(f"{key} = {text}")
    return "\n".join(out) + "\n"
