"""Exponentially small changes of adiabatic invariants in slow-fast Hamiltonian systems."""

from .action import FrozenFastSystem, action_of_energy, frequency_of_energy, period_of_energy
from .analysis import (
    DeltaIResult,
    GammaFit,
    PhaseScan,
    SingularitySet,
    SweepResult,
    fit_gamma,
    measure_delta_I,
    melnikov_oracle,
    melnikov_quadrature,
    phase_scan,
    singularities,
    sweep_epsilon,
    theoretical_gamma,
)
from .config import ExperimentConfig, parse_config, serialize_config
from .integrator import IntegrationSettings, Trajectory, accumulate_action, integrate
from .model import (
    CartesianState,
    ExampleSystem,
    GCoupling,
    GenericSlowFast,
    ReducedState,
    f_envelope,
    f_partials,
    flowbox_from_xy,
    generic_vector_field,
    hamiltonian_K,
    vector_field,
    xy_from_flowbox,
)
from .reduction import FlowBoxChart, build_flowbox, isoenergetic_reduce, jacobian_det

__version__ = "0.1.0"
