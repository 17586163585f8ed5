"""Open-system dynamics of coupled quantum Brownian oscillators and the
entanglement of field-coupled detector pairs."""

__version__ = "0.1.0"

from .covariance import (
    GaussianState,
    QuadratureSettings,
    evolve_gaussian,
    master_coefficients,
    thermal_covariance_late,
    thermal_covariance_time,
)
from .detectors import DetectorPair, asymptotic_pair_state, decay_rates, weak_coupling_rates
from .entanglement import entanglement_report, log_negativity, simon_criterion
from .kernels import FieldPair, LocalDamping, Microscopic, RegulatedOhmic, ThermalEnvironment
from .propagator import OscillatorNetwork, characteristic_roots, propagator
from .regulators import RegulatorApproximant, pade_regulator

__all__ = [
    "DetectorPair",
    "FieldPair",
    "GaussianState",
    "LocalDamping",
    "Microscopic",
    "OscillatorNetwork",
    "QuadratureSettings",
    "RegulatedOhmic",
    "RegulatorApproximant",
    "ThermalEnvironment",
    "asymptotic_pair_state",
    "characteristic_roots",
    "decay_rates",
    "entanglement_report",
    "evolve_gaussian",
    "log_negativity",
    "master_coefficients",
    "pade_regulator",
    "propagator",
    "simon_criterion",
    "thermal_covariance_late",
    "thermal_covariance_time",
    "weak_coupling_rates",
]
