"""Tensor-network estimators for informationally complete measurements.

Observable expectation values are estimated from product-measurement data
by reweighting each shot with coefficients stored as a matrix product
state. The coefficients are trained to minimize the estimator variance
while a penalty keeps the estimator (nearly) unbiased.
"""

from __future__ import annotations

from .estimator import EstimatorMPS, cost, mean, penalty, second_moment
from .kernels import BACKEND
from .observables import PauliSum, parity_observable, parse_hamiltonian, to_mps
from .optim import EarlyStop, Init, OptimizerConfig, optimize, scan_bond_dimensions
from .povm import ProductPOVM, effect_mpo, pauli6
from .shadows import canonical_estimator
from .states import empirical_model, exact_model, ghz, sample
from .stats import evaluate, median_of_means_report, sample_mean_report

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "EarlyStop",
    "EstimatorMPS",
    "Init",
    "OptimizerConfig",
    "PauliSum",
    "ProductPOVM",
    "canonical_estimator",
    "cost",
    "effect_mpo",
    "empirical_model",
    "evaluate",
    "exact_model",
    "ghz",
    "mean",
    "median_of_means_report",
    "optimize",
    "parity_observable",
    "parse_hamiltonian",
    "pauli6",
    "penalty",
    "sample",
    "sample_mean_report",
    "scan_bond_dimensions",
    "second_moment",
    "to_mps",
]
