"""Simulation of optomechanical double-slit experiments with levitated nanospheres.

The package computes the rates, pulse plan, operational regime and
interference patterns for a dielectric sphere that is cooled in one cavity,
released, measured through the quadratic optomechanical coupling of a second
cavity, and left to fall until its position is recorded.
"""

__version__ = "0.1.0"

from levisim.params import (
    CONSTANTS,
    ConfigError,
    DerivedQuantities,
    ExperimentConfig,
    derive,
    load_config,
)

__all__ = [
    "CONSTANTS",
    "ConfigError",
    "DerivedQuantities",
    "ExperimentConfig",
    "derive",
    "load_config",
    "__version__",
]
