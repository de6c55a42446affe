"""Simulation and analysis of two-population Hawkes networks with Erlang kernels."""
from .errors import ConfigError, InsufficientDataError, NumericalError
from .model import (
    ClippedLinear,
    Constant,
    ExpSigmoid,
    NetworkModel,
    PopulationParams,
    RngStream,
    diffusion_sigma_action,
    drift_B,
    expm_action,
    full_drift,
    index_map,
    paper_model,
    paper_rates,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "InsufficientDataError",
    "NumericalError",
    "ClippedLinear",
    "Constant",
    "ExpSigmoid",
    "NetworkModel",
    "PopulationParams",
    "RngStream",
    "diffusion_sigma_action",
    "drift_B",
    "expm_action",
    "full_drift",
    "index_map",
    "paper_model",
    "paper_rates",
]
