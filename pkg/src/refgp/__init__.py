"""Deterministic objective-Bayesian inference for Gaussian-process models."""

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DesignError", "DomainBoundaryError", "FlatTailError", "NumericalError",
    "OptimizationError", "RefGPError", "Dataset", "FullParams", "KernelSpec", "gp_sample",
    "FitConfig", "fit", "predict", "ml_fit", "ml_predict", "length_marginal",
    "noise_marginal", "sigma2_marginal", "beta_marginal",
]

from .errors import (  # noqa: E402
    ConfigError,
    DesignError,
    DomainBoundaryError,
    FlatTailError,
    NumericalError,
    OptimizationError,
    RefGPError,
)
from .model import Dataset, FullParams, KernelSpec, gp_sample  # noqa: E402
from .inference import (  # noqa: E402
    FitConfig,
    fit,
    predict,
    ml_fit,
    ml_predict,
    length_marginal,
    noise_marginal,
    sigma2_marginal,
    beta_marginal,
)
