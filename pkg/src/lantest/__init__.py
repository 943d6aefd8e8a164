"""Local asymptotic normality tests for nonlinear autoregressions with estimated nuisance parameters."""
from lantest._backend import BACKEND
from lantest.config import ExperimentConfig
from lantest.errors import ConfigError, LantestError

__version__ = "0.1.0"

__all__ = ["BACKEND", "ConfigError", "ExperimentConfig", "LantestError", "__version__"]
