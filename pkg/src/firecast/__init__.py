"""Two-stage probabilistic wildfire forecasting.

Boosted-tree forecasts of fire counts and burnt area feed a Bayesian
hurdle model with extended generalised Pareto burnt areas, fitted by
nested Laplace approximations.
"""

from .errors import ConfigError, ConvergenceError, DataError, DomainError, FirecastError, ParameterError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "DomainError",
    "FirecastError",
    "ParameterError",
    "__version__",
]
