"""Exception hierarchy.

Every error carries a short machine-readable ``category`` that the command
line front end reports on failure.
"""


class FirecastError(Exception):
    category = "internal"


class ParameterError(FirecastError, ValueError):
    """A distribution or model parameter lies outside its valid range."""

    category = "parameter"


class DomainError(FirecastError, ValueError):
    """An argument lies outside the support of a function."""

    category = "domain"


class ConfigError(FirecastError, ValueError):
    category = "config"


class DataError(FirecastError, ValueError):
    """Input tables are malformed, misaligned or reference unknown ids."""

    category = "data"


class ConvergenceError(FirecastError, RuntimeError):
    """An iterative solver failed; ``trace`` holds the per-iteration record."""

    category = "convergence"

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
