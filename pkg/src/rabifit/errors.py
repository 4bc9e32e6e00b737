"""Exception types shared across the package.

The CLI maps ValueError subclasses (bad input) to exit code 1 and
RuntimeError subclasses (numeric/convergence failure) to exit code 2.
"""


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


class DataFormatError(ValueError):
    """Malformed CSV data file."""


class IntegrationError(RuntimeError):
    """Time integration produced a non-finite state."""


class NoOscillationError(RuntimeError):
    """Period extraction found no significant spectral peak."""


class FitConvergenceError(RuntimeError):
    """A least-squares fit failed to converge."""
