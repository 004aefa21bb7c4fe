"""Exception types shared across the package.

Each class maps to one CLI exit code (see ``bqpm.cli.EXIT_CODES``).
"""


class BqpmError(Exception):
    """Base class for all package errors."""


class InputError(BqpmError, ValueError):
    """Invalid argument value (non-finite, non-positive, wrong shape...)."""


class RangeError(BqpmError, ValueError):
    """Argument outside a model's validity window."""


class ConfigurationError(BqpmError):
    """A configuration cannot be used, e.g. a singular tomography setting table."""


class AnnihilationError(BqpmError):
    """A non-unitary element removed the whole state."""

    def __init__(self, message, setting=None):
        super().__init__(message)
        self.setting = setting


class ConvergenceError(BqpmError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FitError(BqpmError):
    """A curve fit is degenerate."""


class BootstrapError(BqpmError):
    """Too many bootstrap resamples failed."""


class ParseError(BqpmError):
    """Malformed input file."""
