"""Exception hierarchy shared by all modules.

Each class carries the process exit status the command-line front-end uses
when the error escapes a subcommand.
"""


class EmulatorError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(EmulatorError, ValueError):
    """Invalid configuration or command-line usage."""

    exit_code = 1


class DataError(EmulatorError, ValueError):
    """Unreadable, malformed or inconsistent simulation data."""

    exit_code = 2


class SingularDesignError(DataError):
    """The regression design matrix is rank deficient."""

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class InsufficientDataError(DataError):
    """Too few records for the requested fit."""


class NumericalError(EmulatorError, ArithmeticError):
    """A linear-algebra step failed (e.g. non positive definite matrix)."""

    exit_code = 3


class NotPositiveDefiniteError(NumericalError):
    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter
