"""Exception hierarchy shared by the library and the CLI."""


class SynchronverterError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(SynchronverterError, ValueError):
    """Invalid parameters or a malformed configuration file."""

    exit_code = 4


class InfeasibleError(SynchronverterError):
    """The model has no equilibrium (or no valid geometry) for the given data."""

    exit_code = 2


class DomainError(SynchronverterError, ValueError):
    """A field current was requested outside the interval where it is defined.

    ``lam`` carries the value of the Lambda curve at the offending current,
    when it is known.
    """

    exit_code = 2

    def __init__(self, message, lam=None):
        super().__init__(message)
        self.lam = lam


class NumericalError(SynchronverterError, ArithmeticError):
    """Eigenvalue non-convergence or a simulation blow-up."""

    exit_code = 3

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t
