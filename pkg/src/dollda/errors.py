"""Exception hierarchy shared by the solver, harness and CLI."""


class DollDaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DollDaError, ValueError):
    """Invalid solver or harness configuration."""


class DataError(DollDaError, ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(DollDaError, ArithmeticError):
    """A numerical kernel produced non-finite values or failed to factorize."""
