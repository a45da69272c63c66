"""Exception hierarchy shared by every module.

The CLI maps :class:`ConfigurationError` (and its subclasses) to exit code 2
and :class:`NumericalFailure` (and its subclasses) to exit code 3.
"""


class GenbridgeError(Exception):
    pass


class ConfigurationError(GenbridgeError, ValueError):
    """Invalid parameters, rejected before any computation."""


class DomainError(ConfigurationError):
    """An argument lies outside the domain of a formula (e.g. t >= 1)."""


class ContractViolation(ConfigurationError):
    """A runtime contract was broken, e.g. a growth bound at a visited state."""


class NumericalFailure(GenbridgeError, ArithmeticError):
    """Factorization failure, loss of positive definiteness, etc."""


class OracleFailure(NumericalFailure):
    """The quadrature oracle did not reach its tolerance within the depth cap."""
