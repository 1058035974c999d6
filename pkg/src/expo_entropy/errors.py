"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class ExpoEntropyError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ExpoEntropyError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(ExpoEntropyError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class ValidationError(ExpoEntropyError, ValueError):
    """Raw data does not conform to the declared sampling scheme."""


class NumericError(ExpoEntropyError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy value."""


class QuadratureError(NumericError):
    """Adaptive quadrature did not reach the requested tolerance.

    Attributes:
        estimate: best available value of the integral.
        residual: difference between the last two refinements.
    """

    def __init__(self, message: str, estimate: float, residual: float):
        super().__init__(f"{message} (estimate={estimate!r}, residual={residual:.3e})")
        self.estimate = estimate
        self.residual = residual


class BracketError(NumericError):
    """No sign change was found while expanding a root bracket."""


class SimulationError(ExpoEntropyError, RuntimeError):
    """A Monte Carlo replication produced a non-finite loss."""
