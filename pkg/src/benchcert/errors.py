"""Exception hierarchy shared by the library and the CLI exit-code mapping."""

from __future__ import annotations


class BenchcertError(Exception):
    """Base class for all library errors."""


class ValidationError(BenchcertError, ValueError):
    """Input data or parameters violate a documented precondition."""


class UnsupportedRuleError(ValidationError):
    """Operation is not defined for the fiber mode it was given."""


class NoWitnessError(BenchcertError):
    """The deployment probe lies in the benchmark span, so no witness pair exists."""


class NumericalError(BenchcertError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable result."""
