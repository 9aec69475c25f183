"""Exception hierarchy.

Input problems derive from :class:`InputError` (a ``ValueError``); failures of
a numerical procedure on otherwise valid input derive from :class:`NumericError`.
The CLI maps the two families to exit codes 1 and 2.
"""

from __future__ import annotations


class SpikecovError(Exception):
    """Base class for all package errors."""


class InputError(SpikecovError, ValueError):
    """Malformed or out-of-contract input."""


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(SpikecovError, ArithmeticError):
    """A numerical procedure failed on valid input."""


class NotPSDError(NumericError):
    pass


class DomainError(NumericError):
    """Argument lies where a function is undefined (e.g. inside a support)."""


class NotDistantSpikeError(NumericError):
    """Spike is not separated from the bulk (psi' <= 0 or implausible estimate)."""


class DegenerateSpectrumError(NumericError):
    """Coincident eigenvalues or zero denominators that the estimators cannot handle."""


class UnstableEstimateError(NumericError):
    pass


class ConvergenceError(NumericError):
    def __init__(self, message: str, iterations: int | None = None) -> None:
        self.iterations = iterations
        if iterations is not None:
            message = f"{message} (after {iterations} iterations)"
        super().__init__(message)
