"""Exception types shared across the package."""

from __future__ import annotations


class ArgumentError(ValueError):
    """Invalid input: wrong dimension, simplex violation, bad config value."""


class UnsupportedModeError(ArgumentError):
    """Requested evaluation mode is not available for this domain."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values or failed to converge.

    ``residual`` and ``time`` carry diagnostics when the raising site has them.
    """

    def __init__(self, message: str, *, residual: float | None = None, time: float | None = None):
        super().__init__(message)
        self.residual = residual
        self.time = time
