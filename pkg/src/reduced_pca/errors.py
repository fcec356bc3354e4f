"""Exception types raised by the library.

``DomainError`` subclasses signal mathematically invalid requests (the CLI
maps them to exit status 1); everything else is a plain ``ValueError``.
"""

from __future__ import annotations


class DomainError(ValueError):
    """Argument outside the domain where a formula or transform is defined."""


class SubcriticalError(DomainError):
    """Requested value lies below the detection threshold / at or inside the bulk."""


class ConvergenceError(DomainError):
    """Iterative solver did not reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class DegenerateReductionError(DomainError):
    """Reduction law has zero mean, so the signal is not identifiable."""


class UnsupportedParameterError(DomainError):
    """Parameter outside the range a closed form is valid for."""
