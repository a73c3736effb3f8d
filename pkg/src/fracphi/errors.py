"""Exception hierarchy shared by every module.

Two families matter to callers: domain/validation problems (exit code 1 in
the CLI) and resource problems (exit code 2).
"""

from __future__ import annotations


class FracphiError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DomainError(FracphiError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ParameterError(DomainError):
    """Inconsistent parameter combination (e.g. k <= alpha/d_w)."""


class CatalogError(DomainError, KeyError):
    """Unknown fractal name."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else "catalog error"


class ConstructionError(DomainError):
    """A graph or decomposition could not be built consistently."""


class DiagnosticsError(DomainError):
    """A diagnostic was requested below the resolution of the graph."""


class BlowUpError(FracphiError, ArithmeticError):
    """The remainder solver exceeded its sup-norm ceiling."""

    def __init__(self, message: str, time: float | None = None, sup_norm: float | None = None):
        super().__init__(message)
        self.time = time
        self.sup_norm = sup_norm


class FormatError(FracphiError):
    """A snapshot file has the wrong magic bytes or version."""


class CorruptionError(FracphiError):
    """A snapshot file is truncated or has a size inconsistent with its header."""


class ResourceError(FracphiError):
    """A request exceeds a configured memory or size budget."""

    exit_code = 2
