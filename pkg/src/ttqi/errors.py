"""Exception hierarchy shared by the package."""

from __future__ import annotations


class TtqiError(Exception):
    """Base class for all package errors."""


class ValidationError(TtqiError, ValueError):
    """Input violates a structural invariant (shape, symmetry, range)."""


class DomainError(TtqiError, ValueError):
    """A function was evaluated outside its mathematical domain."""


class UnphysicalStateError(DomainError):
    """Coefficients do not describe a positive semidefinite density matrix."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class InfeasibleTargetError(TtqiError, ValueError):
    """A profile target value cannot be reached inside the allowed region."""


class GridTooNarrowError(TtqiError, ValueError):
    """The scan grid does not contain the central value or the 68% crossing."""


class ConvergenceError(TtqiError, RuntimeError):
    """A numerical optimizer failed to converge."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SchemaError(ValidationError):
    """Input document does not follow the documented schema."""

    def __init__(self, message: str, path: str = "", position: str = ""):
        where = " ".join(p for p in (path, position) if p)
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.position = position
