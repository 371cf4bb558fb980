"""Exception hierarchy shared by every module."""

from __future__ import annotations


class KirchhoffError(Exception):
    """Base class for all errors raised by this package."""


class MeshMismatchError(KirchhoffError, ValueError):
    """Two fields (or a field and an operator) live on different meshes."""


class DomainError(KirchhoffError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class DegenerateInputError(KirchhoffError, ValueError):
    """Input is degenerate (for example the zero field) where a nonzero one is required."""


class NumericalError(KirchhoffError, RuntimeError):
    """A numerical procedure failed to converge or broke down."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NonConvergenceWarning(RuntimeWarning):
    """An iterative search stopped at its iteration cap; the best value so far is returned."""


class ConfigError(KirchhoffError):
    """Configuration text failed validation. ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
