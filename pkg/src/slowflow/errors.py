"""Exception and warning types shared by the solvers."""
from __future__ import annotations


class NumericalError(FloatingPointError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message: str, slices=None, t: float | None = None):
        super().__init__(message)
        self.slices = None if slices is None else list(slices)
        self.t = t


class CFLWarning(RuntimeWarning):
    """Advective Courant number reached 1; the step may be inaccurate."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
