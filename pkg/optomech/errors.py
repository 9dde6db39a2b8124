"""Exception and warning types for the optomech toolkit.

Every error raised by the package derives from OptomechError and carries the
process exit code the command-line front end reports for it:

    0  success
    2  configuration error (schema, unknown key, invalid parameter value)
    3  numerical failure (non-convergence, divergence, unreachable geometry)
    4  record / output I/O error

Library code raises the most specific subclass; callers that only care about
the category can catch ConfigError, NumericalError or RecordIOError.
"""

from __future__ import annotations

from typing import Optional


class OptomechError(Exception):
    """Base class for all package errors."""

    exit_code: int = 1

    def __init__(self, message: str, *, hint: Optional[str] = None):
        super().__init__(message)
        self.hint = hint

    def __str__(self) -> str:
        base = super().__str__()
        if self.hint:
            return f"{base} (hint: {self.hint})"
        return base


# ============================================================================
# CONFIGURATION ERRORS (exit 2)
# ============================================================================


class ConfigError(OptomechError, ValueError):
    """Invalid configuration or parameter value.

    Attributes:
        key: Offending key, when known
        line: 1-based line number in the source file, when known
    """

    exit_code = 2

    def __init__(
        self,
        message: str,
        *,
        key: Optional[str] = None,
        line: Optional[int] = None,
        hint: Optional[str] = None,
    ):
        location = ""
        if key is not None:
            location += f" [key: {key}]"
        if line is not None:
            location += f" [line {line}]"
        super().__init__(message + location, hint=hint)
        self.key = key
        self.line = line


# ============================================================================
# NUMERICAL ERRORS (exit 3)
# ============================================================================


class NumericalError(OptomechError, ArithmeticError):
    """A numerical procedure failed or an input is outside its domain."""

    exit_code = 3


class NonConvergent(NumericalError):
    """Adaptive integration missed its tolerance."""


class InvalidDetuning(NumericalError):
    """Detuning on the wrong side of the cavity for the requested formula."""


class NoCancellation(NumericalError):
    """No homodyne geometry cancels the mixing noise at this quadrature."""


class StepTooLarge(NumericalError):
    """Integrator step violates the stability bound."""


class DivergenceDetected(NumericalError):
    """Filter covariance grew beyond the unconditional level."""


class InsufficientSlices(NumericalError):
    """Too few independent record slices for covariance reconstruction."""


class NotPositiveDefinite(NumericalError):
    """Matrix is not symmetric positive definite."""


class UnstableFilter(NumericalError):
    """Realized digital filter has poles on or outside the unit circle."""


class IllConditioned(NumericalError):
    """Calibration data do not constrain the fit."""


class ToneNotFound(NumericalError):
    """Calibration tone not resolved in the spectrum."""


class PeakNotFound(NumericalError):
    """Mechanical peak not resolved in the spectrum."""


class UnwrapFailure(NumericalError):
    """Beat-note amplitude too small for a reliable phase unwrap."""


class NoConvergence(NumericalError):
    """Least-squares optimizer stopped without meeting its tolerances."""


class SingularJacobian(NumericalError):
    """Normal matrix is singular; parameter errors are undefined."""


# ============================================================================
# I/O ERRORS (exit 4)
# ============================================================================


class RecordIOError(OptomechError, OSError):
    """Missing or corrupt record, sidecar header, or unwritable output."""

    exit_code = 4


# ============================================================================
# WARNINGS
# ============================================================================


class AliasWarning(RuntimeWarning):
    """Input occupies enough of the band that convolution products alias."""


class ConvergenceWarning(RuntimeWarning):
    """A procedure finished but did not reach its steady-state criterion."""
