"""Sideband cooling in the presence of spurious mechanical modes.

Every mode couples to the same optical field, so cooling the defect mode
also imprints the spurious modes' motion on it through the cavity. The
occupancy obtained by integrating the full mechanical spectrum (n_full) is
therefore larger than the occupancy of the defect mode taken alone
(n_decoupled). feedback_cancellation_filter() is the detector-referred
feedback that removes the correlations the common cavity field creates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from config.constants import TWO_PI

from .errors import ConfigError, InvalidDetuning
from .fitting import LorentzianFit, fit_lorentzian
from .model_core import (
    SpectrumModel,
    SpuriousNoise,
    SystemParams,
    ideal_cooling_occupancy,
    occupancy_from_spectrum,
    optical_damping,
    optical_spring,
)

logger = logging.getLogger(__name__)

# ============================================================================
# FEEDBACK FILTER
# ============================================================================


def feedback_cancellation_filter(params: SystemParams, omega=None):
    """Constant feedback filter H0 = -2 g / sqrt(eta_d kappa_out).

    Args:
        params: System parameters
        omega: Optional frequency array; the constant is broadcast onto it

    Raises:
        ConfigError: If eta_d or kappa_out is not positive
    """
    eta = params.eta_d
    kappa_a = params.cavity.kappa_out
    if not eta > 0 or not kappa_a > 0:
        raise ConfigError(
            "feedback cancellation needs eta_d > 0 and kappa_out > 0",
            key="eta_d",
            hint="without detected light there is nothing to feed back",
        )
    h0 = -2.0 * params.coupling.g / math.sqrt(eta * kappa_a)
    if omega is None:
        return complex(h0)
    return np.full(np.shape(omega), h0, dtype=complex)


def compose_feedback_filter(params: SystemParams, extra: Callable[[np.ndarray], np.ndarray]) -> Callable:
    """H(w) = H0 + H1(w) for a user-supplied additional filter H1."""
    h0 = feedback_cancellation_filter(params)

    def response(omega):
        w = np.asarray(omega, dtype=float)
        return h0 + np.asarray(extra(w), dtype=complex)

    return response


def relative_feedback_gain(params: SystemParams, h) -> float:
    """Simulator feedback gain of a constant filter, 1 at full cancellation."""
    h0 = feedback_cancellation_filter(params)
    if h0 == 0:
        raise ConfigError("the cancellation filter vanishes at g = 0", key="g_hz")
    return float(np.real(complex(h) / h0))


# ============================================================================
# OCCUPANCIES
# ============================================================================


@dataclass(frozen=True)
class CoolingOccupancies:
    """Defect-mode occupancies with and without the spurious modes.

    Attributes:
        n_full: Integral of the full mechanical spectrum
        n_decoupled: Integral with modes[1:] and the explicit Lorentzians removed
        n_lorentzian: Lorentzian fit of the defect peak of the full spectrum
        n_ideal: Sideband-cooling limit, None on the blue side
        peak: The Lorentzian fit behind n_lorentzian
    """

    n_full: float
    n_decoupled: float
    n_lorentzian: float
    n_ideal: Optional[float]
    peak: LorentzianFit

    @property
    def excess(self) -> float:
        """n_full / n_decoupled."""
        return self.n_full / self.n_decoupled


def decoupled_params(params: SystemParams) -> SystemParams:
    """The defect mode alone; the white detuning-noise floor is kept."""
    floor = params.classical_detuning_noise.white_floor
    return params.replace(modes=params.modes[:1], classical_detuning_noise=SpuriousNoise(white_floor=floor))


def defect_peak_fit(params: SystemParams, half_widths: float = 20.0, points: int = 4001) -> LorentzianFit:
    """Lorentzian fit of the defect peak of the single-sided mechanical spectrum."""
    mode = params.defect
    width = mode.gamma_m + max(optical_damping(params), 0.0)
    center = mode.omega_m + optical_spring(params)
    grid_hz = (center + width * np.linspace(-half_widths, half_widths, points)) / TWO_PI
    spectrum = SpectrumModel("mechanical_position", params)(grid_hz)
    return fit_lorentzian(grid_hz, spectrum, (float(grid_hz[0]), float(grid_hz[-1])))


def coupled_vs_decoupled_occupancy(params: SystemParams) -> CoolingOccupancies:
    """Occupancy of the cooled defect mode with and without spurious modes.

    Raises:
        NonConvergent: If an occupancy integral misses its tolerance
        PeakNotFound: If the defect peak cannot be fitted
    """
    n_full = occupancy_from_spectrum(SpectrumModel("mechanical_position", params)).occupancy
    n_decoupled = occupancy_from_spectrum(SpectrumModel("mechanical_position", decoupled_params(params))).occupancy
    peak = defect_peak_fit(params)
    try:
        n_ideal: Optional[float] = ideal_cooling_occupancy(
            params.defect.omega_m, params.cavity.kappa, params.cavity.detuning
        )
    except InvalidDetuning:
        n_ideal = None
    result = CoolingOccupancies(
        n_full=n_full,
        n_decoupled=n_decoupled,
        n_lorentzian=peak.area - 0.5,
        n_ideal=n_ideal,
        peak=peak,
    )
    logger.info(
        "Cooling occupancies computed",
        extra={
            "operation": "coupled_vs_decoupled_occupancy",
            "n_modes": len(params.modes),
            "n_full": n_full,
            "n_decoupled": n_decoupled,
        },
    )
    return result
