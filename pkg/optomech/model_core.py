"""Linearized cavity optomechanics: parameters, susceptibilities and spectra.

This module holds the physical parameter set of a membrane-in-the-middle
cavity and everything that follows from it in closed form:

- Domain types: MechanicalMode, CavityMode, CouplingParams, SystemParams
- The quantum-Langevin susceptibility chain (X chain, Y chain, detected
  quadrature) at arbitrary Fourier frequencies
- The detected homodyne spectrum and the mechanical position spectrum
- Derived rates (thermal decoherence, backaction, measurement rate,
  cooperativity, measurement efficiency) and dynamical backaction
- Closed-form helpers: magic detuning, ideal sideband-cooling limit,
  maximum ponderomotive squeezing, frequency-noise requirement

CONVENTIONS:
============
All rates and frequencies are angular (rad/s). Quadratures are normalized so
that the vacuum variance is 1/2. CavityMode.detuning is the laser-minus-cavity
detuning (negative on the red, cooling side). The Langevin chain is written
with the opposite sign, so the cavity susceptibility reads

    chi_c(w) = 2^{-1/2} / (kappa/2 - i*detuning - i*w)

and chi_c(0) = 2^{-1/2} * chi_opt(0) with chi_opt(0) = 1/(kappa/2 - i*detuning).

The intracavity mean field is the phase reference, so the mean field and g are
real. The detected quadrature angle theta is measured from the output signal
field, which coincides with this frame modulo 180 degrees.

SPECTRUM NORMALIZATION:
=======================
detected_spectrum() returns S(w) + S(-w) of the one-sided expression, so the
shot-noise level is exactly 1. eta_d is the total detection efficiency and
already contains the output coupling kappa_out/kappa, which the Langevin
output channel applies; the spectrum therefore uses the post-cavity
efficiency eta_d kappa / kappa_out. mechanical_spectrum() returns the two-sided
S_QQ(w); integrating it over the whole real axis with dw/2pi gives n + 1/2.

Example:
    >>> params = reference_params()
    >>> rates = derived_rates(params)
    >>> rates.c_q
    0.93
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from config.constants import (
    EFFECTIVE_MASS_KG,
    EFFICIENCY_BUDGET,
    G0_HZ,
    GAMMA_M_HZ,
    KAPPA_HZ,
    KAPPA_OUT_FRACTION,
    N_TH,
    OMEGA_M_HZ,
    OPERATING_COOPERATIVITY,
    OPERATING_ETA_D,
    TWO_PI,
    X_ZPF_M,
)

from .errors import ConfigError, InvalidDetuning, NonConvergent

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
CHANNELS = ("a", "b", "c")  # output, input, internal loss
MIN_QUALITY_FACTOR = 10.0

# ============================================================================
# DOMAIN TYPES
# ============================================================================


@dataclass(frozen=True)
class MechanicalMode:
    """A single high-Q mechanical mode.

    Attributes:
        omega_m: Angular frequency (rad/s)
        gamma_m: Intrinsic energy decay rate (rad/s)
        n_th: Mean thermal bath occupancy
        gamma_opt: Optical damping rate (rad/s), used by the time-domain models
        coupling_weight: Optomechanical coupling relative to the defect mode
        label: Free-form name used in reports
    """

    omega_m: float
    gamma_m: float
    n_th: float
    gamma_opt: float = 0.0
    coupling_weight: float = 1.0
    label: str = ""

    def __post_init__(self) -> None:
        if not self.omega_m > 0:
            raise ConfigError("mechanical frequency must be positive", key="frequency_hz")
        if not self.gamma_m > 0:
            raise ConfigError(
                "mechanical linewidth must be positive",
                key="linewidth_hz",
                hint="an infinite quality factor makes the occupancy integrals diverge",
            )
        if self.n_th < 0:
            raise ConfigError("thermal occupancy must be nonnegative", key="n_th")
        if self.coupling_weight < 0:
            raise ConfigError("coupling weight must be nonnegative", key="coupling_weight")
        if self.omega_m / self.gamma_m <= MIN_QUALITY_FACTOR:
            raise ConfigError(
                f"quality factor {self.omega_m / self.gamma_m:.3g} is too low",
                key="linewidth_hz",
                hint=f"the model assumes Q > {MIN_QUALITY_FACTOR:g}",
            )

    @property
    def quality_factor(self) -> float:
        return self.omega_m / self.gamma_m

    @property
    def gamma_total(self) -> float:
        """Total damping Gamma' = Gamma_m + Gamma_opt."""
        return self.gamma_m + self.gamma_opt

    @property
    def gamma_th(self) -> float:
        """Thermal decoherence rate n_th * Gamma_m."""
        return self.n_th * self.gamma_m


@dataclass(frozen=True)
class CavityMode:
    """Optical cavity mode with three decay channels.

    Attributes:
        kappa: Total linewidth (rad/s)
        kappa_out: Output coupling rate, channel a (rad/s)
        kappa_in: Input coupling rate, channel b (rad/s)
        kappa_loss: Internal loss rate, channel c (rad/s)
        detuning: Mean laser-minus-cavity detuning (rad/s)
    """

    kappa: float
    kappa_out: float
    kappa_in: float
    kappa_loss: float
    detuning: float

    def __post_init__(self) -> None:
        if not self.kappa > 0:
            raise ConfigError("cavity linewidth must be positive", key="kappa_hz")
        for name in ("kappa_out", "kappa_in", "kappa_loss"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative", key=f"{name}_hz")
        total = self.kappa_out + self.kappa_in + self.kappa_loss
        if abs(total - self.kappa) > 1e-9 * self.kappa:
            raise ConfigError(
                f"decay channels sum to {total:.6g} rad/s but kappa is {self.kappa:.6g} rad/s",
                key="kappa_hz",
                hint="kappa must equal kappa_out + kappa_in + kappa_loss",
            )

    @classmethod
    def from_linewidth(
        cls,
        kappa: float,
        detuning: float,
        out_fraction: float = KAPPA_OUT_FRACTION,
        in_fraction: float = 0.0,
    ) -> "CavityMode":
        """Build a cavity from its linewidth, assigning the rest to internal loss."""
        kappa_out = out_fraction * kappa
        kappa_in = in_fraction * kappa
        return cls(
            kappa=kappa,
            kappa_out=kappa_out,
            kappa_in=kappa_in,
            kappa_loss=kappa - kappa_out - kappa_in,
            detuning=detuning,
        )

    def at_magic_detuning(self) -> "CavityMode":
        return dataclasses.replace(self, detuning=magic_detuning(self.kappa))

    @property
    def channel_rates(self) -> Dict[str, float]:
        return {"a": self.kappa_out, "b": self.kappa_in, "c": self.kappa_loss}

    @property
    def output_efficiency(self) -> float:
        """Fraction kappa_out / kappa of the intracavity field leaving through the output port."""
        return self.kappa_out / self.kappa


@dataclass(frozen=True)
class CouplingParams:
    """Optomechanical coupling.

    Attributes:
        g0: Vacuum optomechanical coupling (rad/s)
        g: Field-enhanced coupling g0 * mean_field (rad/s)
        mean_field: Intracavity amplitude, real and nonnegative
    """

    g0: float
    g: float
    mean_field: float

    def __post_init__(self) -> None:
        if self.g0 < 0:
            raise ConfigError("g0 must be nonnegative", key="g0_hz")
        if self.mean_field < 0:
            raise ConfigError("mean field must be nonnegative", key="mean_field")
        expected = self.g0 * self.mean_field
        if abs(self.g - expected) > 1e-12 * max(abs(self.g), abs(expected), 1e-300):
            raise ConfigError(
                f"g={self.g:.6g} is inconsistent with g0*mean_field={expected:.6g}", key="g_hz"
            )

    @classmethod
    def from_mean_field(cls, g0: float, mean_field: float) -> "CouplingParams":
        return cls(g0=g0, g=g0 * mean_field, mean_field=mean_field)

    @classmethod
    def from_g(cls, g0: float, g: float) -> "CouplingParams":
        if g0 <= 0:
            if g == 0:
                return cls(g0=g0, g=0.0, mean_field=0.0)
            raise ConfigError("a nonzero g requires a positive g0", key="g0_hz")
        mean_field = g / g0
        return cls(g0=g0, g=g0 * mean_field, mean_field=mean_field)


@dataclass(frozen=True)
class Lorentzian:
    """Normalized Lorentzian term of the cavity detuning-noise spectrum.

    Attributes:
        center: Center frequency (rad/s); mirrored at -center
        width: Full width at half maximum (rad/s)
        area: Integral over angular frequency of one of the mirrored peaks
    """

    center: float
    width: float
    area: float

    def __post_init__(self) -> None:
        if not self.width > 0:
            raise ConfigError("Lorentzian width must be positive", key="width_hz")
        if not self.area > 0:
            raise ConfigError("Lorentzian area must be positive", key="area")

    def __call__(self, omega: np.ndarray) -> np.ndarray:
        half = 0.5 * self.width
        return (self.area / math.pi) * half / ((omega - self.center) ** 2 + half * half)


@dataclass(frozen=True)
class SpuriousNoise:
    """Classical cavity-frequency noise from spurious modes.

    Values are two-sided detuning spectra S_DD(w) in rad^2/s, normalized so that
    the integral over the real axis with dw/2pi is the detuning variance.
    """

    lorentzians: Tuple[Lorentzian, ...] = ()
    white_floor: float = 0.0

    def __post_init__(self) -> None:
        if self.white_floor < 0:
            raise ConfigError("white floor must be nonnegative", key="white_floor")


@dataclass(frozen=True)
class SystemParams:
    """Complete parameter set of the optomechanical system.

    Attributes:
        modes: Mechanical modes; index 0 is the defect mode
        cavity: Optical mode
        coupling: Coupling of the defect mode; mode i couples with g * weight_i
        eta_d: Total detection efficiency, cavity output coupling included
        theta: Detected quadrature angle (rad)
        classical_detuning_noise: Explicit spurious cavity-frequency noise
        symmetrized: Use the symmetrized thermal force spectrum
        x_zpf: Zero-point fluctuation (m), metadata
        effective_mass: Effective mass (kg), metadata
    """

    modes: Tuple[MechanicalMode, ...]
    cavity: CavityMode
    coupling: CouplingParams
    eta_d: float
    theta: float
    classical_detuning_noise: SpuriousNoise = field(default_factory=SpuriousNoise)
    symmetrized: bool = True
    x_zpf: float = X_ZPF_M
    effective_mass: float = EFFECTIVE_MASS_KG

    def __post_init__(self) -> None:
        if len(self.modes) == 0:
            raise ConfigError("at least one mechanical mode is required", key="modes")
        if not 0.0 <= self.eta_d <= 1.0:
            raise ConfigError(f"eta_d={self.eta_d} is outside [0, 1]", key="eta_d")
        object.__setattr__(self, "modes", tuple(self.modes))

    @property
    def defect(self) -> MechanicalMode:
        return self.modes[0]

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def with_g(self, g: float) -> "SystemParams":
        return self.replace(coupling=CouplingParams.from_g(self.coupling.g0, g))


@dataclass(frozen=True)
class DerivedRates:
    """Rates and figures of merit derived from SystemParams.

    Attributes:
        gamma_th: Thermal decoherence rate (rad/s)
        gamma_qba: Quantum backaction rate (rad/s)
        gamma_meas: Measurement rate (rad/s)
        c_q: Quantum cooperativity
        eta_meas: Measurement efficiency
        n_imp: Imprecision noise in quanta
        heisenberg_ratio: Imprecision-backaction product over the Heisenberg bound
        gamma_opt: Optical damping of the defect mode (rad/s)
        gamma_qba_bad_cavity: Backaction rate in the w -> 0 limit (rad/s)
    """

    gamma_th: float
    gamma_qba: float
    gamma_meas: float
    c_q: float
    eta_meas: float
    n_imp: float
    heisenberg_ratio: float
    gamma_opt: float
    gamma_qba_bad_cavity: float


@dataclass
class SusceptibilitySet:
    """Response functions of the linearized Langevin equations.

    Every field holds one complex value per requested frequency. The per-channel
    fields are dictionaries keyed by "a" (output), "b" (input), "c" (loss).
    """

    omega: np.ndarray
    chi_m: np.ndarray
    chi_c: np.ndarray
    chi_c_X: np.ndarray
    chi_c_Y: np.ndarray
    chi_mc_X: np.ndarray
    chi_Delta_X: np.ndarray
    chi_Pin_X: np.ndarray
    chi_ain_X: Dict[str, np.ndarray]
    chi_aindag_X: Dict[str, np.ndarray]
    chi_Delta_Y: np.ndarray
    chi_Pin_Y: np.ndarray
    chi_ain_Y: Dict[str, np.ndarray]
    chi_aindag_Y: Dict[str, np.ndarray]
    chi_Delta_theta: np.ndarray
    chi_Pin_theta: np.ndarray
    chi_ain_theta: Dict[str, np.ndarray]
    chi_aindag_theta: Dict[str, np.ndarray]


# ============================================================================
# ELEMENTARY SUSCEPTIBILITIES
# ============================================================================


def magic_detuning(kappa: float) -> float:
    """Detuning -kappa/(2*sqrt(3)) at which quadratic transduction vanishes."""
    return -kappa / (2.0 * math.sqrt(3.0))


def mech_susceptibility(mode: MechanicalMode, omega, damped: bool = False):
    """Mechanical susceptibility Omega_m / (Omega_m^2 - w^2 - i w Gamma).

    Args:
        mode: Mechanical mode
        omega: Fourier frequency (rad/s), scalar or array
        damped: Use Gamma_m + Gamma_opt instead of the intrinsic linewidth

    Returns:
        Complex susceptibility with the shape of omega
    """
    gamma = mode.gamma_total if damped else mode.gamma_m
    w = np.asarray(omega, dtype=float)
    return mode.omega_m / (mode.omega_m**2 - w * w - 1j * w * gamma)


def cavity_susceptibility(cav: CavityMode, omega):
    """Cavity susceptibility 2^{-1/2} / (kappa/2 - i*detuning - i*w)."""
    w = np.asarray(omega, dtype=float)
    return (1.0 / SQRT2) / (0.5 * cav.kappa - 1j * cav.detuning - 1j * w)


def optical_susceptibility_dc(cav: CavityMode) -> complex:
    """chi_opt(0) = 1 / (kappa/2 - i*detuning)."""
    return 1.0 / (0.5 * cav.kappa - 1j * cav.detuning)


# ============================================================================
# SUSCEPTIBILITY CHAIN
# ============================================================================


def susceptibility_chain(params: SystemParams, omega, theta: Optional[float] = None) -> SusceptibilitySet:
    """Evaluate every response function of the linearized Langevin equations.

    The X chain is computed first, the Y chain uses it, and the detected
    quadrature combines both with the direct reflection of the output port.
    Every detected channel carries the -sqrt(kappa_out) output-coupling factor.

    Args:
        params: System parameters; the defect mode is the coupled oscillator
        omega: Fourier frequency (rad/s), scalar or array
        theta: Quadrature angle override (defaults to params.theta)

    Returns:
        SusceptibilitySet with arrays shaped like omega
    """
    w = np.asarray(omega, dtype=float)
    theta = params.theta if theta is None else theta
    mode = params.defect
    cav = params.cavity
    g = params.coupling.g * mode.coupling_weight
    abar = params.coupling.mean_field
    rates = cav.channel_rates

    chi_m = mech_susceptibility(mode, w)
    chi_c = cavity_susceptibility(cav, w)
    chi_c_conj_neg = np.conj(cavity_susceptibility(cav, -w))
    chi_c_X = 1j * (chi_c_conj_neg - chi_c)
    chi_c_Y = -(chi_c_conj_neg + chi_c)

    # X chain
    chi_mc_X = 1.0 / (1.0 + 2.0 * SQRT2 * g * g * chi_m * chi_c_X)
    chi_Delta_X = abar * chi_c_X * chi_mc_X
    chi_Pin_X = SQRT2 * g * chi_m * chi_c_X * chi_mc_X
    chi_ain_X = {k: math.sqrt(rates[k]) * chi_c * chi_mc_X for k in CHANNELS}
    chi_aindag_X = {k: math.sqrt(rates[k]) * chi_c_conj_neg * chi_mc_X for k in CHANNELS}

    # Y chain
    back = 2.0 * SQRT2 * g * g * chi_c_Y * chi_m
    chi_Delta_Y = chi_c_Y * (abar - 2.0 * SQRT2 * g * g * chi_m * chi_Delta_X)
    chi_Pin_Y = SQRT2 * g * chi_c_Y * chi_m * (1.0 - 2.0 * g * chi_Pin_X)
    chi_ain_Y = {
        k: -1j * math.sqrt(rates[k]) * chi_c - back * chi_ain_X[k] for k in CHANNELS
    }
    chi_aindag_Y = {
        k: 1j * math.sqrt(rates[k]) * chi_c_conj_neg - back * chi_aindag_X[k] for k in CHANNELS
    }

    # Detected quadrature
    c, s = math.cos(theta), math.sin(theta)
    out = -math.sqrt(cav.kappa_out)
    direct = 1.0 / SQRT2
    chi_Delta_theta = out * (c * chi_Delta_X + s * chi_Delta_Y)
    chi_Pin_theta = out * (c * chi_Pin_X + s * chi_Pin_Y)
    chi_ain_theta = {k: out * (c * chi_ain_X[k] + s * chi_ain_Y[k]) for k in CHANNELS}
    chi_aindag_theta = {k: out * (c * chi_aindag_X[k] + s * chi_aindag_Y[k]) for k in CHANNELS}
    chi_ain_theta["a"] = chi_ain_theta["a"] + direct * np.exp(-1j * theta)
    chi_aindag_theta["a"] = chi_aindag_theta["a"] + direct * np.exp(1j * theta)

    return SusceptibilitySet(
        omega=w,
        chi_m=chi_m,
        chi_c=chi_c,
        chi_c_X=chi_c_X,
        chi_c_Y=chi_c_Y,
        chi_mc_X=chi_mc_X,
        chi_Delta_X=chi_Delta_X,
        chi_Pin_X=chi_Pin_X,
        chi_ain_X=chi_ain_X,
        chi_aindag_X=chi_aindag_X,
        chi_Delta_Y=chi_Delta_Y,
        chi_Pin_Y=chi_Pin_Y,
        chi_ain_Y=chi_ain_Y,
        chi_aindag_Y=chi_aindag_Y,
        chi_Delta_theta=chi_Delta_theta,
        chi_Pin_theta=chi_Pin_theta,
        chi_ain_theta=chi_ain_theta,
        chi_aindag_theta=chi_aindag_theta,
    )


def theta_derivatives(chi: SusceptibilitySet, params: SystemParams, theta: float):
    """d/dtheta of the detected-quadrature susceptibilities.

    Returns:
        Tuple (dDelta, dPin, dict of d chi_aindag_theta per channel)
    """
    c, s = math.cos(theta), math.sin(theta)
    out = -math.sqrt(params.cavity.kappa_out)
    d_delta = out * (-s * chi.chi_Delta_X + c * chi.chi_Delta_Y)
    d_pin = out * (-s * chi.chi_Pin_X + c * chi.chi_Pin_Y)
    d_dag = {k: out * (-s * chi.chi_aindag_X[k] + c * chi.chi_aindag_Y[k]) for k in CHANNELS}
    d_dag["a"] = d_dag["a"] + (1j / SQRT2) * np.exp(1j * theta)
    return d_delta, d_pin, d_dag


# ============================================================================
# NOISE INPUTS
# ============================================================================


def thermal_force_spectrum(mode: MechanicalMode, omega, symmetrized: bool = True):
    """Spectrum of the dimensionless thermal force input P_in.

    Symmetrized: (n_th + 1/2)|w|/Omega_m. Otherwise (n_th + 1)|w|/Omega_m for
    w > 0 and n_th |w|/Omega_m for w < 0.
    """
    w = np.asarray(omega, dtype=float)
    scale = np.abs(w) / mode.omega_m
    if symmetrized:
        return scale * (mode.n_th + 0.5)
    return scale * np.where(w > 0, mode.n_th + 1.0, mode.n_th)


def modes_as_detuning_noise(params: SystemParams) -> Tuple[Lorentzian, ...]:
    """Represent modes[1:] as Lorentzian cavity-frequency noise.

    A mode j shifts the cavity by sqrt(2) * g0 * w_j * Q_j, so its thermal
    peak (occupancy Gamma_th/Gamma', width Gamma') adds a Lorentzian of area
    2*pi*(g0*w_j)^2*(n + 1/2) at +-Omega_j.
    """
    g0 = params.coupling.g0
    terms = []
    for mode in params.modes[1:]:
        if mode.coupling_weight == 0 or g0 == 0:
            continue
        n_eff = mode.gamma_th / mode.gamma_total
        area = TWO_PI * (g0 * mode.coupling_weight) ** 2 * (n_eff + 0.5)
        terms.append(Lorentzian(center=mode.omega_m, width=mode.gamma_total, area=area))
    return tuple(terms)


def spurious_detuning_noise(params: SystemParams, omega, include_modes: bool = True, include_lorentzians: bool = True):
    """Two-sided cavity detuning-noise spectrum S_DD(w) in rad^2/s.

    Sum of the white floor, the explicit Lorentzians and (optionally) the
    extra mechanical modes, each Lorentzian mirrored at negative frequency.
    """
    w = np.asarray(omega, dtype=float)
    noise = params.classical_detuning_noise
    total = np.full(w.shape, noise.white_floor, dtype=float)
    terms: Tuple[Lorentzian, ...] = ()
    if include_lorentzians:
        terms += noise.lorentzians
    if include_modes:
        terms += modes_as_detuning_noise(params)
    for term in terms:
        total = total + term(w) + term(-w)
    return total


def frequency_noise_to_detuning_noise(s_nu_hz2_per_hz):
    """Single-sided frequency noise S_nu (Hz^2/Hz) to two-sided S_DD (rad^2/s)."""
    return 0.5 * TWO_PI**2 * np.asarray(s_nu_hz2_per_hz, dtype=float)


def detuning_noise_to_frequency_noise(s_dd):
    """Inverse of frequency_noise_to_detuning_noise."""
    return 2.0 * np.asarray(s_dd, dtype=float) / TWO_PI**2


def frequency_noise_to_displacement_noise(s_nu_hz2_per_hz, params: SystemParams):
    """Convert cavity frequency noise (Hz^2/Hz) to displacement noise (m^2/Hz)."""
    g0_hz = params.coupling.g0 / TWO_PI
    return np.asarray(s_nu_hz2_per_hz, dtype=float) * (params.x_zpf / g0_hz) ** 2


def displacement_noise_to_frequency_noise(s_xx_m2_per_hz, params: SystemParams):
    g0_hz = params.coupling.g0 / TWO_PI
    return np.asarray(s_xx_m2_per_hz, dtype=float) * (g0_hz / params.x_zpf) ** 2


# ============================================================================
# SPECTRA
# ============================================================================


def post_cavity_efficiency(params: SystemParams) -> float:
    """Efficiency eta_d / (kappa_out / kappa) of the detection chain behind the cavity.

    Raises:
        ConfigError: If eta_d exceeds the output coupling kappa_out / kappa
    """
    ceiling = params.cavity.output_efficiency
    if params.eta_d == 0:
        return 0.0
    if params.eta_d > ceiling * (1.0 + 1e-12):
        raise ConfigError(
            f"eta_d={params.eta_d:.4g} exceeds the cavity output coupling {ceiling:.4g}",
            key="eta_d",
            hint="eta_d is the total efficiency and includes kappa_out / kappa",
        )
    return min(params.eta_d / ceiling, 1.0)


def _one_sided_detected(params: SystemParams, omega, theta: Optional[float] = None):
    chi = susceptibility_chain(params, omega, theta)
    mode = params.defect
    s_dd = spurious_detuning_noise(params, chi.omega)
    s_p = thermal_force_spectrum(mode, chi.omega, params.symmetrized)
    vacuum = sum(np.abs(chi.chi_aindag_theta[k]) ** 2 for k in CHANNELS)
    signal = (
        np.abs(chi.chi_Delta_theta) ** 2 * s_dd
        + np.abs(chi.chi_Pin_theta) ** 2 * 2.0 * mode.gamma_m * s_p
        + vacuum
    )
    eta = post_cavity_efficiency(params)
    return eta * signal + 0.5 * (1.0 - eta)


def detected_spectrum(params: SystemParams, omega, theta: Optional[float] = None):
    """Detected quadrature spectrum in shot-noise units.

    Args:
        params: System parameters
        omega: Fourier frequency (rad/s), scalar or array
        theta: Quadrature angle override

    Returns:
        S(w) + S(-w) of the one-sided detected spectrum; 1.0 at shot noise
    """
    w = np.asarray(omega, dtype=float)
    return _one_sided_detected(params, w, theta) + _one_sided_detected(params, -w, theta)


def mechanical_spectrum(params: SystemParams, omega):
    """Two-sided position spectrum S_QQ(w) of the defect mode (quadrature units)."""
    chi = susceptibility_chain(params, omega)
    mode = params.defect
    g = params.coupling.g * mode.coupling_weight
    s_dd = spurious_detuning_noise(params, chi.omega)
    s_p = thermal_force_spectrum(mode, chi.omega, params.symmetrized)
    backaction = sum(np.abs(2.0 * g * chi.chi_aindag_X[k]) ** 2 for k in CHANNELS)
    drive = (
        np.abs(2.0 * g * chi.chi_Delta_X) ** 2 * s_dd
        + np.abs(1.0 - 2.0 * g * chi.chi_Pin_X) ** 2 * 2.0 * mode.gamma_m * s_p
        + backaction
    )
    return np.abs(chi.chi_m) ** 2 * drive


@dataclass(frozen=True)
class SpectrumModel:
    """Callable single-sided spectrum on an ordinary-frequency axis.

    Attributes:
        kind: "detected_quadrature" or "mechanical_position"
        params: System parameters
    """

    kind: str
    params: SystemParams

    KINDS = ("detected_quadrature", "mechanical_position")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown spectrum kind {self.kind!r}", key="kind")

    def angular(self, omega):
        """Single-sided value at angular frequency omega (rad/s), per Hz."""
        w = np.asarray(omega, dtype=float)
        if self.kind == "detected_quadrature":
            return detected_spectrum(self.params, w)
        return mechanical_spectrum(self.params, w) + mechanical_spectrum(self.params, -w)

    def __call__(self, freq_hz):
        return self.angular(TWO_PI * np.asarray(freq_hz, dtype=float))


@dataclass(frozen=True)
class OccupancyResult:
    """Phonon occupancy from a spectrum integral.

    Attributes:
        occupancy: n = integral - 1/2
        error: Quadrature error estimate of the integral
    """

    occupancy: float
    error: float


def occupancy_from_spectrum(model: SpectrumModel, rtol: float = 1e-10) -> OccupancyResult:
    """Integrate a mechanical spectrum to obtain the phonon occupancy.

    The integral over w > 0 of the single-sided spectrum is computed after the
    substitution w = w_c + (width/2) tan(u), which maps the defect resonance onto
    a smooth integrand; the centers of the spurious peaks are passed as
    breakpoints.

    Raises:
        NonConvergent: If the adaptive quadrature misses its tolerance
    """
    if model.kind != "mechanical_position":
        raise ConfigError("occupancy requires a mechanical_position spectrum", key="kind")
    params = model.params
    mode = params.defect
    width = mode.gamma_m
    center = mode.omega_m
    if params.coupling.g > 0:
        width += max(optical_damping(params), 0.0)
        center += optical_spring(params)
    center = max(center, 0.5 * mode.omega_m)
    half = 0.5 * width

    def omega_of(u):
        return center + half * math.tan(u)

    def integrand(u):
        w = omega_of(u)
        jac = half / math.cos(u) ** 2
        return float(model.angular(w)) * jac / TWO_PI

    u_lo = math.atan(-center / half)
    u_hi = 0.5 * math.pi
    centers = [t.center for t in params.classical_detuning_noise.lorentzians]
    centers += [m.omega_m for m in params.modes[1:]]
    points = sorted(
        {math.atan((c - center) / half) for c in centers if c > 0 and abs(c - center) > half}
    )
    points = [p for p in points if u_lo < p < u_hi] or None

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, error = integrate.quad(
                integrand, u_lo, u_hi, points=points, epsabs=0.0, epsrel=rtol, limit=2000
            )
        except integrate.IntegrationWarning as exc:
            raise NonConvergent(
                f"occupancy integral did not converge: {exc}",
                hint="check that the mechanical linewidth is resolved",
            ) from exc
    if error > max(1e3 * rtol * abs(value), 1e-12):
        raise NonConvergent(f"occupancy integral error {error:.3g} exceeds tolerance")
    logger.debug(
        "Occupancy integral evaluated",
        extra={"operation": "occupancy_from_spectrum", "integral": value, "error": error},
    )
    return OccupancyResult(occupancy=value - 0.5, error=error)


# ============================================================================
# RATES
# ============================================================================


def _sideband_weights(params: SystemParams, mode: Optional[MechanicalMode] = None) -> Tuple[float, float]:
    """Return 2|chi_c(+Omega)|^2 and 2|chi_c(-Omega)|^2."""
    mode = params.defect if mode is None else mode
    cav = params.cavity
    plus = 2.0 * float(np.abs(cavity_susceptibility(cav, mode.omega_m)) ** 2)
    minus = 2.0 * float(np.abs(cavity_susceptibility(cav, -mode.omega_m)) ** 2)
    return plus, minus


def backaction_rate(params: SystemParams, mode: Optional[MechanicalMode] = None) -> float:
    """Quantum backaction rate g^2 kappa (|chi_c(Omega)|^2 + |chi_c(-Omega)|^2)."""
    mode = params.defect if mode is None else mode
    g = params.coupling.g * mode.coupling_weight
    plus, minus = _sideband_weights(params, mode)
    return 0.5 * g * g * params.cavity.kappa * (plus + minus)


def gamma_qba_bad_cavity(params: SystemParams) -> float:
    """Backaction rate g^2 kappa / ((kappa/2)^2 + detuning^2)."""
    cav = params.cavity
    g = params.coupling.g
    return g * g * cav.kappa / (0.25 * cav.kappa**2 + cav.detuning**2)


def optical_damping(params: SystemParams, mode: Optional[MechanicalMode] = None) -> float:
    """Dynamical backaction damping; positive on the red side."""
    mode = params.defect if mode is None else mode
    g = params.coupling.g * mode.coupling_weight
    plus, minus = _sideband_weights(params, mode)
    return g * g * params.cavity.kappa * (plus - minus)


def optical_spring(params: SystemParams, mode: Optional[MechanicalMode] = None) -> float:
    """Dynamical backaction frequency shift (rad/s); negative on the red side."""
    mode = params.defect if mode is None else mode
    cav = params.cavity
    g = params.coupling.g * mode.coupling_weight
    half = 0.5 * cav.kappa
    total = 0.0
    for shift in (mode.omega_m, -mode.omega_m):
        d = cav.detuning + shift
        total += d / (half * half + d * d)
    return g * g * total


def derived_rates(params: SystemParams) -> DerivedRates:
    """Thermal, backaction and measurement rates of the defect mode."""
    mode = params.defect
    gamma_th = mode.gamma_th
    gamma_qba = backaction_rate(params)
    gamma_meas = params.eta_d * gamma_qba
    total = gamma_th + gamma_qba
    c_q = gamma_qba / gamma_th if gamma_th > 0 else (math.inf if gamma_qba > 0 else 0.0)
    eta_meas = gamma_meas / total if total > 0 else 0.0
    n_imp = mode.gamma_m / (16.0 * gamma_meas) if gamma_meas > 0 else math.inf
    ratio = 1.0 / math.sqrt(eta_meas) if eta_meas > 0 else math.inf
    return DerivedRates(
        gamma_th=gamma_th,
        gamma_qba=gamma_qba,
        gamma_meas=gamma_meas,
        c_q=c_q,
        eta_meas=eta_meas,
        n_imp=n_imp,
        heisenberg_ratio=ratio,
        gamma_opt=optical_damping(params),
        gamma_qba_bad_cavity=gamma_qba_bad_cavity(params),
    )


def coupling_for_cooperativity(params: SystemParams, c_q: float) -> SystemParams:
    """Return params whose field-enhanced coupling gives quantum cooperativity c_q."""
    if c_q < 0:
        raise ConfigError("cooperativity must be nonnegative", key="cooperativity")
    per_g2 = backaction_rate(params.with_g(1.0)) if params.coupling.g0 > 0 else 0.0
    if per_g2 <= 0:
        raise ConfigError("cooperativity cannot be set without a positive g0", key="g0_hz")
    g = math.sqrt(c_q * params.defect.gamma_th / per_g2)
    return params.with_g(g)


def intracavity_photons(params: SystemParams) -> float:
    """Mean intracavity photon number (g/g0)^2."""
    return params.coupling.mean_field**2


def ideal_cooling_occupancy(omega_m: float, kappa: float, detuning: float) -> float:
    """Sideband-cooling limit ((Omega+D)^2 + (kappa/2)^2) / (-4 D Omega).

    Raises:
        InvalidDetuning: If the detuning is not on the red side
    """
    if detuning >= 0:
        raise InvalidDetuning(
            f"cooling requires a red detuning, got {detuning:.6g} rad/s",
            hint="use a negative laser-minus-cavity detuning",
        )
    return ((omega_m + detuning) ** 2 + (0.5 * kappa) ** 2) / (-4.0 * detuning * omega_m)


# ============================================================================
# DETECTION BUDGET AND SQUEEZING
# ============================================================================


def efficiency_budget() -> Dict[str, float]:
    return dict(EFFICIENCY_BUDGET)


def detection_efficiency(homodyne_efficiency: Optional[float] = None) -> float:
    """Product of the efficiency budget, optionally replacing the homodyne factor."""
    budget = efficiency_budget()
    if homodyne_efficiency is not None:
        budget["homodyne"] = homodyne_efficiency
    return float(np.prod(list(budget.values())))


@dataclass(frozen=True)
class SqueezingResult:
    minimum: float
    theta: float
    omega: float

    @property
    def depth(self) -> float:
        return 1.0 - self.minimum

    @property
    def depth_db(self) -> float:
        return -10.0 * math.log10(self.minimum)


def _squeezing_band(params: SystemParams, half_widths: float, points: int) -> np.ndarray:
    mode = params.defect
    width = mode.gamma_m + max(optical_damping(params), 0.0)
    center = mode.omega_m + optical_spring(params)
    return center + width * np.linspace(-half_widths, half_widths, points)


def _at_angle(params: SystemParams, theta: float, efficiency: Optional[Callable[[float], float]]) -> SystemParams:
    return params if efficiency is None else params.replace(eta_d=efficiency(theta))


def squeezing_curve(
    params: SystemParams,
    thetas: Iterable[float],
    omegas: Optional[Sequence[float]] = None,
    efficiency: Optional[Callable[[float], float]] = None,
) -> np.ndarray:
    """Minimum of the detected spectrum over frequency, for each angle.

    efficiency, when given, maps theta to the total detection efficiency used
    at that angle (see tin.angle_dependent_efficiency()).
    """
    grid = _squeezing_band(params, 20.0, 801) if omegas is None else np.asarray(omegas, float)
    return np.array(
        [float(np.min(detected_spectrum(_at_angle(params, theta, efficiency), grid, theta))) for theta in thetas]
    )


def max_squeezing(params: SystemParams, efficiency: Optional[Callable[[float], float]] = None) -> SqueezingResult:
    """Minimum of the detected spectrum over angle and frequency.

    A grid search over theta in [-pi/2, pi/2) and a band of +-20 effective
    linewidths around the shifted resonance is refined with Nelder-Mead.
    efficiency has the meaning it has in squeezing_curve().
    """
    thetas = np.linspace(-0.5 * math.pi, 0.5 * math.pi, 181, endpoint=False)
    grid = _squeezing_band(params, 20.0, 801)
    best = (math.inf, 0.0, float(grid[0]))
    for theta in thetas:
        values = detected_spectrum(_at_angle(params, theta, efficiency), grid, theta)
        k = int(np.argmin(values))
        if values[k] < best[0]:
            best = (float(values[k]), float(theta), float(grid[k]))

    mode = params.defect
    scale = mode.gamma_m + max(optical_damping(params), 0.0)
    w0 = best[2]

    def objective(x):
        return float(detected_spectrum(_at_angle(params, x[0], efficiency), w0 + x[1] * scale, x[0]))

    result = optimize.minimize(
        objective,
        x0=[best[1], 0.0],
        method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 4000},
    )
    if result.fun < best[0]:
        best = (float(result.fun), float(result.x[0]), float(w0 + result.x[1] * scale))
    theta = (best[1] + 0.5 * math.pi) % math.pi - 0.5 * math.pi
    logger.debug(
        "Maximum squeezing located",
        extra={"operation": "max_squeezing", "minimum": best[0], "theta": theta},
    )
    return SqueezingResult(minimum=best[0], theta=theta, omega=best[2])


def frequency_noise_requirement(params: SystemParams) -> float:
    """Ground-state bound on laser frequency noise (g0/2pi)^2 / (Gamma_th/2pi), Hz^2/Hz."""
    g0_hz = params.coupling.g0 / TWO_PI
    gamma_th_hz = params.defect.gamma_th / TWO_PI
    return g0_hz**2 / gamma_th_hz


# ============================================================================
# REFERENCE PARAMETERS
# ============================================================================


def reference_params(
    cooperativity: float = OPERATING_COOPERATIVITY,
    eta_d: float = OPERATING_ETA_D,
    theta: float = math.radians(-120.0),
    kappa_hz: float = KAPPA_HZ,
) -> SystemParams:
    """Single-mode 819 nm operating point at the magic detuning."""
    kappa = TWO_PI * kappa_hz
    mode = MechanicalMode(omega_m=TWO_PI * OMEGA_M_HZ, gamma_m=TWO_PI * GAMMA_M_HZ, n_th=N_TH, label="defect")
    params = SystemParams(
        modes=(mode,),
        cavity=CavityMode.from_linewidth(kappa, magic_detuning(kappa)),
        coupling=CouplingParams.from_mean_field(TWO_PI * G0_HZ, 0.0),
        eta_d=eta_d,
        theta=theta,
    )
    return coupling_for_cooperativity(params, cooperativity)
