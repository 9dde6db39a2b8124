"""Thermal intermodulation noise and its cancellation.

A cavity whose resonance is modulated by classical frequency noise dD(t)
responds nonlinearly. Expanding the intracavity field a = abar + a1 + a2 + ...
in powers of dD gives, with the transfer function

    T(w) = i / (kappa/2 + i(w - detuning))

(numpy FFT sign convention, d/dt -> +iw):

    a1(w) = abar T(w) dD(w)
    a2(w) = T(w) [dD * a1](w)          (* = convolution)

The photon number fluctuation n = abar* (a1 + a2) + c.c. + |a1|^2 has no
quadratic DC transduction at the magic detuning -kappa/(2 sqrt 3); a single
photodetector can cancel the remaining mixing noise by interfering a weak
local oscillator at the angle given by lo_settings_for_quadrature().

SPECTRAL REPRESENTATION:
========================
Fields are stored as Fourier-series coefficients c_k = fft(x)/N, so that
x(t) = sum_k c_k exp(i w_k t). Coefficients do not depend on the grid length,
which lets the quadratic term be evaluated on a grid extended by
ZERO_PAD_FACTOR in bandwidth: sum-frequency products then land on the
extended grid instead of wrapping around.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from config.constants import ALIAS_BAND_FRACTION, HOMODYNE_REFLECTIVITY, HOMODYNE_VISIBILITY, ZERO_PAD_FACTOR

from .errors import AliasWarning, ConfigError, NoCancellation
from .model_core import CavityMode, detection_efficiency, optical_susceptibility_dc

logger = logging.getLogger(__name__)

# ============================================================================
# TRACES AND SPECTRA
# ============================================================================


@dataclass(frozen=True)
class DetuningNoiseTrace:
    """Cavity detuning fluctuation dD(t) (rad/s) on a uniform grid.

    Attributes:
        samples: Real or complex samples
        dt: Sample interval (s)
    """

    samples: np.ndarray
    dt: float

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples)
        if samples.ndim != 1 or samples.size < 2:
            raise ConfigError("trace must be one-dimensional with at least two samples", key="samples")
        if not np.all(np.isfinite(samples)):
            raise ConfigError("trace contains non-finite samples", key="samples")
        if not self.dt > 0:
            raise ConfigError("sample interval must be positive", key="dt")
        object.__setattr__(self, "samples", samples)

    @classmethod
    def from_tones(cls, tones, dt: float, n: int) -> "DetuningNoiseTrace":
        """Sum of cosines; tones is a sequence of (angular frequency, amplitude)."""
        t = np.arange(n) * dt
        samples = np.zeros(n)
        for omega, amplitude in tones:
            samples += amplitude * np.cos(omega * t)
        return cls(samples=samples, dt=dt)

    @property
    def n(self) -> int:
        return int(self.samples.size)

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt


@dataclass(frozen=True)
class FieldSpectrum:
    """Fourier-series coefficients of a field or intensity on a uniform grid.

    Attributes:
        coefficients: c_k = fft(x) / N
        dt: Sample interval of the grid the coefficients live on (s)
    """

    coefficients: np.ndarray
    dt: float

    @property
    def n(self) -> int:
        return int(self.coefficients.size)

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.n, self.dt)

    def line(self, omega: float) -> complex:
        """Coefficient at the grid point nearest to omega (rad/s)."""
        k = int(np.argmin(np.abs(self.omega - omega)))
        return complex(self.coefficients[k])

    def time_domain(self) -> np.ndarray:
        return np.fft.ifft(self.coefficients) * self.n

    def on_grid(self, n: int) -> "FieldSpectrum":
        """Same signal on an n-point grid spanning the same duration."""
        return FieldSpectrum(_embed(self.coefficients, n), self.dt * self.n / n)

    def energy(self) -> float:
        return float(np.sum(np.abs(self.coefficients) ** 2))


def _series(x: np.ndarray) -> np.ndarray:
    return np.fft.fft(x) / x.size


def _embed(c: np.ndarray, m: int) -> np.ndarray:
    """Place the coefficients of an n-point grid onto an m-point grid (m >= n)."""
    n = c.size
    if m == n:
        return c.astype(complex, copy=True)
    if m < n:
        raise ValueError("cannot embed onto a coarser grid")
    out = np.zeros(m, dtype=complex)
    if n % 2 == 0:
        half = n // 2
        out[:half] = c[:half]
        if half > 1:
            out[m - half + 1 :] = c[half + 1 :]
        # Nyquist bin is shared by both signs
        out[half] += 0.5 * c[half]
        out[m - half] += 0.5 * c[half]
    else:
        pos = (n + 1) // 2
        out[:pos] = c[:pos]
        if n - pos > 0:
            out[m - (n - pos) :] = c[pos:]
    return out


def cavity_transfer(cav: CavityMode, omega) -> np.ndarray:
    """T(w) = i / (kappa/2 + i(w - detuning))."""
    w = np.asarray(omega, dtype=float)
    return 1j / (0.5 * cav.kappa + 1j * (w - cav.detuning))


def _check_alias(trace: DetuningNoiseTrace) -> None:
    c = _series(trace.samples)
    power = np.abs(c) ** 2
    total = power.sum()
    if total == 0:
        return
    freqs = np.abs(np.fft.fftfreq(trace.n, trace.dt))
    order = np.argsort(freqs)
    cumulative = np.cumsum(power[order]) / total
    edge = freqs[order][min(int(np.searchsorted(cumulative, 0.999)), trace.n - 1)]
    nyquist = 0.5 / trace.dt
    if edge > ALIAS_BAND_FRACTION * nyquist:
        message = (
            f"trace occupies {edge / nyquist:.0%} of the band; higher-order products will alias"
        )
        logger.warning(message, extra={"operation": "quadratic_field_response", "band_edge_hz": edge})
        warnings.warn(message, AliasWarning, stacklevel=3)


# ============================================================================
# SERIES TERMS
# ============================================================================


def linear_field_response(trace: DetuningNoiseTrace, cav: CavityMode, mean_field: complex) -> FieldSpectrum:
    """First-order field a1(w) = abar T(w) dD(w)."""
    c_delta = _series(trace.samples)
    omega = 2.0 * math.pi * np.fft.fftfreq(trace.n, trace.dt)
    return FieldSpectrum(mean_field * cavity_transfer(cav, omega) * c_delta, trace.dt)


def _next_order(trace: DetuningNoiseTrace, cav: CavityMode, previous: FieldSpectrum, m: int) -> FieldSpectrum:
    delta = _embed(_series(trace.samples), m)
    dt_m = trace.dt * trace.n / m
    product = (np.fft.ifft(delta) * m) * previous.on_grid(m).time_domain()
    omega = 2.0 * math.pi * np.fft.fftfreq(m, dt_m)
    return FieldSpectrum(cavity_transfer(cav, omega) * _series(product), dt_m)


def quadratic_field_response(
    trace: DetuningNoiseTrace,
    cav: CavityMode,
    mean_field: complex,
    a1: Optional[FieldSpectrum] = None,
) -> FieldSpectrum:
    """Second-order field a2(w) = T(w) [dD * a1](w).

    The product is formed on a grid ZERO_PAD_FACTOR times denser than the
    trace, so the result spans a correspondingly wider band.

    Warns:
        AliasWarning: If the trace occupies more than 40% of its band
    """
    _check_alias(trace)
    a1 = linear_field_response(trace, cav, mean_field) if a1 is None else a1
    return _next_order(trace, cav, a1, ZERO_PAD_FACTOR * trace.n)


def third_order_residual(
    trace: DetuningNoiseTrace, cav: CavityMode, mean_field: complex, a2: Optional[FieldSpectrum] = None
) -> FieldSpectrum:
    """Third-order field a3 = T [dD * a2], reported to judge series truncation."""
    a2 = quadratic_field_response(trace, cav, mean_field) if a2 is None else a2
    return _next_order(trace, cav, a2, 2 * a2.n)


def photon_number_noise(a1: FieldSpectrum, a2: FieldSpectrum, mean_field: complex) -> FieldSpectrum:
    """Photon number fluctuation abar*(a1 + a2) + c.c. + |a1|^2.

    a1 is moved onto the grid of a2 before the terms are combined.
    """
    m = max(a1.n, a2.n)
    x1 = a1.on_grid(m).time_domain()
    x2 = a2.on_grid(m).time_domain()
    field = np.conj(mean_field) * (x1 + x2)
    n_t = 2.0 * field.real + np.abs(x1) ** 2
    return FieldSpectrum(_series(n_t), a1.dt * a1.n / m)


def transduction_taylor_coefficients(cav: CavityMode):
    """Static expansion |a(d)|^2/|a(0)|^2 = 1 + c1 d + c2 d^2 + O(d^3).

    Returns:
        Tuple (c1, c2); c2 vanishes at the magic detuning
    """
    c = 0.25 * cav.kappa**2
    det = cav.detuning
    denom = det * det + c
    return -2.0 * det / denom, (3.0 * det * det - c) / denom**2


def residual_noise_floor(cav: CavityMode, s_dd_autoconvolution, omega):
    """Finite-linewidth floor of the photon-number mixing noise.

    Kernel ((4D^2 + k^2)(k^2 - 12 D^2)^2 + 8(3k^2 - 4D^2) k^2 w^2) / (4D^2 + k^2)^5
    multiplied by the autoconvolution of the detuning-noise spectrum.
    """
    w = np.asarray(omega, dtype=float)
    k2 = cav.kappa**2
    d2 = cav.detuning**2
    base = 4.0 * d2 + k2
    kernel = (base * (k2 - 12.0 * d2) ** 2 + 8.0 * (3.0 * k2 - 4.0 * d2) * k2 * w * w) / base**5
    return kernel * np.asarray(s_dd_autoconvolution, dtype=float)


# ============================================================================
# SINGLE-DETECTOR HOMODYNE
# ============================================================================


@dataclass(frozen=True)
class HomodyneGeometry:
    """Interference geometry a_hom = a_sig + r a_LO on one detector.

    Attributes:
        theta: Phase of a_hom relative to a_sig (rad)
        i_lo_over_i_sig: |r a_LO|^2 / |a_sig|^2
        i_hom_over_i_sig: |a_hom|^2 / |a_sig|^2
        visibility: Mode-matching visibility v
        r: Amplitude reflectivity of the LO injection splitter
    """

    theta: float
    i_lo_over_i_sig: float
    i_hom_over_i_sig: float
    visibility: float = HOMODYNE_VISIBILITY
    r: float = HOMODYNE_REFLECTIVITY

    def __post_init__(self) -> None:
        if self.i_lo_over_i_sig < 0 or self.i_hom_over_i_sig < 0:
            raise ConfigError("intensity ratios must be nonnegative", key="i_lo_over_i_sig")
        if not 0 < self.visibility <= 1:
            raise ConfigError("visibility must be in (0, 1]", key="visibility")

    @property
    def hom_over_sig(self) -> complex:
        """a_hom / a_sig."""
        return math.sqrt(self.i_hom_over_i_sig) * complex(math.cos(self.theta), math.sin(self.theta))

    @property
    def lo_power_over_sig(self) -> float:
        """Injected LO power |a_LO|^2 / |a_sig|^2 before the splitter."""
        return self.i_lo_over_i_sig / self.r**2


def cavity_rotation(cav: CavityMode) -> float:
    """arg chi_opt(0) = atan2(detuning, kappa/2)."""
    return float(np.angle(optical_susceptibility_dc(cav)))


def displayed_angle(theta: float, cav: CavityMode) -> float:
    """Quadrature angle with the cavity rotation removed, wrapped to (-pi/2, pi/2]."""
    value = theta - cavity_rotation(cav)
    return -((-value + 0.5 * math.pi) % math.pi - 0.5 * math.pi)


def _wrap(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


def _geometry(theta: float, ratio: float, visibility: float, r: float) -> HomodyneGeometry:
    h = 1.0 / ratio
    lo = abs(h * complex(math.cos(theta), math.sin(theta)) - 1.0) ** 2
    return HomodyneGeometry(
        theta=theta, i_lo_over_i_sig=lo, i_hom_over_i_sig=h * h, visibility=visibility, r=r
    )


def lo_settings_for_quadrature(
    theta: float,
    cav: CavityMode,
    visibility: float = HOMODYNE_VISIBILITY,
    r: float = HOMODYNE_REFLECTIVITY,
) -> HomodyneGeometry:
    """Local-oscillator setting that cancels mixing noise at angle theta.

    Solves |a_sig / a_hom| = 2 cos(theta - 2 arg chi_opt(0)) and
    r a_LO = a_hom - a_sig.

    Raises:
        NoCancellation: If the cosine is not positive at this detuning
    """
    theta = _wrap(theta)
    ratio = 2.0 * math.cos(theta - 2.0 * cavity_rotation(cav))
    if ratio <= 0:
        raise NoCancellation(
            f"quadrature {math.degrees(theta):.2f} deg is unreachable at this detuning",
            hint="the same quadrature is available at theta + 180 deg",
        )
    return _geometry(theta, ratio, visibility, r)


def quadratures_for_homodyne_intensity(
    i_hom_over_i_sig: float,
    cav: CavityMode,
    visibility: float = HOMODYNE_VISIBILITY,
    r: float = HOMODYNE_REFLECTIVITY,
    both: bool = False,
):
    """Angles at which a locked I_hom/I_sig satisfies the cancellation condition.

    Two angles 2 arg chi_opt(0) +- arccos(1/(2h)) qualify; they are sorted by
    LO power and the smaller one is returned unless both=True.

    Raises:
        NoCancellation: If I_hom/I_sig < 1/4
    """
    if i_hom_over_i_sig <= 0:
        raise NoCancellation("I_hom/I_sig must be positive")
    h = math.sqrt(i_hom_over_i_sig)
    if 2.0 * h < 1.0:
        raise NoCancellation(
            f"I_hom/I_sig = {i_hom_over_i_sig:.4g} is below the minimum 0.25",
            hint="increase the local-oscillator power",
        )
    spread = math.acos(min(1.0, 1.0 / (2.0 * h)))
    center = 2.0 * cavity_rotation(cav)
    candidates: List[HomodyneGeometry] = [
        _geometry(_wrap(center + sign * spread), 1.0 / h, visibility, r) for sign in (1.0, -1.0)
    ]
    candidates.sort(key=lambda g: g.i_lo_over_i_sig)
    return candidates if both else candidates[0]


def homodyne_efficiency(geom: HomodyneGeometry) -> float:
    """I_hom / (I_hom + I_LO (1/v^2 - 1)) for imperfect mode matching."""
    excess = geom.i_lo_over_i_sig * (1.0 / geom.visibility**2 - 1.0)
    return geom.i_hom_over_i_sig / (geom.i_hom_over_i_sig + excess)


def homodyne_efficiency_at(
    theta: float,
    cav: CavityMode,
    visibility: float = HOMODYNE_VISIBILITY,
    r: float = HOMODYNE_REFLECTIVITY,
) -> float:
    """Homodyne efficiency of the cancelling LO setting for quadrature theta.

    theta and theta + pi detect the same quadrature; the one that satisfies
    the cancellation condition is used. On the boundary the LO dominates and
    the efficiency tends to v^2.
    """
    for candidate in (theta, theta + math.pi):
        candidate = _wrap(candidate)
        ratio = 2.0 * math.cos(candidate - 2.0 * cavity_rotation(cav))
        if ratio > 1e-12:
            return homodyne_efficiency(_geometry(candidate, ratio, visibility, r))
    return visibility**2


def angle_dependent_efficiency(
    cav: CavityMode,
    visibility: float = HOMODYNE_VISIBILITY,
    r: float = HOMODYNE_REFLECTIVITY,
) -> Callable[[float], float]:
    """theta -> total detection efficiency with that angle's homodyne factor.

    The other factors come from the efficiency budget, so the result plugs
    into model_core.squeezing_curve() and max_squeezing().
    """

    def efficiency(theta: float) -> float:
        return detection_efficiency(homodyne_efficiency_at(theta, cav, visibility, r))

    return efficiency


def mixing_noise_photocurrent(
    a1: FieldSpectrum,
    a2: FieldSpectrum,
    geometry: HomodyneGeometry,
    kappa_ex: float,
    mean_field: complex,
    photon_number_term: bool = True,
) -> FieldSpectrum:
    """Single-detector photocurrent fluctuation up to second order.

    i = a_hom* (a1 + a2) + c.c. - sqrt(kappa_ex) |a1|^2, in units where the
    output fluctuation is -sqrt(kappa_ex)(a1 + a2) and a_sig = -sqrt(kappa_ex) abar.
    photon_number_term=False drops the |a1|^2 term, which is what a balanced
    detector sees.
    """
    m = max(a1.n, a2.n)
    x1 = a1.on_grid(m).time_domain()
    x2 = a2.on_grid(m).time_domain()
    a_sig = -math.sqrt(kappa_ex) * mean_field
    a_hom = geometry.hom_over_sig * a_sig
    current = 2.0 * (np.conj(a_hom) * (x1 + x2)).real
    if photon_number_term:
        current = current - math.sqrt(kappa_ex) * np.abs(x1) ** 2
    return FieldSpectrum(_series(current), a1.dt * a1.n / m)
