"""Signal conditioning and calibration.

This module turns raw photocurrent into the inputs of the estimator and the
spectral fit, and runs the calibrations that fix the model's scale:

- Filter cascade: Butterworth bandpass and notch stages as second-order sections
- IQ demodulation of carrier records
- Welch power spectral densities
- Shot-noise calibration with a classical-noise correction
- g0 from two phase-modulation tones
- Laser phase and frequency noise from a heterodyne beat note

FILTER REALIZATION:
===================
Every stage is realized as second-order sections (scipy.signal "sos" output)
and the cascade is the row-wise concatenation of the stages. Direct-form
polynomials of order 14 at MHz-scale bands and a 14 MHz rate lose all
significant digits, sections do not. A realized section whose poles are not
strictly inside the unit circle raises UnstableFilter.

By default the cascade is applied forward and backward (sosfiltfilt), which
squares its magnitude response and removes its phase. Single-pass filtering
shifts the output back by the cascade's group delay at the passband center,
rounded to whole samples.

PSD NORMALIZATION:
==================
welch_psd() returns densities per Hz. For real input the spectrum is single
sided, so white noise of variance s^2 at rate fs reads s^2 / (fs / 2). For
complex input it is two sided and sorted by frequency.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import signal, stats

from config.constants import (
    BANDPASS_HZ,
    BANDPASS_ORDER,
    BANDPASS_PASSES,
    DEMOD_LOWPASS_FRACTION,
    DEMOD_LOWPASS_ORDER,
    MIN_BEAT_SAMPLES,
    NOTCH_Q,
    NOTCH_THRESHOLD,
    SHOT_NOISE_MIN_POINTS,
    SHOT_NOISE_MIN_SPAN,
    TWO_PI,
    UNWRAP_AMPLITUDE_FRACTION,
    WELCH_OVERLAP,
    WELCH_SEGMENT,
    WELCH_WINDOW,
)

from .errors import ConfigError, IllConditioned, PeakNotFound, ToneNotFound, UnstableFilter, UnwrapFailure
from .fitting import LorentzianFit, fit_lorentzian
from .simulator import CarrierRecord, MeasurementRecord

logger = logging.getLogger(__name__)

STAGE_KINDS = ("butterworth_bandpass", "notch")

# ============================================================================
# FILTER CASCADE
# ============================================================================


@dataclass(frozen=True)
class FilterStage:
    """One stage of the filter cascade.

    Attributes:
        kind: "butterworth_bandpass" or "notch"
        band: (f_lo, f_hi) in Hz for a bandpass, (center_hz, q) for a notch
        order: Butterworth order, ignored for notches
    """

    kind: str
    band: Tuple[float, float]
    order: int = BANDPASS_ORDER

    def __post_init__(self) -> None:
        if self.kind not in STAGE_KINDS:
            raise ConfigError(f"unknown filter kind {self.kind!r}", key="kind")
        if self.kind == "butterworth_bandpass" and self.order < 1:
            raise ConfigError("filter order must be positive", key="order")

    def check(self, sample_rate: float) -> None:
        nyquist = 0.5 * sample_rate
        if self.kind == "butterworth_bandpass":
            lo, hi = self.band
            if not 0 < lo < hi < nyquist:
                raise ConfigError(
                    f"bandpass ({lo:g}, {hi:g}) Hz must satisfy 0 < f_lo < f_hi < {nyquist:g} Hz",
                    key="band",
                )
        else:
            center, q = self.band
            if not 0 < center < nyquist:
                raise ConfigError(f"notch at {center:g} Hz is outside (0, {nyquist:g}) Hz", key="band")
            if not q > 0:
                raise ConfigError("notch quality factor must be positive", key="band")

    def sos(self, sample_rate: float) -> np.ndarray:
        self.check(sample_rate)
        if self.kind == "butterworth_bandpass":
            return signal.butter(self.order, self.band, btype="bandpass", output="sos", fs=sample_rate)
        b, a = signal.iirnotch(self.band[0], self.band[1], fs=sample_rate)
        return signal.tf2sos(b, a)


@dataclass(frozen=True)
class FilterSpec:
    """Ordered cascade of filter stages.

    Attributes:
        stages: Stages applied in order; an empty cascade is the identity
        zero_phase: Forward-backward application (default) or single pass
    """

    stages: Tuple[FilterStage, ...] = ()
    zero_phase: bool = True

    @classmethod
    def default(cls, notches: Sequence[FilterStage] = (), zero_phase: bool = True) -> "FilterSpec":
        """The measurement chain: BANDPASS_PASSES identical bandpasses plus notches."""
        bandpass = FilterStage("butterworth_bandpass", tuple(BANDPASS_HZ), BANDPASS_ORDER)
        return cls(stages=(bandpass,) * BANDPASS_PASSES + tuple(notches), zero_phase=zero_phase)

    def with_stages(self, extra: Sequence[FilterStage]) -> "FilterSpec":
        return FilterSpec(stages=self.stages + tuple(extra), zero_phase=self.zero_phase)


def realize(spec: FilterSpec, sample_rate: float) -> np.ndarray:
    """Second-order sections of the whole cascade.

    Raises:
        ConfigError: If a stage does not fit the sample rate
        UnstableFilter: If a realized pole is not strictly inside the unit circle
    """
    if not spec.stages:
        return np.array([[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]])
    sos = np.vstack([stage.sos(sample_rate) for stage in spec.stages])
    radius = max(float(np.max(np.abs(np.roots(section[3:])), initial=0.0)) for section in sos)
    if radius >= 1.0:
        raise UnstableFilter(
            f"realized filter has a pole at radius {radius:.12f}",
            hint="widen the band or lower the order",
        )
    return sos


def _group_delay_samples(sos: np.ndarray, freq_hz: float, sample_rate: float) -> int:
    w = TWO_PI * freq_hz / sample_rate
    total = 0.0
    for section in sos:
        _, gd = signal.group_delay((section[:3], section[3:]), w=[w])
        total += float(gd[0])
    return int(round(total))


def _reference_frequency(spec: FilterSpec) -> float:
    for stage in spec.stages:
        if stage.kind == "butterworth_bandpass":
            return math.sqrt(stage.band[0] * stage.band[1])
    return 0.0


def filter_samples(samples: np.ndarray, spec: FilterSpec, sample_rate: float) -> np.ndarray:
    """Apply the cascade to a sample array (real or complex)."""
    x = np.asarray(samples)
    if not spec.stages:
        return x.copy()
    sos = realize(spec, sample_rate)
    if spec.zero_phase:
        return signal.sosfiltfilt(sos, x)
    y = signal.sosfilt(sos, x)
    shift = _group_delay_samples(sos, _reference_frequency(spec), sample_rate)
    if shift <= 0:
        return y
    out = np.zeros_like(y)
    out[:-shift] = y[shift:]
    return out


def apply_filter_chain(record: CarrierRecord, spec: FilterSpec) -> CarrierRecord:
    """Filter a carrier record with the cascade.

    Raises:
        UnstableFilter: If the realized cascade is unstable
    """
    filtered = filter_samples(record.samples, spec, record.sample_rate)
    logger.debug(
        "Filter chain applied",
        extra={"operation": "apply_filter_chain", "stages": len(spec.stages), "zero_phase": spec.zero_phase},
    )
    return CarrierRecord(samples=filtered, sample_rate=record.sample_rate, carrier_frequency=record.carrier_frequency)


def transfer_function(spec: FilterSpec, freqs_hz, sample_rate: float) -> np.ndarray:
    """Response of the cascade as it is applied.

    Complex H(f) for single-pass filtering, the real |H(f)|^2 for
    forward-backward filtering.
    """
    freqs = np.asarray(freqs_hz, dtype=float)
    sos = realize(spec, sample_rate)
    _, h = signal.sosfreqz(sos, worN=freqs, fs=sample_rate)
    if spec.zero_phase:
        return np.abs(h) ** 2
    return h


def design_notches_from_psd(
    freqs_hz,
    psd,
    sample_rate: float,
    exclude_band: Optional[Tuple[float, float]] = None,
    threshold: float = NOTCH_THRESHOLD,
    q: float = NOTCH_Q,
) -> Tuple[FilterStage, ...]:
    """Place a notch on every peak above `threshold` times shot noise.

    Args:
        freqs_hz: Frequency axis of a PSD normalized to shot noise
        psd: PSD values
        sample_rate: Rate the notches will run at
        exclude_band: Peaks inside this band (the bandgap) are kept
        threshold: Peak height relative to shot noise that gets notched
        q: Quality factor of every notch

    Returns:
        Notch stages ordered by frequency
    """
    freqs = np.asarray(freqs_hz, dtype=float)
    values = np.asarray(psd, dtype=float)
    peaks, _ = signal.find_peaks(values, height=threshold)
    nyquist = 0.5 * sample_rate
    notches = []
    for k in peaks:
        f = float(freqs[k])
        if not 0 < f < nyquist:
            continue
        if exclude_band is not None and exclude_band[0] <= f <= exclude_band[1]:
            continue
        notches.append(FilterStage("notch", (f, q)))
    logger.info(
        "Notch filters designed",
        extra={"operation": "design_notches_from_psd", "peaks": int(peaks.size), "notches": len(notches)},
    )
    return tuple(notches)


# ============================================================================
# DEMODULATION AND SPECTRA
# ============================================================================


def demodulate(samples: np.ndarray, sample_rate: float, f_demod: float, decimation: int = 1) -> np.ndarray:
    """Complex baseband 2 LPF[s(t) exp(-i w t)], decimated.

    The lowpass is a Butterworth of order DEMOD_LOWPASS_ORDER applied forward
    and backward, cut off at DEMOD_LOWPASS_FRACTION of the output Nyquist
    frequency.
    """
    if not 0 < f_demod < 0.5 * sample_rate:
        raise ConfigError(
            f"demodulation frequency {f_demod:g} Hz is not below Nyquist ({0.5 * sample_rate:g} Hz)",
            key="f_demod",
        )
    if decimation < 1:
        raise ConfigError("decimation must be a positive integer", key="decimation")
    x = np.asarray(samples, dtype=float)
    t = np.arange(x.size) / sample_rate
    mixed = x * np.exp(-1j * TWO_PI * f_demod * t)
    cutoff = DEMOD_LOWPASS_FRACTION * 0.5 * sample_rate / decimation
    sos = signal.butter(DEMOD_LOWPASS_ORDER, cutoff, btype="lowpass", output="sos", fs=sample_rate)
    base = 2.0 * (signal.sosfiltfilt(sos, mixed.real) + 1j * signal.sosfiltfilt(sos, mixed.imag))
    return base[::decimation]


def iq_demodulate(record: CarrierRecord, f_demod: Optional[float] = None, decimation: int = 1) -> MeasurementRecord:
    """Demodulate a carrier record into an IQ record.

    Args:
        record: Real carrier record
        f_demod: Demodulation frequency (Hz), defaults to the record's carrier
        decimation: Output keeps every decimation-th sample

    Returns:
        MeasurementRecord at sample_rate / decimation
    """
    f = record.carrier_frequency if f_demod is None else f_demod
    iq = demodulate(record.samples, record.sample_rate, f, decimation)
    logger.debug(
        "Carrier demodulated",
        extra={"operation": "iq_demodulate", "f_demod": f, "decimation": decimation, "n": iq.size},
    )
    return MeasurementRecord(
        i_x=iq.real,
        i_y=iq.imag,
        sample_rate=record.sample_rate / decimation,
        demod_frequency=f,
        meta={"source": "iq_demodulate", "decimation": decimation},
    )


def welch_psd(
    samples,
    sample_rate: float,
    segment: Optional[int] = None,
    overlap: float = WELCH_OVERLAP,
    window: str = WELCH_WINDOW,
) -> Tuple[np.ndarray, np.ndarray]:
    """Welch power spectral density per Hz.

    Args:
        samples: Real or complex samples
        sample_rate: Sampling rate (Hz)
        segment: Segment length, defaults to min(WELCH_SEGMENT, len(samples))
        overlap: Fractional segment overlap
        window: scipy window name

    Returns:
        (freqs_hz, psd); single sided for real input, two sided and sorted for
        complex input

    Raises:
        ConfigError: If the segment is longer than the record
    """
    x = np.asarray(samples)
    n = x.shape[0]
    nperseg = min(WELCH_SEGMENT, n) if segment is None else int(segment)
    if nperseg > n or nperseg < 2:
        raise ConfigError(f"segment of {nperseg} samples does not fit a record of {n}", key="segment")
    if not 0 <= overlap < 1:
        raise ConfigError("overlap must be in [0, 1)", key="overlap")
    complex_input = np.iscomplexobj(x)
    freqs, psd = signal.welch(
        x,
        fs=sample_rate,
        window=window,
        nperseg=nperseg,
        noverlap=int(overlap * nperseg),
        detrend=False,
        return_onesided=not complex_input,
        scaling="density",
    )
    if complex_input:
        freqs = np.fft.fftshift(freqs)
        psd = np.fft.fftshift(psd)
    return freqs, np.real(psd)


def record_spectrum(record: MeasurementRecord, segment: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Spectrum of an IQ record on the lab-frequency axis in shot-noise units.

    The two-sided density of i_x + i i_y at baseband offset f equals twice
    the single-sided density of the lab photocurrent at f_demod + f, so the
    result is directly comparable with model_core.detected_spectrum().
    """
    freqs, psd = welch_psd(record.iq, record.sample_rate, segment)
    return record.demod_frequency + freqs, 0.5 * psd


# ============================================================================
# SHOT-NOISE CALIBRATION
# ============================================================================


@dataclass(frozen=True)
class ShotNoiseCal:
    """Fit of band noise power P(V) = a V + b V^2 against detector voltage.

    Attributes:
        a: Linear (shot-noise) coefficient
        b: Quadratic (classical) coefficient
        covariance: 2x2 covariance of (a, b)
        operating_voltage: Voltage the fraction refers to
        residuals: Weighted residuals of the fit
    """

    a: float
    b: float
    covariance: np.ndarray
    operating_voltage: float
    residuals: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    @property
    def shot_noise_reference(self) -> float:
        """Corrected shot-noise level a V_op."""
        return self.a * self.operating_voltage

    @property
    def classical_fraction(self) -> float:
        """b V_op / (a + b V_op), floored at zero."""
        v = self.operating_voltage
        return max(0.0, self.b * v / (self.a + self.b * v))

    @property
    def classical_fraction_error(self) -> float:
        v = self.operating_voltage
        denom = (self.a + self.b * v) ** 2
        grad = np.array([-self.b * v / denom, self.a * v / denom])
        return float(math.sqrt(max(grad @ self.covariance @ grad, 0.0)))


def _weighted_design(voltages, powers, weights, degree: int):
    v = np.asarray(voltages, dtype=float)
    p = np.asarray(powers, dtype=float)
    w = 1.0 / p**2 if weights is None else np.asarray(weights, dtype=float)
    if v.shape != p.shape or w.shape != p.shape:
        raise ConfigError("voltages, powers and weights must have the same length", key="voltages")
    if np.any(w <= 0):
        raise ConfigError("weights must be positive", key="weights")
    design = np.column_stack([v**k for k in range(1, degree + 1)])
    root = np.sqrt(w)
    return design * root[:, None], p * root


def _check_voltages(voltages) -> None:
    v = np.asarray(voltages, dtype=float)
    distinct = np.unique(v)
    if distinct.size < SHOT_NOISE_MIN_POINTS:
        raise IllConditioned(
            f"{distinct.size} distinct voltages, at least {SHOT_NOISE_MIN_POINTS} are needed",
            hint="measure the noise at more optical powers",
        )
    if distinct[0] <= 0 or distinct[-1] / distinct[0] < SHOT_NOISE_MIN_SPAN:
        raise IllConditioned(
            f"voltages span a factor {distinct[-1] / distinct[0]:.3g}, at least {SHOT_NOISE_MIN_SPAN:g} is needed",
            hint="a narrow span cannot separate linear from quadratic noise",
        )


def shot_noise_calibrate(voltages, powers, operating_voltage: float, weights=None) -> ShotNoiseCal:
    """Weighted least-squares fit of P = a V + b V^2.

    Args:
        voltages: Detector DC voltages
        powers: Band noise powers at those voltages
        operating_voltage: Voltage of the measurement run
        weights: Per-point weights, default 1/P^2 (constant relative error)

    Raises:
        IllConditioned: Fewer than four distinct voltages, or a span below a factor 2
    """
    _check_voltages(voltages)
    design, target = _weighted_design(voltages, powers, weights, 2)
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < 2:
        raise IllConditioned("calibration design matrix is rank deficient")
    residuals = target - design @ coef
    dof = max(design.shape[0] - 2, 1)
    chi2_red = float(residuals @ residuals) / dof
    covariance = np.linalg.inv(design.T @ design) * chi2_red
    a, b = float(coef[0]), float(coef[1])
    if not a > 0:
        raise IllConditioned(f"fitted shot-noise coefficient a={a:.3g} is not positive")
    cal = ShotNoiseCal(a=a, b=b, covariance=covariance, operating_voltage=float(operating_voltage), residuals=residuals)
    logger.info(
        "Shot-noise calibration fitted",
        extra={"operation": "shot_noise_calibrate", "a": a, "b": b, "classical_fraction": cal.classical_fraction},
    )
    return cal


@dataclass(frozen=True)
class FTestResult:
    statistic: float
    p_value: float

    def rejects(self, level: float = 0.05) -> bool:
        return self.p_value < level


def cubic_term_test(voltages, powers, weights=None) -> FTestResult:
    """F-test of adding c V^3 to the calibration polynomial.

    Raises:
        IllConditioned: If there are too few points for the cubic model
    """
    _check_voltages(voltages)
    quad_x, quad_y = _weighted_design(voltages, powers, weights, 2)
    cubic_x, cubic_y = _weighted_design(voltages, powers, weights, 3)
    n = quad_y.size
    if n <= 3:
        raise IllConditioned("the cubic test needs more than three points")
    rss2 = float(np.sum((quad_y - quad_x @ np.linalg.lstsq(quad_x, quad_y, rcond=None)[0]) ** 2))
    rss3 = float(np.sum((cubic_y - cubic_x @ np.linalg.lstsq(cubic_x, cubic_y, rcond=None)[0]) ** 2))
    if rss3 <= 0:
        return FTestResult(statistic=math.inf, p_value=0.0) if rss2 > 0 else FTestResult(0.0, 1.0)
    f_stat = (rss2 - rss3) / (rss3 / (n - 3))
    return FTestResult(statistic=f_stat, p_value=float(stats.f.sf(f_stat, 1, n - 3)))


# ============================================================================
# g0 CALIBRATION
# ============================================================================


@dataclass(frozen=True)
class G0Estimate:
    """Result of the two-tone g0 calibration.

    Attributes:
        g0: Vacuum coupling (rad/s)
        occupancy: Mode occupancy Gamma_th / Gamma_eff used for the peak
        tone_gains: Per-tone transduction K_i = A_i / (beta_i^2 Omega_i^2 / 2)
        peak: Lorentzian fit of the mechanical peak
    """

    g0: float
    occupancy: float
    tone_gains: Tuple[float, ...]
    peak: LorentzianFit

    @property
    def g0_hz(self) -> float:
        return self.g0 / TWO_PI


def tone_power(freqs_hz, psd, tone_hz: float, half_width: int = 4) -> float:
    """Integrated power of a narrow line above the local background.

    Raises:
        ToneNotFound: If the tone is off the axis or not above the background
    """
    freqs = np.asarray(freqs_hz, dtype=float)
    values = np.asarray(psd, dtype=float)
    if not freqs[0] <= tone_hz <= freqs[-1]:
        raise ToneNotFound(f"tone at {tone_hz:g} Hz is outside the PSD axis")
    df = float(freqs[1] - freqs[0])
    k = int(round((tone_hz - freqs[0]) / df))
    lo, hi = max(k - half_width, 0), min(k + half_width + 1, values.size)
    side = 10 * half_width
    mask = np.zeros(values.size, dtype=bool)
    mask[max(k - side, 0) : min(k + side + 1, values.size)] = True
    mask[lo:hi] = False
    background = float(np.median(values[mask])) if mask.any() else 0.0
    if values[lo:hi].max() < 10.0 * background:
        raise ToneNotFound(
            f"no line above the background at {tone_hz:g} Hz",
            hint="increase the modulation depth or the averaging time",
        )
    return float(np.sum(values[lo:hi] - background) * df)


def estimate_g0(
    freqs_hz,
    psd,
    tones: Sequence[Tuple[float, float]],
    peak_band: Tuple[float, float],
    gamma_th: float,
) -> G0Estimate:
    """Vacuum coupling from the mechanical peak and phase-modulation tones.

    A tone of depth beta at angular frequency Omega shifts the cavity like a
    mechanical quadrature of amplitude beta Omega / (sqrt(2) g0), while the
    thermal peak carries the quadrature variance n. With K the geometric mean
    of the per-tone transductions, g0^2 = A_mech / (2 n K). The geometric mean
    cancels a response that tilts linearly across the two tones.

    Args:
        freqs_hz: Single-sided PSD frequency axis
        psd: PSD of the photocurrent
        tones: (frequency Hz, modulation depth) pairs
        peak_band: Band containing the mechanical peak (Hz)
        gamma_th: Thermal decoherence rate n_th Gamma_m (rad/s)

    Raises:
        ToneNotFound: If a tone is missing
        PeakNotFound: If the mechanical peak cannot be fitted
    """
    if not tones:
        raise ConfigError("at least one calibration tone is required", key="tones")
    gains = []
    for freq, depth in tones:
        if depth <= 0:
            raise ConfigError("modulation depth must be positive", key="tones")
        power = tone_power(freqs_hz, psd, freq)
        gains.append(power / (0.5 * (depth * TWO_PI * freq) ** 2))
    k = float(stats.gmean(gains))
    peak = fit_lorentzian(freqs_hz, psd, peak_band)
    gamma_eff = TWO_PI * peak.width_hz
    occupancy = gamma_th / gamma_eff
    if not occupancy > 0 or not peak.area > 0:
        raise PeakNotFound("mechanical peak has no positive area")
    g0 = math.sqrt(peak.area / (2.0 * occupancy * k))
    logger.info(
        "g0 estimated",
        extra={"operation": "estimate_g0", "g0_hz": g0 / TWO_PI, "occupancy": occupancy, "tones": len(gains)},
    )
    return G0Estimate(g0=g0, occupancy=occupancy, tone_gains=tuple(gains), peak=peak)


# ============================================================================
# LASER PHASE NOISE
# ============================================================================


@dataclass(frozen=True)
class PhaseNoise:
    """Phase and frequency noise of a beat note.

    Attributes:
        freqs_hz: Offset frequencies
        s_phi: Single-sided phase noise (rad^2/Hz)
        s_nu: Single-sided frequency noise f^2 S_phi (Hz^2/Hz)
        sample_rate: Rate of the demodulated phase record
    """

    freqs_hz: np.ndarray
    s_phi: np.ndarray
    s_nu: np.ndarray
    sample_rate: float

    def at(self, freq_hz: float) -> float:
        """Frequency noise interpolated at freq_hz."""
        return float(np.interp(freq_hz, self.freqs_hz, self.s_nu))


def phase_noise_from_beat(
    samples: Union[np.ndarray, CarrierRecord],
    sample_rate: Optional[float] = None,
    f_beat: Optional[float] = None,
    segment: Optional[int] = None,
) -> PhaseNoise:
    """Phase noise of a real beat-note record.

    The beat is demodulated at f_beat, decimated so that the 2 f_beat image
    falls far into the lowpass stopband, and the unwrapped, linearly
    detrended phase is Welch-averaged.

    Raises:
        UnwrapFailure: If the record is shorter than MIN_BEAT_SAMPLES or the
            beat amplitude drops below UNWRAP_AMPLITUDE_FRACTION of its median
    """
    if isinstance(samples, CarrierRecord):
        sample_rate = samples.sample_rate if sample_rate is None else sample_rate
        f_beat = samples.carrier_frequency if f_beat is None else f_beat
        samples = samples.samples
    if sample_rate is None or f_beat is None:
        raise ConfigError("sample rate and beat frequency are required", key="beat_hz")
    x = np.asarray(samples, dtype=float)
    if x.size < MIN_BEAT_SAMPLES:
        raise UnwrapFailure(
            f"beat record has {x.size} samples, at least {MIN_BEAT_SAMPLES} are needed",
            hint="record a longer beat note",
        )
    decimation = max(1, int(sample_rate // (2.0 * f_beat)))
    iq = demodulate(x, sample_rate, f_beat, decimation)
    edge = max(iq.size // 100, 1)
    iq = iq[edge:-edge]
    amplitude = np.abs(iq)
    if amplitude.min() < UNWRAP_AMPLITUDE_FRACTION * float(np.median(amplitude)):
        raise UnwrapFailure(
            "beat amplitude collapses, the phase cannot be unwrapped",
            hint="the beat signal-to-noise ratio is too low",
        )
    rate = sample_rate / decimation
    phase = signal.detrend(np.unwrap(np.angle(iq)), type="linear")
    nperseg = min(WELCH_SEGMENT, phase.size // 8) if segment is None else segment
    freqs, s_phi = welch_psd(phase, rate, segment=nperseg)
    s_nu = freqs**2 * s_phi
    logger.info(
        "Beat-note phase noise computed",
        extra={"operation": "phase_noise_from_beat", "f_beat": f_beat, "rate": rate, "segments": phase.size // nperseg},
    )
    return PhaseNoise(freqs_hz=freqs, s_phi=s_phi, s_nu=s_nu, sample_rate=rate)
