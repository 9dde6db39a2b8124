"""Synthetic quadrature trajectories and homodyne photocurrent records.

Every mechanical mode is simulated in the frame rotating at the defect-mode
frequency, where mode i only turns slowly at its offset d_i = Omega_i - Omega_m.
With z_i = X_i + i Y_i the update is

    z_i[n+1] = p_i z_i[n] + noise,      p_i = exp(-i d_i dt) - Gamma'_i dt / 2

(exact rotation, damping and noise applied additively). This is the same
discrete map the estimator assumes when discretization compensation is on,
so simulator and filter are matched to machine precision.

NOISE MODEL:
============
Per step and quadrature, mode i receives
  - thermal plus zero-point noise of rate Gamma_th_i + Gamma_m_i / 2
  - backaction of rate Gamma_qba_i = w_i^2 Gamma_qba from ONE force pair
    (f_x, f_y) shared by all modes (they couple to the same optical field)

The demodulated photocurrents in shot-noise units are

    i_x = 2 cos(phi) sum_i sqrt(Gamma_meas_i) X_i
          + [sqrt(eta) sin(phi) f_x + sqrt(1 - eta sin^2 phi) e_x] / sqrt(dt)

and likewise for i_y with (Y, f_y, e_y). phi is the detected angle measured
from the quadrature that carries no backaction correlation; phi = 0 at the
mechanical readout angle theta = -120 deg for the magic detuning. The
correlated term produces ponderomotive squeezing; correlated_backaction=False
replaces it with independent noise.

REPRODUCIBILITY:
================
Each realization owns three Philox streams spawned from SeedSequence(seed):
thermal, backaction and imprecision. Results do not depend on thread
scheduling or on the number of threads in simulate_ensemble().
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, signal

from config.constants import (
    BYTES_PER_SAMPLE,
    DEFAULT_MAX_SAMPLES,
    MAX_CAVITY_STEP,
    MAX_ROTATION_STEP,
    MEMORY_FRACTION,
    TWO_PI,
)
from config.run_registry import available_memory_bytes

from .errors import ConfigError, StepTooLarge
from .model_core import CavityMode, SystemParams, backaction_rate
from .tin import DetuningNoiseTrace, cavity_rotation

logger = logging.getLogger(__name__)

# ============================================================================
# TYPES
# ============================================================================


@dataclass(frozen=True)
class TrajectoryConfig:
    """One simulated realization.

    Attributes:
        params: System parameters; all modes are simulated
        dt: Integrator step and record sample interval (s)
        duration: Record length (s)
        seed: Seed of the realization, None for fresh entropy
        record_truth: Keep the quadrature trajectories
        tones: Calibration tones as (frequency Hz, phase-modulation depth)
        correlated_backaction: Correlate record noise with the backaction force
        feedback_gain: Fraction k of the feedback filter applied to the force
        max_samples: Sample cap, derived from available memory when None
    """

    params: SystemParams
    dt: float
    duration: float
    seed: Optional[int] = None
    record_truth: bool = False
    tones: Tuple[Tuple[float, float], ...] = ()
    correlated_backaction: bool = True
    feedback_gain: float = 0.0
    max_samples: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ConfigError("time step must be positive", key="sample_rate_hz")
        if not self.duration > 0:
            raise ConfigError("duration must be positive", key="duration_s")
        if self.feedback_gain != 0 and self.params.eta_d <= 0:
            raise ConfigError("feedback needs a nonzero detection efficiency", key="feedback_gain")
        object.__setattr__(self, "tones", tuple((float(f), float(d)) for f, d in self.tones))

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def offsets(self) -> np.ndarray:
        """Mode offsets Omega_i - Omega_m (rad/s)."""
        ref = self.params.defect.omega_m
        return np.array([m.omega_m - ref for m in self.params.modes])

    def sample_cap(self) -> int:
        if self.max_samples is not None:
            return int(self.max_samples)
        available = available_memory_bytes()
        if available is None:
            return DEFAULT_MAX_SAMPLES
        return int(available * MEMORY_FRACTION / BYTES_PER_SAMPLE)

    def check(self) -> None:
        """Validate the step bound and the memory cap.

        Raises:
            StepTooLarge: If dt * max|offset| >= 0.1
            ConfigError: If the record would exceed the memory cap
        """
        worst = float(np.max(np.abs(self.offsets))) * self.dt
        if worst >= MAX_ROTATION_STEP:
            raise StepTooLarge(
                f"dt * max|offset| = {worst:.3g} exceeds {MAX_ROTATION_STEP}",
                hint="raise the sample rate or drop far-detuned modes",
            )
        cap = self.sample_cap()
        if self.n_samples > cap:
            raise ConfigError(
                f"{self.n_samples} samples exceed the memory cap of {cap}",
                key="duration_s",
                hint="shorten the record or lower the sample rate",
            )


@dataclass
class MeasurementRecord:
    """Demodulated photocurrent record in shot-noise units.

    Attributes:
        i_x: In-phase channel
        i_y: Quadrature channel
        sample_rate: Samples per second (Hz)
        demod_frequency: Demodulation frequency (Hz)
        truth: Quadrature trajectories (n, 2 * n_modes) ordered X1, Y1, X2, ...
        meta: Provenance (seed, rates, offsets)
    """

    i_x: np.ndarray
    i_y: np.ndarray
    sample_rate: float
    demod_frequency: float = 0.0
    truth: Optional[np.ndarray] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.i_x = np.asarray(self.i_x, dtype=float)
        self.i_y = np.asarray(self.i_y, dtype=float)
        if self.i_x.shape != self.i_y.shape or self.i_x.ndim != 1:
            raise ConfigError("record channels must be one-dimensional and of equal length", key="i_x")
        if not self.sample_rate > 0:
            raise ConfigError("sample rate must be positive", key="sample_rate_hz")
        if self.truth is not None and self.truth.shape[0] != self.i_x.size:
            raise ConfigError("truth and record lengths differ", key="truth")

    @property
    def n(self) -> int:
        return int(self.i_x.size)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def iq(self) -> np.ndarray:
        return self.i_x + 1j * self.i_y

    @property
    def channels(self) -> np.ndarray:
        """Samples as an (n, 2) array."""
        return np.column_stack([self.i_x, self.i_y])


@dataclass
class CarrierRecord:
    """Real lab-frame photocurrent on a carrier."""

    samples: np.ndarray
    sample_rate: float
    carrier_frequency: float


# ============================================================================
# RATES
# ============================================================================


@dataclass(frozen=True)
class ModeRates:
    """Per-mode rates used by the simulator and the estimator (rad/s)."""

    offset: float
    gamma_total: float
    gamma_m: float
    gamma_th: float
    gamma_qba: float
    gamma_meas: float

    @property
    def diffusion(self) -> float:
        return self.gamma_th + 0.5 * self.gamma_m + self.gamma_qba


def mode_rates(params: SystemParams) -> List[ModeRates]:
    """Rates of every mode; backaction scales with the squared coupling weight."""
    qba = backaction_rate(params)
    ref = params.defect.omega_m
    rates = []
    for mode in params.modes:
        w2 = mode.coupling_weight**2
        rates.append(
            ModeRates(
                offset=mode.omega_m - ref,
                gamma_total=mode.gamma_total,
                gamma_m=mode.gamma_m,
                gamma_th=mode.gamma_th,
                gamma_qba=w2 * qba,
                gamma_meas=params.eta_d * w2 * qba,
            )
        )
    return rates


def detection_angle(params: SystemParams) -> float:
    """Angle phi of the detected quadrature relative to the uncorrelated one."""
    return params.theta - cavity_rotation(params.cavity) + 0.5 * math.pi


def _force_variance(params: SystemParams, feedback_gain: float) -> float:
    """Variance of the backaction force left after feedback with gain k."""
    k = feedback_gain
    if k == 0:
        return 1.0
    eta = params.eta_d
    return (1.0 - k) ** 2 + k * k * (1.0 - eta) / eta


def tone_amplitude(freq_hz: float, depth: float, g0: float) -> float:
    """Quadrature amplitude equivalent to phase modulation of the drive."""
    return depth * TWO_PI * freq_hz / (math.sqrt(2.0) * g0)


# ============================================================================
# SIMULATION
# ============================================================================


def _streams(seed: Optional[int]) -> Tuple[np.random.Generator, ...]:
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.Generator(np.random.Philox(child)) for child in children)


def simulate(config: TrajectoryConfig) -> MeasurementRecord:
    """Simulate one homodyne record.

    Raises:
        StepTooLarge: If the rotation step bound is violated
        ConfigError: If the record exceeds the memory cap
    """
    config.check()
    params = config.params
    n = config.n_samples
    dt = config.dt
    sq = math.sqrt(dt)
    thermal, backaction, imprecision = _streams(config.seed)
    rates = mode_rates(params)

    logger.info(
        "Simulating record",
        extra={
            "operation": "simulate",
            "n_modes": len(rates),
            "n_samples": n,
            "seed": config.seed,
        },
    )

    force = backaction.standard_normal((n, 2))
    extra = imprecision.standard_normal((n, 2))
    feedback = config.feedback_gain
    if feedback != 0:
        eta = params.eta_d
        applied = (1.0 - feedback) * force - feedback * math.sqrt((1.0 - eta) / eta) * imprecision.standard_normal(
            (n, 2)
        )
    else:
        applied = force

    force_var = _force_variance(params, feedback)
    phi = detection_angle(params)
    gain = 2.0 * math.cos(phi)
    i_x = np.zeros(n)
    i_y = np.zeros(n)
    truth = np.empty((n, 2 * len(rates))) if config.record_truth else None

    for k, r in enumerate(rates):
        p = np.exp(-1j * r.offset * dt) - 0.5 * r.gamma_total * dt
        d_free = r.gamma_th + 0.5 * r.gamma_m
        # Common backaction enters Y through f_x and X through f_y
        kick = math.sqrt(r.gamma_qba) * sq * (applied[:, 1] - 1j * applied[:, 0])
        w = math.sqrt(d_free) * sq * (thermal.standard_normal(n) + 1j * thermal.standard_normal(n)) + kick

        stationary = math.sqrt((d_free + force_var * r.gamma_qba) * dt / max(1.0 - abs(p) ** 2, 1e-300))
        z0 = stationary * (thermal.standard_normal() + 1j * thermal.standard_normal())
        z = np.empty(n, dtype=complex)
        z[0] = z0
        if n > 1:
            z[1:], _ = signal.lfilter([1.0], [1.0, -p], w[:-1], zi=[p * z0])

        scale = gain * math.sqrt(r.gamma_meas)
        i_x += scale * z.real
        i_y += scale * z.imag
        if truth is not None:
            truth[:, 2 * k] = z.real
            truth[:, 2 * k + 1] = z.imag

    if config.tones and params.coupling.g0 > 0:
        t = np.arange(n) * dt
        scale = gain * math.sqrt(rates[0].gamma_meas)
        for freq_hz, depth in config.tones:
            delta = TWO_PI * freq_hz - params.defect.omega_m
            tone = tone_amplitude(freq_hz, depth, params.coupling.g0) * np.exp(-1j * delta * t)
            i_x += scale * tone.real
            i_y += scale * tone.imag

    s = math.sin(phi)
    if config.correlated_backaction:
        corr = math.sqrt(params.eta_d) * s
        rest = math.sqrt(max(1.0 - params.eta_d * s * s, 0.0))
        i_x += (corr * force[:, 0] + rest * extra[:, 0]) / sq
        i_y += (corr * force[:, 1] + rest * extra[:, 1]) / sq
    else:
        i_x += extra[:, 0] / sq
        i_y += extra[:, 1] / sq

    meta = {
        "seed": config.seed,
        "offsets_rad_s": [r.offset for r in rates],
        "gamma_meas_rad_s": [r.gamma_meas for r in rates],
        "phi_rad": phi,
        "feedback_gain": feedback,
    }
    return MeasurementRecord(
        i_x=i_x,
        i_y=i_y,
        sample_rate=1.0 / dt,
        demod_frequency=params.defect.omega_m / TWO_PI,
        truth=truth,
        meta=meta,
    )


def simulate_ensemble(configs: Sequence[TrajectoryConfig], threads: int = 1) -> List[MeasurementRecord]:
    """Run independent realizations concurrently; output order follows configs."""
    if threads <= 1 or len(configs) <= 1:
        return [simulate(c) for c in configs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(simulate, configs))


def unconditional_covariance(params: SystemParams, feedback_gain: float = 0.0) -> np.ndarray:
    """Stationary covariance of all quadratures (X1, Y1, X2, ...) from the Lyapunov equation."""
    rates = mode_rates(params)
    size = 2 * len(rates)
    drift = np.zeros((size, size))
    b_free = np.zeros(size)
    b_force = np.zeros((size, 2))
    for k, r in enumerate(rates):
        drift[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = [
            [-0.5 * r.gamma_total, r.offset],
            [-r.offset, -0.5 * r.gamma_total],
        ]
        b_free[2 * k : 2 * k + 2] = math.sqrt(r.gamma_th + 0.5 * r.gamma_m)
        b_force[2 * k, 1] = math.sqrt(r.gamma_qba)
        b_force[2 * k + 1, 0] = -math.sqrt(r.gamma_qba)
    diffusion = np.diag(b_free**2) + _force_variance(params, feedback_gain) * b_force @ b_force.T
    return linalg.solve_continuous_lyapunov(drift, -diffusion)


# ============================================================================
# CLASSICAL CAVITY
# ============================================================================


def simulate_classical_cavity(
    trace: DetuningNoiseTrace,
    cav: CavityMode,
    drive: complex,
    coupling_rate: Optional[float] = None,
    return_field: bool = False,
):
    """Integrate a' = [i(detuning + dD(t)) - kappa/2] a + sqrt(kappa_in) a_in.

    Each step is exact for the detuning held at the midpoint of the two
    bracketing samples. The field starts at the unperturbed steady state.

    Args:
        trace: Detuning fluctuation samples; the step is trace.dt
        cav: Cavity mode
        drive: Input amplitude a_in
        coupling_rate: Input coupling, cav.kappa_in by default
        return_field: Return the complex field instead of |a|^2

    Raises:
        StepTooLarge: If dt * kappa >= 0.1
    """
    dt = trace.dt
    if dt * cav.kappa >= MAX_CAVITY_STEP:
        raise StepTooLarge(
            f"dt * kappa = {dt * cav.kappa:.3g} exceeds {MAX_CAVITY_STEP}",
            hint="sample the detuning trace faster",
        )
    rate = cav.kappa_in if coupling_rate is None else coupling_rate
    if not rate > 0:
        raise ConfigError("cavity has no input coupling to drive through", key="kappa_in_hz")
    source = math.sqrt(rate) * drive
    delta = np.real_if_close(np.asarray(trace.samples))
    mid = 0.5 * (delta[:-1] + delta[1:])
    lam = 1j * (cav.detuning + mid) - 0.5 * cav.kappa
    step = np.exp(lam * dt)
    forcing = (step - 1.0) / lam * source

    n = trace.n
    a = np.empty(n, dtype=complex)
    a[0] = source / (0.5 * cav.kappa - 1j * cav.detuning)
    # Closed-form recursion in chunks short enough that exp(-S) stays finite
    chunk = max(1, int(200.0 / (0.5 * cav.kappa * dt)))
    start = 0
    while start < n - 1:
        stop = min(start + chunk, n - 1)
        log_step = lam[start:stop] * dt
        s = np.concatenate(([0.0], np.cumsum(log_step)))
        acc = a[start] + np.cumsum(forcing[start:stop] * np.exp(-s[1:]))
        a[start + 1 : stop + 1] = np.exp(s[1:]) * acc
        start = stop

    logger.debug(
        "Classical cavity integrated",
        extra={"operation": "simulate_classical_cavity", "n_samples": n, "kappa_dt": dt * cav.kappa},
    )
    return a if return_field else np.abs(a) ** 2


# ============================================================================
# CARRIER SYNTHESIS
# ============================================================================


def synthesize_carrier(record: MeasurementRecord, carrier_hz: float, sample_rate: float) -> CarrierRecord:
    """Move an IQ record onto a real carrier s(t) = Re[(i_x + i i_y) exp(i w t)].

    Raises:
        ConfigError: If the carrier is not below the output Nyquist frequency
    """
    if not 0 < carrier_hz < 0.5 * sample_rate:
        raise ConfigError("carrier must lie below the Nyquist frequency", key="carrier_hz")
    ratio = Fraction(sample_rate / record.sample_rate).limit_denominator(1000)
    iq = record.iq
    if ratio != 1:
        iq = signal.resample_poly(iq, ratio.numerator, ratio.denominator)
    rate = record.sample_rate * ratio.numerator / ratio.denominator
    t = np.arange(iq.size) / rate
    samples = np.real(iq * np.exp(1j * TWO_PI * carrier_hz * t))
    return CarrierRecord(samples=samples, sample_rate=rate, carrier_frequency=carrier_hz)
