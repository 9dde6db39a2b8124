"""Multimode Kalman filtering of demodulated homodyne records.

The filter tracks the quadrature means r = (X1, Y1, X2, Y2, ...) of all modes
in the frame rotating at the defect frequency. Per record sample

    r[n+1] = (I + A' dt) r[n] + 2 C H (i[n] dt - 2 H^T r[n] dt)

and the covariance C follows the Riccati equation

    dC/dt = A C + C A^T + D - 4 C H H^T C

propagated exactly, starting from the unconditional covariance. Each of the
cov_oversample substeps per sample applies the matrix-fraction solution
C -> (P21 + P22 C)(P11 + P12 C)^-1 with P = expm(Hamiltonian * dt_c), which
stays stable when the closed-loop rates exceed 1 / dt_c. Once C stops
changing (relative change below STEADY_STATE_RTOL) the filter is linear
time-invariant and the remaining record is processed with one first-order
recursion per eigenvector of the update matrix (scipy.signal.lfilter).

DISCRETIZATION COMPENSATION:
============================
The mean update uses the modified drift

    Gamma'_i -> Gamma'_i + 2 (1 - cos(d_i dt)) / dt
    d_i      -> sin(d_i dt) / dt

so that I + A' dt = exp(-i d_i dt) - Gamma'_i dt / 2 on z_i = X_i + i Y_i, with
the unmodified Gamma'_i on the right. This is the discrete map the simulator
produces. The covariance uses the physical drift.

RETRODICTION:
=============
filter_retrodict() runs the same update on the reversed record with every
offset negated and re-reverses the output. The retrodicted mean at index k
depends on samples k+1 .. N-1 only, the predicted mean on samples 0 .. k-1.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy import linalg, signal, stats

from config.constants import (
    COV_OVERSAMPLE,
    DIVERGENCE_FACTOR,
    EIGEN_CONDITION_LIMIT,
    MIN_SLICES,
    STEADY_STATE_RTOL,
)

from .errors import ConfigError, ConvergenceWarning, DivergenceDetected, InsufficientSlices, NonConvergent
from .model_core import SystemParams
from .simulator import MeasurementRecord, detection_angle, mode_rates

logger = logging.getLogger(__name__)

# ============================================================================
# TYPES
# ============================================================================


def symplectic_form(n_modes: int) -> np.ndarray:
    """Block-diagonal symplectic form for the (X1, Y1, X2, Y2, ...) ordering."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True)
class GaussianState:
    """Quadrature means and symmetric covariance in vacuum units (variance 1/2).

    Raises:
        ConfigError: If the covariance is not symmetric to 1e-12
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        cov = np.asarray(self.cov, dtype=float)
        mean = np.asarray(self.mean, dtype=float)
        if cov.shape != (mean.size, mean.size) or mean.size % 2:
            raise ConfigError("covariance must be 2N x 2N matching the mean", key="cov")
        scale = max(float(np.max(np.abs(cov))), 1e-300)
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise ConfigError("covariance is not symmetric", key="cov")
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))
        object.__setattr__(self, "mean", mean)

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    def is_physical(self, tol: float = 1e-9) -> bool:
        """Check C + i Omega / 2 >= 0 and diagonal entries >= 1/2."""
        omega = symplectic_form(self.n_modes)
        lowest = float(np.min(np.linalg.eigvalsh(self.cov + 0.5j * omega)))
        return lowest >= -tol and bool(np.all(np.diag(self.cov) >= 0.5 * (1.0 - tol)))


@dataclass(frozen=True)
class FilterModel:
    """Rates per mode (rad/s) and discretization settings of the filter.

    Attributes:
        offsets: Omega_i - Omega_m
        gamma_total: Gamma'_i = Gamma_m + Gamma_opt
        gamma_m: Intrinsic damping (zero-point diffusion Gamma_m / 2)
        gamma_th: Thermal decoherence rates
        gamma_qba: Backaction rates; the force is common to all modes
        gamma_meas: Measurement rates
        dt: Record sample interval (s)
        cov_oversample: Covariance substeps per sample
        discretization_compensation: Use the compensated drift in the mean update
        readout_gain: cos(phi) of the detected quadrature
    """

    offsets: np.ndarray
    gamma_total: np.ndarray
    gamma_m: np.ndarray
    gamma_th: np.ndarray
    gamma_qba: np.ndarray
    gamma_meas: np.ndarray
    dt: float
    cov_oversample: int = COV_OVERSAMPLE
    discretization_compensation: bool = True
    readout_gain: float = 1.0

    def __post_init__(self) -> None:
        arrays = {}
        for name in ("offsets", "gamma_total", "gamma_m", "gamma_th", "gamma_qba", "gamma_meas"):
            arrays[name] = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arrays[name])
        sizes = {a.size for a in arrays.values()}
        if len(sizes) != 1:
            raise ConfigError("per-mode rate arrays must have equal length", key="modes")
        for name in ("gamma_total", "gamma_m", "gamma_th", "gamma_qba", "gamma_meas"):
            if np.any(arrays[name] < 0):
                raise ConfigError(f"{name} must be nonnegative", key=name)
        if not self.dt > 0:
            raise ConfigError("sample interval must be positive", key="dt")
        if self.cov_oversample < 1:
            raise ConfigError("cov_oversample must be at least 1", key="cov_oversample")

    @classmethod
    def from_params(
        cls,
        params: SystemParams,
        dt: float,
        modes: Optional[Sequence[int]] = None,
        cov_oversample: int = COV_OVERSAMPLE,
        discretization_compensation: bool = True,
    ) -> "FilterModel":
        """Filter matched to the simulator for the selected mode indices."""
        rates = mode_rates(params)
        if modes is not None:
            rates = [rates[k] for k in modes]
        return cls(
            offsets=[r.offset for r in rates],
            gamma_total=[r.gamma_total for r in rates],
            gamma_m=[r.gamma_m for r in rates],
            gamma_th=[r.gamma_th for r in rates],
            gamma_qba=[r.gamma_qba for r in rates],
            gamma_meas=[r.gamma_meas for r in rates],
            dt=dt,
            cov_oversample=cov_oversample,
            discretization_compensation=discretization_compensation,
            readout_gain=math.cos(detection_angle(params)),
        )

    @property
    def n_modes(self) -> int:
        return int(self.offsets.size)

    @property
    def size(self) -> int:
        return 2 * self.n_modes

    def single_mode(self, index: int = 0) -> "FilterModel":
        pick = [index]
        return replace(
            self,
            offsets=self.offsets[pick],
            gamma_total=self.gamma_total[pick],
            gamma_m=self.gamma_m[pick],
            gamma_th=self.gamma_th[pick],
            gamma_qba=self.gamma_qba[pick],
            gamma_meas=self.gamma_meas[pick],
        )

    def reversed(self) -> "FilterModel":
        return replace(self, offsets=-self.offsets)

    def with_dt(self, dt: float) -> "FilterModel":
        return replace(self, dt=dt)

    def drift(self, compensated: bool = False) -> np.ndarray:
        damping = self.gamma_total.copy()
        rotation = self.offsets.copy()
        if compensated:
            phase = self.offsets * self.dt
            damping = damping + 2.0 * (1.0 - np.cos(phase)) / self.dt
            rotation = np.sin(phase) / self.dt
        a = np.zeros((self.size, self.size))
        for k in range(self.n_modes):
            a[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = [
                [-0.5 * damping[k], rotation[k]],
                [-rotation[k], -0.5 * damping[k]],
            ]
        return a

    def diffusion(self) -> np.ndarray:
        free = np.repeat(self.gamma_th + 0.5 * self.gamma_m, 2)
        # Backaction force pair (f_x, f_y): X_i picks up f_y, Y_i picks up -f_x
        b = np.zeros((self.size, 2))
        root = np.sqrt(self.gamma_qba)
        b[0::2, 1] = root
        b[1::2, 0] = -root
        return np.diag(free) + b @ b.T

    def measurement(self) -> np.ndarray:
        """H with columns for the i_x and i_y channels."""
        h = np.zeros((self.size, 2))
        root = self.readout_gain * np.sqrt(self.gamma_meas)
        h[0::2, 0] = root
        h[1::2, 1] = root
        return h

    def mean_drift(self) -> np.ndarray:
        return self.drift(compensated=self.discretization_compensation)


@dataclass
class FilterResult:
    """Output of a prediction or retrodiction run.

    Attributes:
        means: Mean estimates, shape (n, 2N)
        innovations: Normalized innovations (unit variance), shape (n, 2)
        covariance: Steady-state covariance (last covariance if not converged)
        converged_at: First forward-time step index with a converged covariance
        cov_history: Covariances before convergence, in processing order
        retrodicted: True for time-reversed runs (indices refer to forward time)
    """

    means: np.ndarray
    innovations: np.ndarray
    covariance: np.ndarray
    converged_at: Optional[int]
    cov_history: List[np.ndarray] = field(default_factory=list)
    retrodicted: bool = False

    @property
    def n(self) -> int:
        return int(self.means.shape[0])

    def covariance_at(self, k: int) -> np.ndarray:
        step = self.n - 1 - k if self.retrodicted else k
        if step < len(self.cov_history):
            return self.cov_history[step]
        return self.covariance

    def state(self, k: int) -> GaussianState:
        return GaussianState(mean=self.means[k], cov=self.covariance_at(k))


# ============================================================================
# COVARIANCE PROPAGATION
# ============================================================================


def unconditional_covariance(model: FilterModel) -> np.ndarray:
    """Stationary covariance without measurement (Lyapunov solution)."""
    return linalg.solve_continuous_lyapunov(model.drift(), -model.diffusion())


def riccati_transition(model: FilterModel, dt: float) -> np.ndarray:
    """expm of the Riccati Hamiltonian [[-A^T, 4 H H^T], [D, A]] over dt.

    With [X; Y] advanced by this matrix, C = Y X^-1 solves
    dC/dt = A C + C A^T + D - 4 C H H^T C exactly.
    """
    a = model.drift()
    h = model.measurement()
    hamiltonian = np.block([[-a.T, 4.0 * h @ h.T], [model.diffusion(), a]])
    return linalg.expm(hamiltonian * dt)


class _CovariancePropagator:
    """Matrix-fraction propagation of the Riccati equation."""

    def __init__(self, model: FilterModel, rtol: float = STEADY_STATE_RTOL):
        size = model.size
        phi = riccati_transition(model, model.dt / model.cov_oversample)
        self.p11 = phi[:size, :size]
        self.p12 = phi[:size, size:]
        self.p21 = phi[size:, :size]
        self.p22 = phi[size:, size:]
        self.substeps = model.cov_oversample
        self.rtol = rtol
        self.prior = unconditional_covariance(model)
        self.limit = DIVERGENCE_FACTOR * np.diag(self.prior)
        self.c = self.prior.copy()

    def _substep(self, c: np.ndarray) -> np.ndarray:
        numerator = self.p21 + self.p22 @ c
        denominator = self.p11 + self.p12 @ c
        # C = N D^-1, solved as D^T C^T = N^T
        c = np.linalg.solve(denominator.T, numerator.T).T
        return 0.5 * (c + c.T)

    def step(self) -> float:
        """Advance one record sample; returns the relative change."""
        previous = self.c
        c = previous
        for _ in range(self.substeps):
            c = self._substep(c)
        if np.any(np.diag(c) > self.limit) or not np.all(np.isfinite(c)):
            raise DivergenceDetected(
                "filter covariance exceeds ten times the unconditional variance",
                hint="reduce dt or cov_oversample step size",
            )
        self.c = c
        return float(np.linalg.norm(c - previous) / max(np.linalg.norm(previous), 1e-300))


def riccati_steady_state(model: FilterModel, method: str = "propagate", max_steps: int = 1_000_000) -> np.ndarray:
    """Fixed point of the filter covariance.

    Args:
        model: Filter model
        method: "propagate" (matrix-fraction steps until converged) or "algebraic"
            (scipy.linalg.solve_continuous_are)
        max_steps: Sample steps allowed for propagation

    Raises:
        NonConvergent: If propagation does not converge within max_steps
    """
    if method == "algebraic":
        h = model.measurement()
        if not np.any(h):
            return unconditional_covariance(model)
        c = linalg.solve_continuous_are(model.drift().T, 2.0 * h, model.diffusion(), np.eye(2))
        return 0.5 * (c + c.T)
    if method != "propagate":
        raise ConfigError(f"unknown method {method!r}", key="method")
    prop = _CovariancePropagator(model)
    for _ in range(max_steps):
        if prop.step() < prop.rtol:
            return prop.c
    raise NonConvergent(f"covariance did not converge in {max_steps} steps")


def steady_state_single_mode(gamma_total: float, gamma_th: float, gamma_qba: float, gamma_meas: float) -> float:
    """Conditional variance [-G' + sqrt(G'^2 + 16 Gmeas (Gth + Gqba))] / (8 Gmeas).

    Zero-point diffusion Gamma_m / 2 is neglected.
    """
    if not gamma_meas > 0:
        raise ConfigError("measurement rate must be positive", key="gamma_meas")
    total = gamma_th + gamma_qba
    return (-gamma_total + math.sqrt(gamma_total**2 + 16.0 * gamma_meas * total)) / (8.0 * gamma_meas)


# ============================================================================
# FILTERING
# ============================================================================


def _run_lti(f: np.ndarray, g: np.ndarray, r0: np.ndarray, currents: np.ndarray) -> np.ndarray:
    """r[k+1] = F r[k] + G i[k] for all k; returns r[0 .. n-1]."""
    n = currents.shape[0]
    out = np.empty((n, r0.size))
    out[0] = r0
    if n == 1:
        return out
    eigvals, vecs = np.linalg.eig(f)
    if np.linalg.cond(vecs) > EIGEN_CONDITION_LIMIT:
        r = r0.copy()
        for k in range(n - 1):
            r = f @ r + g @ currents[k]
            out[k + 1] = r
        return out
    inv = np.linalg.inv(vecs)
    drive = currents[:-1] @ (inv @ g).T
    s0 = inv @ r0
    modal = np.empty((n - 1, r0.size), dtype=complex)
    for j, lam in enumerate(eigvals):
        modal[:, j], _ = signal.lfilter([1.0], [1.0, -lam], drive[:, j], zi=[lam * s0[j]])
    out[1:] = (modal @ vecs.T).real
    return out


def _run_filter(currents: np.ndarray, model: FilterModel) -> FilterResult:
    n = currents.shape[0]
    size = model.size
    dt = model.dt
    h = model.measurement()
    step_matrix = np.eye(size) + model.mean_drift() * dt
    prop = _CovariancePropagator(model)

    means = np.zeros((n, size))
    history: List[np.ndarray] = []
    r = np.zeros(size)
    converged_at = None
    k = 0
    while k < n:
        c = prop.c
        history.append(c)
        means[k] = r
        if k == n - 1:
            break
        ch = c @ h
        r = step_matrix @ r + 2.0 * ch @ (currents[k] * dt - 2.0 * h.T @ r * dt)
        change = prop.step()
        k += 1
        if change < prop.rtol:
            converged_at = k
            break

    if converged_at is not None:
        c = prop.c
        f = step_matrix - 4.0 * c @ h @ h.T * dt
        g = 2.0 * c @ h * dt
        means[converged_at:] = _run_lti(f, g, r, currents[converged_at:])
    else:
        message = f"filter covariance not converged after {n} samples"
        logger.warning(message, extra={"operation": "filter", "n_samples": n})
        warnings.warn(message, ConvergenceWarning, stacklevel=3)

    innovations = (currents - 2.0 * means @ h) * math.sqrt(dt)
    return FilterResult(
        means=means,
        innovations=innovations,
        covariance=prop.c,
        converged_at=converged_at,
        cov_history=history,
    )


def _currents(record: MeasurementRecord, model: FilterModel) -> np.ndarray:
    if abs(record.dt - model.dt) > 1e-9 * model.dt:
        raise ConfigError(
            f"record sample interval {record.dt:.6g} s differs from the model's {model.dt:.6g} s",
            key="dt",
        )
    return record.channels


def filter_predict(record: MeasurementRecord, model: FilterModel) -> FilterResult:
    """Causal estimate of all quadratures.

    Raises:
        DivergenceDetected: If the covariance leaves ten times the unconditional level
    """
    logger.info(
        "Running prediction filter",
        extra={"operation": "filter_predict", "n_modes": model.n_modes, "n_samples": record.n},
    )
    return _run_filter(_currents(record, model), model)


def filter_retrodict(record: MeasurementRecord, model: FilterModel) -> FilterResult:
    """Anti-causal estimate from the time-reversed record with negated offsets."""
    logger.info(
        "Running retrodiction filter",
        extra={"operation": "filter_retrodict", "n_modes": model.n_modes, "n_samples": record.n},
    )
    result = _run_filter(_currents(record, model)[::-1], model.reversed())
    converged = None if result.converged_at is None else record.n - 1 - result.converged_at
    return FilterResult(
        means=result.means[::-1].copy(),
        innovations=result.innovations[::-1].copy(),
        covariance=result.covariance,
        converged_at=converged,
        cov_history=result.cov_history,
        retrodicted=True,
    )


# ============================================================================
# RECONSTRUCTION
# ============================================================================


@dataclass(frozen=True)
class CovarianceReconstruction:
    """Covariance from prediction-retrodiction differences.

    Attributes:
        cov: 1/2 <(r_r - r_p)(r_r - r_p)^T> over the conditioning instants
        stderr: Standard error of every entry
        n_slices: Number of conditioning instants
        instants: Sample indices used
        verification_variance: <|r_r - r_p|^2> / 4 of the first mode
        conditioned: False when no variance dropped below 0.9 of unconditional
    """

    cov: np.ndarray
    stderr: np.ndarray
    n_slices: int
    instants: np.ndarray
    verification_variance: float
    conditioned: bool = True


def slice_instants(n: int, dt: float, predict_window_s: float, retrodict_window_s: float, guard_s: float) -> np.ndarray:
    predict = int(round(predict_window_s / dt))
    retro = int(round(retrodict_window_s / dt))
    guard = int(round(guard_s / dt))
    spacing = max(predict + retro + guard, 1)
    return np.arange(predict, n - retro, spacing)


def reconstruct_covariance(
    pred: FilterResult,
    retro: FilterResult,
    dt: float,
    predict_window_s: float,
    retrodict_window_s: float,
    guard_s: float,
    unconditional: Optional[np.ndarray] = None,
) -> CovarianceReconstruction:
    """Average the prediction-retrodiction mismatch over separated instants.

    Raises:
        InsufficientSlices: If fewer than MIN_SLICES instants fit in the record
    """
    if pred.means.shape != retro.means.shape:
        raise ConfigError("prediction and retrodiction series are not aligned", key="retro")
    instants = slice_instants(pred.n, dt, predict_window_s, retrodict_window_s, guard_s)
    if instants.size < MIN_SLICES:
        raise InsufficientSlices(
            f"only {instants.size} slices fit in the record, {MIN_SLICES} needed",
            hint="record longer or shorten the prediction/retrodiction windows",
        )
    delta = retro.means[instants] - pred.means[instants]
    outer = delta[:, :, None] * delta[:, None, :]
    cov = 0.5 * outer.mean(axis=0)
    stderr = 0.5 * outer.std(axis=0, ddof=1) / math.sqrt(instants.size)
    verification = float(np.mean(np.sum(delta[:, :2] ** 2, axis=1)) / 4.0)

    conditioned = True
    if unconditional is not None:
        ratio = np.diag(cov) / np.diag(unconditional)
        if np.all(ratio >= 0.9):
            conditioned = False
            message = "reconstructed variances are at the unconditional level; the record carries no information"
            logger.warning(message, extra={"operation": "reconstruct_covariance", "n_slices": int(instants.size)})
            warnings.warn(message, ConvergenceWarning, stacklevel=2)
    logger.info(
        "Covariance reconstructed",
        extra={"operation": "reconstruct_covariance", "n_slices": int(instants.size)},
    )
    return CovarianceReconstruction(
        cov=cov,
        stderr=stderr,
        n_slices=int(instants.size),
        instants=instants,
        verification_variance=verification,
        conditioned=conditioned,
    )


def retrodiction_parity(n_modes: int) -> np.ndarray:
    """P = diag(1, -1, 1, -1, ...); steady C_retro = P C_pred P."""
    return np.diag(np.tile([1.0, -1.0], n_modes))


def expected_reconstruction(model: FilterModel) -> np.ndarray:
    """Mean of the reconstruction for a matched model: (C_p + P C_p P) / 2."""
    c = riccati_steady_state(model, method="algebraic")
    p = retrodiction_parity(model.n_modes)
    return 0.5 * (c + p @ c @ p)


# ============================================================================
# FIGURES OF MERIT
# ============================================================================


def conditional_occupancies(cov: np.ndarray) -> np.ndarray:
    """Per-mode occupancy (C_XX + C_YY) / 2 - 1/2."""
    diag = np.diag(np.asarray(cov))
    return 0.5 * (diag[0::2] + diag[1::2]) - 0.5


def correlation_matrix(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov)
    scale = np.sqrt(np.diag(cov))
    return cov / np.outer(scale, scale)


def purity(occupancy: float) -> float:
    """Purity 1 / (2n + 1) of a thermal state."""
    if occupancy < 0:
        raise ConfigError("occupancy must be nonnegative", key="occupancy")
    return 1.0 / (2.0 * occupancy + 1.0)


@dataclass(frozen=True)
class WhitenessResult:
    statistic: float
    p_value: float
    lags: int

    def passes(self, level: float = 0.05) -> bool:
        return self.p_value >= level


def innovation_whiteness(innovations: np.ndarray, lags: int = 20) -> WhitenessResult:
    """Ljung-Box test summed over innovation channels."""
    x = np.asarray(innovations, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n <= lags + 1:
        raise ConfigError("innovation sequence shorter than the number of lags", key="lags")
    statistic = 0.0
    for column in x.T:
        c = column - column.mean()
        denom = float(c @ c)
        for k in range(1, lags + 1):
            rho = float(c[k:] @ c[:-k]) / denom
            statistic += rho * rho / (n - k)
    statistic *= n * (n + 2)
    dof = lags * x.shape[1]
    return WhitenessResult(statistic=statistic, p_value=float(stats.chi2.sf(statistic, dof)), lags=lags)


def filter_response(model: FilterModel, freqs_hz) -> np.ndarray:
    """Transfer function from the record to the stationary estimate.

    Returns:
        Complex array (n_freq, 2N, 2): (i w - A + 4 C H H^T)^-1 2 C H
        for time dependence exp(i w t)
    """
    c = riccati_steady_state(model, method="algebraic")
    h = model.measurement()
    closed = model.drift() - 4.0 * c @ h @ h.T
    gain = 2.0 * c @ h
    eye = np.eye(model.size)
    omegas = 2.0 * math.pi * np.atleast_1d(np.asarray(freqs_hz, dtype=float))
    return np.array([np.linalg.solve(1j * w * eye - closed, gain) for w in omegas])


def discrete_error_covariance(
    model: FilterModel,
    gain_scale: float = 1.0,
    gain: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Stationary error covariance of the sampled filter on the sampled system.

    The truth advances by the exact rotation with additive damping and noise
    D dt; the record is i dt = 2 H^T x dt + dW. The filter uses the model's
    mean drift and the gain 2 C H (scaled by gain_scale, or replaced by gain).
    """
    dt = model.dt
    size = model.size
    h = model.measurement()
    c = riccati_steady_state(model, method="algebraic")
    k = gain_scale * (c @ h) if gain is None else np.asarray(gain)
    truth = np.eye(size) + model.drift(compensated=True) * dt
    filt = np.eye(size) + model.mean_drift() * dt
    q = model.diffusion() * dt

    augmented = np.block(
        [
            [truth, np.zeros((size, size))],
            [truth - filt, filt - 4.0 * k @ h.T * dt],
        ]
    )
    noise = np.block([[q, q], [q, q + 4.0 * k @ k.T * dt]])
    sigma = linalg.solve_discrete_lyapunov(augmented, noise)
    err = sigma[size:, size:]
    return 0.5 * (err + err.T)
