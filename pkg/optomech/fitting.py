"""Weighted least-squares fits of noise spectra.

fit_spectrum() adjusts the field-enhanced coupling g, the detection efficiency
eta_d, the quadrature angle theta and, optionally, a set of spurious
cavity-frequency-noise Lorentzians until model_core.detected_spectrum()
matches a measured PSD. fit_lorentzian() is the plain peak fit used by the
g0 calibration and the cooling analysis.

PARAMETERIZATION:
=================
The optimizer works on an unconstrained vector:

    g        -> log g
    eta_d    -> logit (eta_d / c), c = kappa_out / kappa
    theta    -> theta
    spurious -> (center_hz, log width_hz, log area) per Lorentzian

so positivity and the (0, c) range of eta_d hold without bound handling. eta_d
includes the cavity output coupling c, so the fitted quantity is really the
post-cavity efficiency eta_d / c.
Uncertainties are propagated back to physical units to first order.

JACOBIAN:
=========
The eta_d and theta columns are analytic: with S the detected spectrum,
dS/du = (S - 1)(1 - eta_d / c), and dS/dtheta follows from the
theta-derivatives of the detected-quadrature susceptibilities. All other
columns use central differences with step max(FD_REL_STEP |p|, FD_ABS_STEP).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from config.constants import (
    FD_ABS_STEP,
    FD_REL_STEP,
    FIT_FTOL,
    FIT_MAX_NFEV,
    FIT_XTOL,
    INITIAL_ETA_D,
    MAX_SPURIOUS_MODES,
    MIN_POINTS_PER_PARAMETER,
    SINGULAR_CONDITION,
    TWO_PI,
)

from .errors import ConfigError, NoConvergence, PeakNotFound, SingularJacobian
from .model_core import (
    CHANNELS,
    Lorentzian,
    SpuriousNoise,
    SystemParams,
    derived_rates,
    detected_spectrum,
    post_cavity_efficiency,
    spurious_detuning_noise,
    susceptibility_chain,
    theta_derivatives,
    thermal_force_spectrum,
)

logger = logging.getLogger(__name__)

FREE_PARAMETERS = ("g", "eta_d", "theta")
SPURIOUS_FIELDS = ("center_hz", "width_hz", "area")

# ============================================================================
# LORENTZIAN PEAK FIT
# ============================================================================


@dataclass(frozen=True)
class LorentzianFit:
    """Single Lorentzian plus flat background.

    model(f) = offset + area (w / 2 pi) / ((f - f0)^2 + (w / 2)^2)

    Attributes:
        center_hz: f0
        width_hz: Full width at half maximum w
        area: Integral of the peak over f (PSD units times Hz)
        offset: Flat background
        stderr: One-sigma errors keyed by attribute name
    """

    center_hz: float
    width_hz: float
    area: float
    offset: float
    stderr: Dict[str, float] = field(default_factory=dict)

    def __call__(self, freqs_hz) -> np.ndarray:
        f = np.asarray(freqs_hz, dtype=float)
        half = 0.5 * self.width_hz
        return self.offset + self.area * (half / math.pi) / ((f - self.center_hz) ** 2 + half * half)


def _lorentz(x, f):
    center, log_width, area, offset = x
    half = 0.5 * math.exp(log_width)
    return offset + area * (half / math.pi) / ((f - center) ** 2 + half * half)


def fit_lorentzian(freqs_hz, psd, band: Tuple[float, float], weights=None) -> LorentzianFit:
    """Fit one Lorentzian peak inside a frequency band.

    Args:
        freqs_hz: Frequency axis (Hz)
        psd: Spectrum values
        band: (lo, hi) band in Hz holding the peak
        weights: Optional per-point weights; uniform by default, which keeps
            the fit unbiased for Welch estimates

    Raises:
        PeakNotFound: If the band holds too few points, no peak, or the fit fails
    """
    freqs = np.asarray(freqs_hz, dtype=float)
    values = np.asarray(psd, dtype=float)
    mask = (freqs >= band[0]) & (freqs <= band[1])
    f, y = freqs[mask], values[mask]
    if f.size < 8:
        raise PeakNotFound(f"band ({band[0]:g}, {band[1]:g}) Hz holds {f.size} points")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)[mask]
    root = np.sqrt(w)

    edge = max(f.size // 10, 1)
    offset0 = float(np.median(np.concatenate([y[:edge], y[-edge:]])))
    k = int(np.argmax(y))
    height = float(y[k] - offset0)
    df = float(f[1] - f[0])
    area0 = float(np.sum(np.clip(y - offset0, 0.0, None)) * df)
    if not height > 0 or not area0 > 0:
        raise PeakNotFound(f"no peak above the background in ({band[0]:g}, {band[1]:g}) Hz")
    width0 = max(2.0 * area0 / (math.pi * height), 2.0 * df)
    scale = max(abs(height), abs(offset0), 1e-300)
    x0 = np.array([f[k], math.log(width0), area0, offset0])

    def residuals(x):
        return root * (_lorentz(x, f) - y) / scale

    try:
        result = least_squares(residuals, x0, method="lm", x_scale=np.array([df, 1.0, area0, scale]), max_nfev=4000)
    except (ValueError, FloatingPointError) as exc:
        raise PeakNotFound(f"Lorentzian fit failed: {exc}") from exc
    center, log_width, area, offset = result.x
    if result.status <= 0 or not area > 0 or not band[0] <= center <= band[1]:
        raise PeakNotFound(
            f"Lorentzian fit did not converge inside ({band[0]:g}, {band[1]:g}) Hz",
            hint="widen the band or check that the peak is resolved",
        )
    stderr: Dict[str, float] = {}
    dof = f.size - 4
    jtj = result.jac.T @ result.jac
    if dof > 0 and np.linalg.cond(jtj) < SINGULAR_CONDITION:
        cov = np.linalg.inv(jtj) * (2.0 * result.cost / dof)
        sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        width = math.exp(log_width)
        stderr = {"center_hz": sig[0], "width_hz": width * sig[1], "area": sig[2], "offset": sig[3]}
    return LorentzianFit(
        center_hz=float(center),
        width_hz=float(math.exp(log_width)),
        area=float(area),
        offset=float(offset),
        stderr={k: float(v) for k, v in stderr.items()},
    )


# ============================================================================
# SPECTRAL FIT PROBLEM
# ============================================================================


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _expit(u: float) -> float:
    return 1.0 / (1.0 + math.exp(-u))


@dataclass(frozen=True)
class FitProblem:
    """A PSD and the model parameters to adjust.

    Attributes:
        freqs_hz: Lab-frame frequencies of the PSD points
        psd: Spectrum in shot-noise units
        params: Starting values of the free parameters and the fixed rest
        free: Subset of FREE_PARAMETERS to adjust
        weights: Per-point weights, default 1 / psd^2
        spurious: Starting Lorentzians that are fitted and replace the
            params' explicit Lorentzians (the white floor stays)
        bounds: Optional (lo, hi) physical bounds per free name, checked on
            the result
    """

    freqs_hz: np.ndarray
    psd: np.ndarray
    params: SystemParams
    free: Tuple[str, ...] = FREE_PARAMETERS
    weights: Optional[np.ndarray] = None
    spurious: Tuple[Lorentzian, ...] = ()
    bounds: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        freqs = np.asarray(self.freqs_hz, dtype=float)
        psd = np.asarray(self.psd, dtype=float)
        object.__setattr__(self, "freqs_hz", freqs)
        object.__setattr__(self, "psd", psd)
        object.__setattr__(self, "free", tuple(self.free))
        object.__setattr__(self, "spurious", tuple(self.spurious))
        if freqs.shape != psd.shape or freqs.ndim != 1:
            raise ConfigError("frequency and PSD columns must be equally long vectors", key="psd")
        unknown = set(self.free) - set(FREE_PARAMETERS)
        if unknown:
            raise ConfigError(f"unknown free parameters {sorted(unknown)}", key="free")
        if len(set(self.free)) != len(self.free):
            raise ConfigError("free parameters must be unique", key="free")
        if len(self.spurious) > MAX_SPURIOUS_MODES:
            raise ConfigError(
                f"{len(self.spurious)} spurious modes exceed the cap of {MAX_SPURIOUS_MODES}", key="spurious_modes"
            )
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != psd.shape or np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise ConfigError("weights must be positive, finite and one per point", key="weight")
            object.__setattr__(self, "weights", w)
        elif np.any(psd <= 0):
            raise ConfigError("default 1/PSD^2 weights need a positive PSD", key="psd")
        if self.n_free == 0:
            raise ConfigError("nothing to fit", key="free")
        if psd.size < MIN_POINTS_PER_PARAMETER * self.n_free:
            raise ConfigError(
                f"{psd.size} points for {self.n_free} parameters",
                key="band_hz",
                hint=f"at least {MIN_POINTS_PER_PARAMETER} points per free parameter are needed",
            )
        for name, (lo, hi) in self.bounds.items():
            if name not in self.free or not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigError(f"invalid bounds for {name!r}", key="bounds")

    @property
    def n_free(self) -> int:
        return len(self.free) + len(SPURIOUS_FIELDS) * len(self.spurious)

    @property
    def fixed(self) -> Tuple[str, ...]:
        return tuple(name for name in FREE_PARAMETERS if name not in self.free)

    @property
    def parameter_names(self) -> List[str]:
        names = list(self.free)
        for i in range(len(self.spurious)):
            names += [f"spurious{i}.{f}" for f in SPURIOUS_FIELDS]
        return names

    @property
    def weight_vector(self) -> np.ndarray:
        return self.weights if self.weights is not None else 1.0 / self.psd**2

    @property
    def omega(self) -> np.ndarray:
        return TWO_PI * self.freqs_hz

    def with_weights(self, weights) -> "FitProblem":
        return FitProblem(self.freqs_hz, self.psd, self.params, self.free, weights, self.spurious, dict(self.bounds))

    def with_params(self, params: SystemParams) -> "FitProblem":
        return FitProblem(self.freqs_hz, self.psd, params, self.free, self.weights, self.spurious, dict(self.bounds))

    def to_vector(self, params: Optional[SystemParams] = None, spurious: Optional[Sequence[Lorentzian]] = None) -> np.ndarray:
        params = self.params if params is None else params
        spurious = self.spurious if spurious is None else spurious
        x = []
        for name in self.free:
            if name == "g":
                if not params.coupling.g > 0:
                    raise ConfigError("a fit of g needs a positive starting value", key="g_hz")
                x.append(math.log(params.coupling.g))
            elif name == "eta_d":
                ceiling = params.cavity.output_efficiency
                if not 0 < params.eta_d < ceiling:
                    raise ConfigError(
                        f"a fit of eta_d needs a start inside (0, {ceiling:.4g})",
                        key="eta_d",
                        hint="eta_d includes the output coupling kappa_out / kappa",
                    )
                x.append(_logit(params.eta_d / ceiling))
            else:
                x.append(params.theta)
        for term in spurious:
            x += [term.center / TWO_PI, math.log(term.width / TWO_PI), math.log(term.area)]
        return np.array(x, dtype=float)

    def from_vector(self, x) -> SystemParams:
        x = np.asarray(x, dtype=float)
        params = self.params
        changes = {}
        for i, name in enumerate(self.free):
            if name == "g":
                params = params.with_g(math.exp(x[i]))
            elif name == "eta_d":
                changes["eta_d"] = params.cavity.output_efficiency * _expit(x[i])
            else:
                changes["theta"] = float(x[i])
        if self.spurious:
            base = len(self.free)
            terms = []
            for j in range(len(self.spurious)):
                c, lw, la = x[base + 3 * j : base + 3 * j + 3]
                terms.append(Lorentzian(center=TWO_PI * c, width=TWO_PI * math.exp(lw), area=math.exp(la)))
            floor = params.classical_detuning_noise.white_floor
            changes["classical_detuning_noise"] = SpuriousNoise(lorentzians=tuple(terms), white_floor=floor)
        return params.replace(**changes) if changes else params

    def model(self, x) -> np.ndarray:
        return detected_spectrum(self.from_vector(x), self.omega)

    def residuals(self, x) -> np.ndarray:
        return np.sqrt(self.weight_vector) * (self.model(x) - self.psd)

    def cost(self, x) -> float:
        r = self.residuals(x)
        return 0.5 * float(r @ r)


# ============================================================================
# JACOBIAN
# ============================================================================


def _theta_sensitivity(params: SystemParams, omega: np.ndarray) -> np.ndarray:
    """dS/dtheta of the detected spectrum S(w) + S(-w)."""
    total = np.zeros(omega.shape)
    mode = params.defect
    eta = post_cavity_efficiency(params)
    for w in (omega, -omega):
        chi = susceptibility_chain(params, w)
        d_delta, d_pin, d_dag = theta_derivatives(chi, params, params.theta)
        s_dd = spurious_detuning_noise(params, chi.omega)
        s_p = thermal_force_spectrum(mode, chi.omega, params.symmetrized)
        deriv = (
            2.0 * np.real(np.conj(chi.chi_Delta_theta) * d_delta) * s_dd
            + 2.0 * np.real(np.conj(chi.chi_Pin_theta) * d_pin) * 2.0 * mode.gamma_m * s_p
        )
        for k in CHANNELS:
            deriv = deriv + 2.0 * np.real(np.conj(chi.chi_aindag_theta[k]) * d_dag[k])
        total = total + eta * deriv
    return total


def _fd_column(problem: FitProblem, x: np.ndarray, j: int) -> np.ndarray:
    h = max(FD_REL_STEP * abs(x[j]), FD_ABS_STEP)
    xp, xm = x.copy(), x.copy()
    xp[j] += h
    xm[j] -= h
    return (problem.residuals(xp) - problem.residuals(xm)) / (2.0 * h)


def jacobian(problem: FitProblem, x, method: str = "auto") -> np.ndarray:
    """Jacobian of the weighted residuals with respect to the fit vector.

    Args:
        problem: Fit problem
        x: Point in the unconstrained parameterization
        method: "auto" uses the analytic eta_d and theta columns, "fd" forces
            central differences everywhere
    """
    if method not in ("auto", "fd"):
        raise ConfigError(f"unknown Jacobian method {method!r}", key="method")
    x = np.asarray(x, dtype=float)
    root = np.sqrt(problem.weight_vector)
    jac = np.empty((problem.psd.size, x.size))
    params = problem.from_vector(x) if method == "auto" else None
    spectrum = None
    for j in range(x.size):
        name = problem.free[j] if j < len(problem.free) else None
        if method == "auto" and name == "eta_d":
            if spectrum is None:
                spectrum = detected_spectrum(params, problem.omega)
            jac[:, j] = root * (spectrum - 1.0) * (1.0 - post_cavity_efficiency(params))
        elif method == "auto" and name == "theta":
            jac[:, j] = root * _theta_sensitivity(params, problem.omega)
        else:
            jac[:, j] = _fd_column(problem, x, j)
    return jac


# ============================================================================
# FIT
# ============================================================================


@dataclass(frozen=True)
class FitResult:
    """Outcome of fit_spectrum().

    Attributes:
        values: Fitted values in physical units (rad/s, fraction, rad, Hz)
        stderr: One-sigma errors in the same units
        covariance: Covariance of the unconstrained fit vector
        x: Unconstrained fit vector
        params: Fitted SystemParams
        reduced_chi2: 2 cost / (points - parameters)
        cost: Final half sum of squared weighted residuals
        nfev: Residual evaluations
        status: least_squares status code
        message: least_squares message
        accepted_costs: Cost at every accepted iterate, in order
    """

    values: Dict[str, float]
    stderr: Dict[str, float]
    covariance: np.ndarray
    x: np.ndarray
    params: SystemParams
    reduced_chi2: float
    cost: float
    nfev: int
    status: int
    message: str
    accepted_costs: Tuple[float, ...] = ()

    @property
    def c_q(self) -> float:
        return derived_rates(self.params).c_q

    @property
    def eta_meas(self) -> float:
        return derived_rates(self.params).eta_meas

    def report(self) -> str:
        lines = ["Spectral fit", "=" * 40]
        for name, value in self.values.items():
            lines.append(f"{name:>24s} = {value:.6g} +- {self.stderr.get(name, float('nan')):.2g}")
        lines.append(f"{'C_q':>24s} = {self.c_q:.6g}")
        lines.append(f"{'eta_meas':>24s} = {self.eta_meas:.6g}")
        lines.append(f"{'reduced chi^2':>24s} = {self.reduced_chi2:.6g}")
        lines.append(f"{'evaluations':>24s} = {self.nfev}")
        lines.append(f"{'status':>24s} = {self.status} ({self.message})")
        return "\n".join(lines)


def _physical(problem: FitProblem, x: np.ndarray, cov: np.ndarray) -> Tuple[Dict[str, float], Dict[str, float]]:
    sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    values: Dict[str, float] = {}
    errors: Dict[str, float] = {}
    for j, name in enumerate(problem.parameter_names):
        u = float(x[j])
        if name == "g":
            values[name] = math.exp(u)
            errors[name] = values[name] * sig[j]
        elif name == "eta_d":
            ceiling = problem.params.cavity.output_efficiency
            eta = _expit(u)
            values[name] = ceiling * eta
            errors[name] = ceiling * eta * (1.0 - eta) * sig[j]
        elif name == "theta" or name.endswith("center_hz"):
            values[name] = u
            errors[name] = float(sig[j])
        else:
            values[name] = math.exp(u)
            errors[name] = values[name] * sig[j]
    return values, errors


def fit_spectrum(problem: FitProblem, x0=None) -> FitResult:
    """Levenberg-Marquardt fit of the detected-spectrum model.

    Converges on a relative cost change below FIT_FTOL or a relative step
    below FIT_XTOL. The covariance is (J^T J)^-1 scaled by the reduced
    chi-square.

    Raises:
        NoConvergence: If the optimizer stops without meeting a criterion
        SingularJacobian: If J^T J is numerically singular at the solution
    """
    x_start = problem.to_vector() if x0 is None else np.asarray(x0, dtype=float)
    costs: Dict[bytes, float] = {}
    accepted: List[float] = []

    def fun(x):
        r = problem.residuals(x)
        costs[x.tobytes()] = 0.5 * float(r @ r)
        return r

    def jac(x):
        key = x.tobytes()
        accepted.append(costs[key] if key in costs else problem.cost(x))
        return jacobian(problem, x)

    result = least_squares(
        fun, x_start, jac=jac, method="lm", ftol=FIT_FTOL, xtol=FIT_XTOL, max_nfev=FIT_MAX_NFEV
    )
    if result.status <= 0:
        raise NoConvergence(
            f"spectral fit stopped after {result.nfev} evaluations: {result.message}",
            hint="try more starts or a better initial guess",
        )
    j = jacobian(problem, result.x)
    jtj = j.T @ j
    cond = float(np.linalg.cond(jtj))
    if not cond < SINGULAR_CONDITION:
        raise SingularJacobian(
            f"normal matrix condition number {cond:.3g}",
            hint="a free parameter has no influence on the fitted band",
        )
    dof = max(problem.psd.size - result.x.size, 1)
    reduced = 2.0 * float(result.cost) / dof
    covariance = np.linalg.inv(jtj) * reduced
    values, errors = _physical(problem, result.x, covariance)
    for name, (lo, hi) in problem.bounds.items():
        if not lo <= values[name] <= hi:
            raise NoConvergence(f"fitted {name}={values[name]:.6g} is outside ({lo:g}, {hi:g})")
    fit = FitResult(
        values=values,
        stderr=errors,
        covariance=covariance,
        x=result.x,
        params=problem.from_vector(result.x),
        reduced_chi2=reduced,
        cost=float(result.cost),
        nfev=int(result.nfev),
        status=int(result.status),
        message=str(result.message),
        accepted_costs=tuple(accepted),
    )
    logger.info(
        "Spectral fit converged",
        extra={"operation": "fit_spectrum", "nfev": fit.nfev, "reduced_chi2": reduced, "c_q": fit.c_q},
    )
    return fit


# ============================================================================
# STARTING POINTS
# ============================================================================


def initial_guess(problem: FitProblem, g_span: float = 10.0, points: int = 13) -> np.ndarray:
    """Coarse grid start for fit_spectrum().

    eta_d starts at INITIAL_ETA_D. g is scanned on a log grid of +-g_span
    around the params' value and theta over half a turn (the spectrum has
    period pi in theta); the grid point of lowest cost wins.
    """
    params = problem.params
    if "eta_d" in problem.free:
        params = params.replace(eta_d=INITIAL_ETA_D)
    g_values = [params.coupling.g]
    if "g" in problem.free:
        g_values = list(params.coupling.g * np.logspace(-math.log10(g_span), math.log10(g_span), points))
    thetas = [params.theta]
    if "theta" in problem.free:
        thetas = list(np.linspace(-0.5 * math.pi, 0.5 * math.pi, 2 * points, endpoint=False))
    best = (math.inf, None)
    for g in g_values:
        for theta in thetas:
            candidate = params.with_g(g).replace(theta=float(theta))
            x = problem.to_vector(candidate)
            cost = problem.cost(x)
            if cost < best[0]:
                best = (cost, x)
    logger.debug("Initial guess selected", extra={"operation": "initial_guess", "cost": best[0]})
    return best[1]


def multi_start(problem: FitProblem, starts: int = 4) -> FitResult:
    """Best of several fits started from rotated and rescaled initial guesses.

    Raises:
        NoConvergence: If every start fails
    """
    base = initial_guess(problem)
    best: Optional[FitResult] = None
    failures = []
    for k in range(max(starts, 1)):
        x0 = base.copy()
        for j, name in enumerate(problem.free):
            if name == "theta":
                x0[j] += k * math.pi / max(starts, 1)
            elif name == "g":
                x0[j] += 0.25 * k * (-1) ** k
        try:
            fit = fit_spectrum(problem, x0)
        except (NoConvergence, SingularJacobian) as exc:
            logger.warning(f"Start {k} failed: {exc}")
            failures.append(exc)
            continue
        if best is None or fit.cost < best.cost:
            best = fit
    if best is None:
        raise NoConvergence(f"all {starts} starts failed: {failures[-1]}")
    return best


def spurious_starts(problem: FitProblem, threshold: float = 1.5, exclude_widths: float = 10.0) -> Tuple[Lorentzian, ...]:
    """Starting Lorentzians for the peaks the model does not explain.

    Peaks of data / model above `threshold` outside +-exclude_widths effective
    linewidths of the defect resonance are kept, largest first, up to
    MAX_SPURIOUS_MODES. Each area is set so the peak height matches, using
    the model's response to white detuning noise at the peak.
    """
    params = problem.params
    base = detected_spectrum(params, problem.omega)
    ratio = problem.psd / base
    peaks, _ = find_peaks(ratio, height=threshold)
    mode = params.defect
    width = mode.gamma_total + max(derived_rates(params).gamma_opt, 0.0)
    keep = [k for k in peaks if abs(problem.omega[k] - mode.omega_m) > exclude_widths * width]
    keep.sort(key=lambda k: -ratio[k])
    keep = keep[:MAX_SPURIOUS_MODES]
    if not keep:
        return ()

    floor = params.classical_detuning_noise.white_floor
    bumped = params.replace(classical_detuning_noise=SpuriousNoise(white_floor=floor + 1.0))
    response = detected_spectrum(bumped, problem.omega) - base
    df = float(np.median(np.diff(problem.freqs_hz)))
    terms = []
    for k in sorted(keep):
        if not response[k] > 0:
            continue
        excess = problem.psd[k] - base[k]
        w = TWO_PI * 3.0 * df
        area = excess / response[k] * 0.5 * math.pi * w
        terms.append(Lorentzian(center=float(problem.omega[k]), width=w, area=float(area)))
    logger.info(
        "Spurious peaks selected",
        extra={"operation": "spurious_starts", "peaks": int(peaks.size), "kept": len(terms)},
    )
    return tuple(terms)
