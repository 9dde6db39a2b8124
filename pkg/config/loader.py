"""Load and validate parameter files and pipeline configurations.

The loader is the only place where external units are converted: frequencies
in Hz become angular rates in rad/s and angles in degrees become radians.
Everything downstream works in the internal convention documented in
optomech.model_core.

VALIDATION:
===========
Documents are validated against config.schema with a Draft 2020-12
validator. The first error is turned into a ConfigError that names the
offending key, its JSON path and the 1-based line number in the source file
(found by scanning the raw text for the quoted key).

Example:
    >>> from config.loader import load_params
    >>> params = load_params("config/presets/op819.json")
    >>> params.cavity.kappa / (2 * math.pi)
    34200000.0
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from jsonschema import Draft202012Validator
from jsonschema.exceptions import ValidationError

from optomech.errors import ConfigError
from optomech.model_core import (
    CavityMode,
    CouplingParams,
    Lorentzian,
    MechanicalMode,
    SpuriousNoise,
    SystemParams,
    coupling_for_cooperativity,
    frequency_noise_to_detuning_noise,
    magic_detuning,
)

from .constants import (
    COV_OVERSAMPLE,
    EFFECTIVE_MASS_KG,
    KAPPA_OUT_FRACTION,
    SLICE_GUARD_S,
    SLICE_PREDICT_S,
    SLICE_RETRODICT_S,
    TWO_PI,
    X_ZPF_M,
)
from .schema import PARAMS_SCHEMA, PIPELINE_SCHEMA

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# ============================================================================
# PIPELINE SECTIONS
# ============================================================================


@dataclass(frozen=True)
class SimulateSection:
    duration_s: float
    sample_rate_hz: float
    seed: Optional[int] = None
    record_truth: bool = False
    correlated_backaction: bool = True
    tones: Tuple[Tuple[float, float], ...] = ()
    feedback_gain: float = 0.0
    realizations: int = 1


@dataclass(frozen=True)
class EstimateSection:
    record: Path
    cov_oversample: int = COV_OVERSAMPLE
    discretization_compensation: bool = True
    predict_window_s: float = SLICE_PREDICT_S
    retrodict_window_s: float = SLICE_RETRODICT_S
    guard_s: float = SLICE_GUARD_S
    single_mode_comparison: bool = True


@dataclass(frozen=True)
class FitSection:
    psd: Path
    band_hz: Optional[Tuple[float, float]] = None
    free: Tuple[str, ...] = ("g", "eta_d", "theta")
    starts: int = 1
    spurious_modes: bool = False


@dataclass(frozen=True)
class SpectraSection:
    bands_hz: Tuple[Tuple[float, float], ...]
    points: int = 2001
    theta_deg: Tuple[float, ...] = ()
    kind: str = "detected_quadrature"
    angle_dependent_efficiency: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    """Validated pipeline configuration.

    Attributes:
        source: File the configuration was read from (None when built in code)
        params: System parameters
        seed: Top-level seed, overridden by --seed
        simulate, estimate, fit, spectra: Command sections, None when absent
        calibrate: Raw calibrate section (values already validated)
        digest: sha256 of the canonical JSON document
        document: The validated document itself, for the manifest
    """

    source: Optional[Path]
    params: SystemParams
    seed: Optional[int] = None
    simulate: Optional[SimulateSection] = None
    estimate: Optional[EstimateSection] = None
    fit: Optional[FitSection] = None
    calibrate: Optional[Dict[str, Any]] = None
    spectra: Optional[SpectraSection] = None
    digest: str = ""
    document: Dict[str, Any] = field(default_factory=dict)

    def resolve(self, path: PathLike) -> Path:
        """Resolve a path relative to the configuration file."""
        candidate = Path(path)
        if candidate.is_absolute() or self.source is None:
            return candidate
        return (self.source.parent / candidate).resolve()


# ============================================================================
# RAW DOCUMENT HANDLING
# ============================================================================


def _read_json(path: Path) -> Tuple[Dict[str, Any], str]:
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"configuration file not found: {path}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file {path}: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: top level must be a JSON object", line=1)
    return document, text


def _line_of(text: str, path: Sequence[Any]) -> Optional[int]:
    """Best-effort line number of the last named key along a JSON path."""
    if not text:
        return None
    offset = 0
    found = None
    for element in path:
        if not isinstance(element, str):
            continue
        match = re.compile(r'"%s"\s*:' % re.escape(element)).search(text, offset)
        if match is None:
            break
        offset = match.end()
        found = match.start()
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


def _schema_error(error: ValidationError, text: str, source: str) -> ConfigError:
    path = list(error.absolute_path)
    key = ".".join(str(p) for p in path) or "<root>"
    if error.validator == "additionalProperties" and isinstance(error.instance, dict):
        allowed = set(error.schema.get("properties", {}))
        extra = sorted(k for k in error.instance if k not in allowed)
        if extra:
            bad = path + [extra[0]]
            return ConfigError(
                f"{source}: unknown key {extra[0]!r} at {key}",
                key=".".join(str(p) for p in bad),
                line=_line_of(text, bad),
                hint=f"allowed keys: {', '.join(sorted(allowed))}",
            )
    return ConfigError(f"{source}: {error.message}", key=key, line=_line_of(text, path))


def validate(document: Dict[str, Any], schema: Dict[str, Any], text: str = "", source: str = "<config>") -> None:
    """Validate a document, raising ConfigError for the most relevant violation."""
    validator = Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(document), key=lambda e: (len(list(e.absolute_path)), str(e.message)))
    if errors:
        # Deepest error is usually the most specific one
        deepest = max(errors, key=lambda e: len(list(e.absolute_path)))
        raise _schema_error(deepest, text, source)


def document_digest(document: Dict[str, Any]) -> str:
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# ============================================================================
# PARAMETER CONVERSION
# ============================================================================


def _cavity_from_dict(raw: Dict[str, Any]) -> CavityMode:
    kappa = TWO_PI * raw["kappa_hz"]
    detuning_raw = raw["detuning_hz"]
    detuning = magic_detuning(kappa) if detuning_raw == "magic" else TWO_PI * detuning_raw

    kappa_in = TWO_PI * raw.get("kappa_in_hz", 0.0)
    if "kappa_out_hz" in raw:
        kappa_out = TWO_PI * raw["kappa_out_hz"]
    elif "kappa_loss_hz" in raw:
        kappa_out = kappa - kappa_in - TWO_PI * raw["kappa_loss_hz"]
    else:
        kappa_out = KAPPA_OUT_FRACTION * kappa
    if "kappa_loss_hz" in raw:
        kappa_loss = TWO_PI * raw["kappa_loss_hz"]
    else:
        kappa_loss = kappa - kappa_out - kappa_in
    if kappa_loss < 0 and abs(kappa_loss) < 1e-9 * kappa:
        kappa_loss = 0.0
    return CavityMode(
        kappa=kappa,
        kappa_out=kappa_out,
        kappa_in=kappa_in,
        kappa_loss=kappa_loss,
        detuning=detuning,
    )


def _mode_from_dict(raw: Dict[str, Any], index: int) -> MechanicalMode:
    return MechanicalMode(
        omega_m=TWO_PI * raw["frequency_hz"],
        gamma_m=TWO_PI * raw["linewidth_hz"],
        n_th=float(raw["n_th"]),
        gamma_opt=TWO_PI * raw.get("optical_damping_hz", 0.0),
        coupling_weight=float(raw.get("coupling_weight", 1.0)),
        label=raw.get("label", "defect" if index == 0 else f"mode{index}"),
    )


def _spurious_from_dict(raw: Dict[str, Any]) -> SpuriousNoise:
    """Convert single-sided frequency-noise terms (Hz^2/Hz) to S_DD (rad^2/s)."""
    terms = tuple(
        Lorentzian(
            center=TWO_PI * item["center_hz"],
            width=TWO_PI * item["width_hz"],
            area=4.0 * math.pi**3 * item["area"],
        )
        for item in raw.get("lorentzians", [])
    )
    floor = float(frequency_noise_to_detuning_noise(raw.get("white_floor", 0.0)))
    return SpuriousNoise(lorentzians=terms, white_floor=floor)


def params_from_dict(raw: Dict[str, Any], text: str = "", source: str = "<params>") -> SystemParams:
    """Validate a parameter document and build SystemParams."""
    validate(raw, PARAMS_SCHEMA, text, source)
    try:
        modes = tuple(_mode_from_dict(m, i) for i, m in enumerate(raw["modes"]))
        cavity = _cavity_from_dict(raw["cavity"])
        coupling_raw = raw["coupling"]
        g0 = TWO_PI * coupling_raw["g0_hz"]
        if "mean_field" in coupling_raw:
            coupling = CouplingParams.from_mean_field(g0, float(coupling_raw["mean_field"]))
        elif "g_hz" in coupling_raw:
            coupling = CouplingParams.from_g(g0, TWO_PI * coupling_raw["g_hz"])
        else:
            coupling = CouplingParams.from_mean_field(g0, 0.0)
        detection = raw["detection"]
        params = SystemParams(
            modes=modes,
            cavity=cavity,
            coupling=coupling,
            eta_d=float(detection["eta_d"]),
            theta=math.radians(detection["theta_deg"]),
            classical_detuning_noise=_spurious_from_dict(raw.get("spurious_noise", {})),
            symmetrized=bool(detection.get("symmetrized", True)),
            x_zpf=float(raw.get("x_zpf_m", X_ZPF_M)),
            effective_mass=float(raw.get("effective_mass_kg", EFFECTIVE_MASS_KG)),
        )
        if "cooperativity" in coupling_raw:
            params = coupling_for_cooperativity(params, float(coupling_raw["cooperativity"]))
    except ConfigError as exc:
        if exc.line is None and exc.key is not None:
            leaf = exc.key.split(".")[-1]
            located = ConfigError(f"{source}: {exc.args[0]}", line=_line_of(text, [leaf]), hint=exc.hint)
            located.key = exc.key
            raise located from exc
        raise
    logger.debug(
        "Parameters loaded",
        extra={"operation": "params_from_dict", "source": source, "n_modes": len(params.modes)},
    )
    return params


def load_params(path: PathLike) -> SystemParams:
    """Load a parameter file."""
    path = Path(path)
    document, text = _read_json(path)
    return params_from_dict(document, text, str(path))


# ============================================================================
# PIPELINE CONFIG
# ============================================================================


def _tones(raw: Sequence[Sequence[float]]) -> Tuple[Tuple[float, float], ...]:
    return tuple((float(f), float(d)) for f, d in raw)


def pipeline_from_dict(
    document: Dict[str, Any], text: str = "", source: Optional[Path] = None
) -> PipelineConfig:
    """Validate a pipeline document and build PipelineConfig."""
    name = str(source) if source else "<pipeline>"
    validate(document, PIPELINE_SCHEMA, text, name)

    params_raw = document["params"]
    if isinstance(params_raw, str):
        params_path = Path(params_raw)
        if not params_path.is_absolute() and source is not None:
            params_path = source.parent / params_path
        params = load_params(params_path)
    else:
        params = params_from_dict(params_raw, text, name)

    simulate = None
    if "simulate" in document:
        raw = document["simulate"]
        simulate = SimulateSection(
            duration_s=float(raw["duration_s"]),
            sample_rate_hz=float(raw["sample_rate_hz"]),
            seed=raw.get("seed"),
            record_truth=bool(raw.get("record_truth", False)),
            correlated_backaction=bool(raw.get("correlated_backaction", True)),
            tones=_tones(raw.get("tones", [])),
            feedback_gain=float(raw.get("feedback_gain", 0.0)),
            realizations=int(raw.get("realizations", 1)),
        )

    estimate = None
    if "estimate" in document:
        raw = document["estimate"]
        estimate = EstimateSection(
            record=Path(raw["record"]),
            cov_oversample=int(raw.get("cov_oversample", COV_OVERSAMPLE)),
            discretization_compensation=bool(raw.get("discretization_compensation", True)),
            predict_window_s=float(raw.get("predict_window_s", SLICE_PREDICT_S)),
            retrodict_window_s=float(raw.get("retrodict_window_s", SLICE_RETRODICT_S)),
            guard_s=float(raw.get("guard_s", SLICE_GUARD_S)),
            single_mode_comparison=bool(raw.get("single_mode_comparison", True)),
        )

    fit = None
    if "fit" in document:
        raw = document["fit"]
        band = raw.get("band_hz")
        if band is not None and not band[0] < band[1]:
            raise ConfigError(
                f"{name}: fit band must be increasing", key="fit.band_hz", line=_line_of(text, ["fit", "band_hz"])
            )
        fit = FitSection(
            psd=Path(raw["psd"]),
            band_hz=tuple(band) if band else None,
            free=tuple(raw.get("free", ["g", "eta_d", "theta"])),
            starts=int(raw.get("starts", 1)),
            spurious_modes=bool(raw.get("spurious_modes", False)),
        )

    spectra = None
    if "spectra" in document:
        raw = document["spectra"]
        bands = tuple((float(lo), float(hi)) for lo, hi in raw["bands_hz"])
        if not bands:
            raise ConfigError(
                f"{name}: at least one band is required",
                key="spectra.bands_hz",
                line=_line_of(text, ["spectra", "bands_hz"]),
            )
        for lo, hi in bands:
            if not 0 <= lo < hi:
                raise ConfigError(
                    f"{name}: band ({lo}, {hi}) must satisfy 0 <= lo < hi",
                    key="spectra.bands_hz",
                    line=_line_of(text, ["spectra", "bands_hz"]),
                )
        spectra = SpectraSection(
            bands_hz=bands,
            points=int(raw.get("points", 2001)),
            theta_deg=tuple(float(t) for t in raw.get("theta_deg", [])),
            kind=raw.get("kind", "detected_quadrature"),
            angle_dependent_efficiency=bool(raw.get("angle_dependent_efficiency", False)),
        )

    return PipelineConfig(
        source=source,
        params=params,
        seed=document.get("seed"),
        simulate=simulate,
        estimate=estimate,
        fit=fit,
        calibrate=document.get("calibrate"),
        spectra=spectra,
        digest=document_digest(document),
        document=document,
    )


def load_pipeline(path: PathLike) -> PipelineConfig:
    """Load and validate a pipeline configuration file."""
    path = Path(path).resolve()
    document, text = _read_json(path)
    config = pipeline_from_dict(document, text, path)
    logger.info(
        "Pipeline configuration loaded",
        extra={"operation": "load_pipeline", "source": str(path), "digest": config.digest[:12]},
    )
    return config


def list_presets() -> List[Path]:
    from .constants import PRESETS_DIR

    return sorted(PRESETS_DIR.glob("*.json"))
