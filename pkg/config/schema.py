"""JSON schemas for parameter files and pipeline configurations.

Three documents are defined here:

PARAMETER FILE (PARAMS_SCHEMA):
===============================
Describes one optomechanical system. All frequencies are ordinary
frequencies in Hz, all angles are in degrees. The loader converts them to
rad/s and rad.

{
  "schema_version": 1,
  "modes": [{"frequency_hz": 1.167e6, "linewidth_hz": 6.41e-3, "n_th": 5.3e6}],
  "cavity": {"kappa_hz": 34.2e6, "kappa_out_hz": 32.42e6, "kappa_in_hz": 0.0,
             "kappa_loss_hz": 1.78e6, "detuning_hz": "magic"},
  "coupling": {"g0_hz": 159.0, "cooperativity": 0.93},
  "detection": {"eta_d": 0.31, "theta_deg": -90.0},
  "spurious_noise": {"lorentzians": [], "white_floor": 0.0}
}

PIPELINE CONFIG (PIPELINE_SCHEMA):
==================================
Top-level "params" (inline parameter object or a path to a parameter file)
and one optional section per CLI command: simulate, estimate, fit, calibrate,
spectra.

RECORD HEADER (RECORD_HEADER_SCHEMA):
=====================================
JSON sidecar describing a raw little-endian float64 sample file of shape
(n_samples, len(channels)).

Every object sets additionalProperties to false so that misspelled keys are
rejected instead of silently ignored.
"""

from __future__ import annotations

from typing import Any, Dict

from .constants import SCHEMA_VERSION

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NONNEGATIVE = {"type": "number", "minimum": 0}
_FRACTION = {"type": "number", "minimum": 0, "maximum": 1}

# ============================================================================
# PARAMETER FILE
# ============================================================================

MODE_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["frequency_hz", "linewidth_hz", "n_th"],
    "properties": {
        "frequency_hz": _POSITIVE,
        "linewidth_hz": _POSITIVE,
        "n_th": _NONNEGATIVE,
        "optical_damping_hz": {"type": "number"},
        "coupling_weight": _NONNEGATIVE,
        "label": {"type": "string"},
    },
}

CAVITY_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kappa_hz", "detuning_hz"],
    "properties": {
        "kappa_hz": _POSITIVE,
        "kappa_out_hz": _NONNEGATIVE,
        "kappa_in_hz": _NONNEGATIVE,
        "kappa_loss_hz": _NONNEGATIVE,
        "detuning_hz": {
            "oneOf": [{"type": "number"}, {"type": "string", "enum": ["magic"]}],
        },
    },
}

COUPLING_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["g0_hz"],
    "properties": {
        "g0_hz": _NONNEGATIVE,
        "mean_field": _NONNEGATIVE,
        "g_hz": _NONNEGATIVE,
        "cooperativity": _NONNEGATIVE,
    },
    "oneOf": [
        {"required": ["mean_field"]},
        {"required": ["g_hz"]},
        {"required": ["cooperativity"]},
    ],
}

DETECTION_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["eta_d", "theta_deg"],
    "properties": {
        "eta_d": _FRACTION,
        "theta_deg": {"type": "number"},
        "symmetrized": {"type": "boolean"},
    },
}

SPURIOUS_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lorentzians": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["center_hz", "width_hz", "area"],
                "properties": {
                    "center_hz": {"type": "number"},
                    "width_hz": _POSITIVE,
                    "area": _POSITIVE,
                },
            },
        },
        "white_floor": _NONNEGATIVE,
    },
}

PARAMS_SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "optomech parameter file",
    "type": "object",
    "additionalProperties": False,
    "required": ["modes", "cavity", "coupling", "detection"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "description": {"type": "string"},
        "modes": {"type": "array", "minItems": 1, "items": MODE_SCHEMA},
        "cavity": CAVITY_SCHEMA,
        "coupling": COUPLING_SCHEMA,
        "detection": DETECTION_SCHEMA,
        "spurious_noise": SPURIOUS_SCHEMA,
        "x_zpf_m": _POSITIVE,
        "effective_mass_kg": _POSITIVE,
    },
}

# ============================================================================
# PIPELINE SECTIONS
# ============================================================================

_TONES = {
    "type": "array",
    "items": {
        "type": "array",
        "prefixItems": [_POSITIVE, _NONNEGATIVE],
        "minItems": 2,
        "maxItems": 2,
    },
}

SIMULATE_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["duration_s", "sample_rate_hz"],
    "properties": {
        "duration_s": _POSITIVE,
        "sample_rate_hz": _POSITIVE,
        "seed": {"type": "integer", "minimum": 0},
        "record_truth": {"type": "boolean"},
        "correlated_backaction": {"type": "boolean"},
        "tones": _TONES,
        "feedback_gain": {"type": "number"},
        "realizations": {"type": "integer", "minimum": 1},
    },
}

ESTIMATE_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["record"],
    "properties": {
        "record": {"type": "string"},
        "cov_oversample": {"type": "integer", "minimum": 1},
        "discretization_compensation": {"type": "boolean"},
        "predict_window_s": _POSITIVE,
        "retrodict_window_s": _POSITIVE,
        "guard_s": _NONNEGATIVE,
        "single_mode_comparison": {"type": "boolean"},
    },
}

FIT_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["psd"],
    "properties": {
        "psd": {"type": "string"},
        "band_hz": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "free": {
            "type": "array",
            "items": {"enum": ["g", "eta_d", "theta"]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "starts": {"type": "integer", "minimum": 1},
        "spurious_modes": {"type": "boolean"},
    },
}

CALIBRATE_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "shot_noise": {
            "type": "object",
            "additionalProperties": False,
            "required": ["voltages", "powers", "operating_voltage"],
            "properties": {
                "voltages": {"type": "array", "items": _POSITIVE},
                "powers": {"type": "array", "items": _POSITIVE},
                "operating_voltage": _POSITIVE,
            },
        },
        "g0": {
            "type": "object",
            "additionalProperties": False,
            "required": ["record", "tones", "peak_band_hz"],
            "properties": {
                "record": {"type": "string"},
                "tones": _TONES,
                "peak_band_hz": {
                    "type": "array",
                    "items": {"type": "number"},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
        },
        "phase_noise": {
            "type": "object",
            "additionalProperties": False,
            "required": ["record", "beat_hz"],
            "properties": {"record": {"type": "string"}, "beat_hz": _POSITIVE},
        },
    },
}

SPECTRA_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["bands_hz"],
    "properties": {
        "bands_hz": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        },
        "points": {"type": "integer", "minimum": 2},
        "theta_deg": {"type": "array", "items": {"type": "number"}},
        "kind": {"enum": ["detected_quadrature", "mechanical_position", "squeezing_curve"]},
        "angle_dependent_efficiency": {"type": "boolean"},
    },
}

PIPELINE_SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "optomech pipeline configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "params"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "description": {"type": "string"},
        "params": {"oneOf": [{"type": "string"}, PARAMS_SCHEMA]},
        "seed": {"type": "integer", "minimum": 0},
        "simulate": SIMULATE_SCHEMA,
        "estimate": ESTIMATE_SCHEMA,
        "fit": FIT_SCHEMA,
        "calibrate": CALIBRATE_SCHEMA,
        "spectra": SPECTRA_SCHEMA,
    },
}

# ============================================================================
# RECORD SIDECAR HEADER
# ============================================================================

RECORD_FORMAT = "optomech-f64"

RECORD_HEADER_SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "optomech record header",
    "type": "object",
    "additionalProperties": False,
    "required": ["format", "schema_version", "data_file", "channels", "n_samples", "sample_rate_hz", "kind"],
    "properties": {
        "format": {"const": RECORD_FORMAT},
        "schema_version": {"const": SCHEMA_VERSION},
        "data_file": {"type": "string"},
        "channels": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "n_samples": {"type": "integer", "minimum": 1},
        "sample_rate_hz": _POSITIVE,
        "demod_frequency_hz": _NONNEGATIVE,
        "units": {"type": "string"},
        "kind": {"enum": ["iq", "carrier", "truth", "beat"]},
        "meta": {"type": "object"},
    },
}
