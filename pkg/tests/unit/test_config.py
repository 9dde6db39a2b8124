"""
Unit tests for configuration management.

Tests cover:
- Preset loading and unit conversion
- Schema violations with key and line numbers
- Pipeline sections and path resolution
- Preset calibration of the spurious-mode damping and the squeezing efficiency flag
- Configuration digest stability
- Run registry persistence and status
"""

import json
import math
import os
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from config.constants import PRESETS_DIR, TWO_PI  # noqa: E402
from config.loader import (  # noqa: E402
    document_digest,
    list_presets,
    load_params,
    load_pipeline,
    params_from_dict,
    pipeline_from_dict,
)
from config.run_registry import RunRegistry  # noqa: E402
from optomech.errors import ConfigError  # noqa: E402
from optomech.model_core import derived_rates, magic_detuning  # noqa: E402


def _params_doc(**overrides):
    doc = {
        "schema_version": 1,
        "modes": [{"frequency_hz": 1.0e6, "linewidth_hz": 1.0, "n_th": 100.0}],
        "cavity": {"kappa_hz": 1.0e7, "detuning_hz": -1.0e6},
        "coupling": {"g0_hz": 100.0, "g_hz": 1.0e4},
        "detection": {"eta_d": 0.5, "theta_deg": 30.0},
    }
    doc.update(overrides)
    return doc


class TestParameterLoading(unittest.TestCase):
    """Test conversion of parameter documents."""

    def test_hz_converted_to_rad_per_s(self):
        params = params_from_dict(_params_doc())
        self.assertAlmostEqual(params.defect.omega_m, TWO_PI * 1.0e6, places=3)
        self.assertAlmostEqual(params.cavity.detuning, -TWO_PI * 1.0e6, places=3)
        self.assertAlmostEqual(params.coupling.g, TWO_PI * 1.0e4, places=6)
        self.assertAlmostEqual(params.theta, math.radians(30.0), places=12)

    def test_magic_detuning_keyword(self):
        doc = _params_doc(cavity={"kappa_hz": 1.0e7, "detuning_hz": "magic"})
        params = params_from_dict(doc)
        self.assertAlmostEqual(params.cavity.detuning, magic_detuning(TWO_PI * 1.0e7), places=6)

    def test_operating_point_preset(self):
        params = load_params(PRESETS_DIR / "op819.json")
        rates = derived_rates(params)
        self.assertAlmostEqual(rates.c_q, 0.93, places=9, msg="Preset cooperativity not reproduced")
        self.assertEqual(params.eta_d, 0.31)

    def test_all_presets_listed(self):
        names = {p.name for p in list_presets()}
        for expected in ("op819.json", "cooling862.json", "squeezing819.json", "estimation10.json"):
            self.assertIn(expected, names)

    def test_unknown_key_reports_key(self):
        doc = _params_doc()
        doc["detection"]["gain"] = 3
        with self.assertRaises(ConfigError) as ctx:
            params_from_dict(doc)
        self.assertEqual(ctx.exception.key, "detection.gain")

    def test_out_of_range_efficiency(self):
        doc = _params_doc(detection={"eta_d": 1.5, "theta_deg": 0.0})
        with self.assertRaises(ConfigError):
            params_from_dict(doc)


class TestPipelineLoading(unittest.TestCase):
    """Test pipeline documents on disk."""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def _write(self, name, document):
        path = self.test_dir / name
        path.write_text(json.dumps(document, indent=2))
        return path

    def test_params_file_resolved_next_to_config(self):
        self._write("params.json", _params_doc())
        path = self._write(
            "run.json",
            {
                "schema_version": 1,
                "params": "params.json",
                "simulate": {"duration_s": 0.01, "sample_rate_hz": 1.0e6, "tones": [[1.0e6, 0.01]]},
            },
        )
        config = load_pipeline(path)
        self.assertEqual(config.source, path.resolve())
        self.assertEqual(config.simulate.tones, ((1.0e6, 0.01),))
        self.assertEqual(config.resolve("record.json"), (self.test_dir / "record.json").resolve())

    def test_schema_error_carries_line(self):
        text = '{\n  "schema_version": 1,\n  "params": "p.json",\n  "simulate": {"duration_s": -1, "sample_rate_hz": 1e6}\n}\n'
        path = self.test_dir / "bad.json"
        path.write_text(text)
        self._write("p.json", _params_doc())
        with self.assertRaises(ConfigError) as ctx:
            load_pipeline(path)
        self.assertEqual(ctx.exception.line, 4, "Error should point at the simulate line")

    def test_invalid_json_reports_line(self):
        path = self.test_dir / "broken.json"
        path.write_text('{\n  "schema_version": 1,\n  "params": \n}\n')
        with self.assertRaises(ConfigError) as ctx:
            load_pipeline(path)
        self.assertIsNotNone(ctx.exception.line)

    def test_decreasing_fit_band_rejected(self):
        doc = {"schema_version": 1, "params": _params_doc(), "fit": {"psd": "psd.csv", "band_hz": [2.0, 1.0]}}
        with self.assertRaises(ConfigError):
            pipeline_from_dict(doc)

    def test_digest_ignores_key_order(self):
        a = {"schema_version": 1, "params": "x.json", "seed": 3}
        b = {"seed": 3, "params": "x.json", "schema_version": 1}
        self.assertEqual(document_digest(a), document_digest(b))

    def test_estimation_preset(self):
        config = load_pipeline(PRESETS_DIR / "estimation10.json")
        self.assertEqual(len(config.params.modes), 10)
        self.assertEqual(config.estimate.record, Path("record.json"))
        self.assertEqual(config.seed, 20240601)

    def test_spurious_damping_scales_with_coupling_weight(self):
        modes = load_pipeline(PRESETS_DIR / "estimation10.json").params.modes
        defect = modes[0]
        for mode in modes[1:]:
            expected = mode.coupling_weight**2 * defect.gamma_opt
            self.assertAlmostEqual(mode.gamma_opt / expected, 1.0, places=9, msg=mode.label)

    def test_squeezing_preset_uses_angle_dependent_efficiency(self):
        config = load_pipeline(PRESETS_DIR / "squeezing819.json")
        self.assertTrue(config.spectra.angle_dependent_efficiency)
        estimation = load_pipeline(PRESETS_DIR / "estimation10.json")
        self.assertIsNone(estimation.spectra, "Spectra section is optional")


class TestRunRegistry(unittest.TestCase):
    """Test the persistent run registry."""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())
        self.out_dir = self.test_dir / "out"
        self.out_dir.mkdir()

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_register_and_finish(self):
        registry = RunRegistry(self.test_dir)
        run_id = registry.register("simulate", "ab" * 32, 7, self.out_dir)
        self.assertEqual(registry.status(run_id), "running")
        registry.finish(run_id, 0)

        reloaded = RunRegistry(self.test_dir)
        info = reloaded.get(run_id)
        self.assertIsNotNone(info, "Run should persist across registry instances")
        self.assertEqual(info.status, "ok")
        self.assertEqual(info.seed, 7)
        self.assertEqual(info.pid, os.getpid())

    def test_failed_exit_code(self):
        registry = RunRegistry(self.test_dir)
        run_id = registry.register("fit", "cd" * 32, None, self.out_dir)
        registry.finish(run_id, 3)
        self.assertEqual(registry.status(run_id), "failed")

    def test_missing_output_directory_collected(self):
        registry = RunRegistry(self.test_dir)
        run_id = registry.register("spectra", "ef" * 32, None, self.out_dir)
        shutil.rmtree(self.out_dir)
        self.assertIsNone(RunRegistry(self.test_dir).get(run_id))

    def test_orphaned_run_detected(self):
        registry = RunRegistry(self.test_dir)
        run_id = registry.register("simulate", "12" * 32, 1, self.out_dir)
        registry._update(run_id, pid=0)
        self.assertEqual(registry.status(run_id), "orphaned")


if __name__ == "__main__":
    unittest.main()
