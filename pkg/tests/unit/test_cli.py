"""
Unit tests for the command-line entry point.

Tests cover:
- Exit codes for configuration and missing-input failures
- Spectra and squeezing-curve outputs with their manifest
- Simulate followed by estimate on a short record
- Seed override reproducibility
- Shot-noise calibration and spectral fit commands
"""

import csv
import json
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from config.constants import (  # noqa: E402
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    LOG_FILE_NAME,
    MANIFEST_NAME,
    PRESETS_DIR,
    TWO_PI,
)
from config.loader import load_params  # noqa: E402
from optomech.cli import run  # noqa: E402
from optomech.model_core import detected_spectrum  # noqa: E402
from optomech.records import read_csv, write_csv  # noqa: E402


def _params_doc(optical_damping_hz=None):
    doc = json.loads((PRESETS_DIR / "op819.json").read_text())
    doc.pop("description", None)
    if optical_damping_hz is not None:
        doc["modes"][0]["optical_damping_hz"] = optical_damping_hz
    return doc


def _read_table(path):
    with Path(path).open(newline="") as handle:
        rows = list(csv.reader(handle))
    return {row[0]: row[1:] for row in rows[1:]}


class CliTestCase(unittest.TestCase):
    """Temporary workspace with helpers for writing configurations."""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())
        self.out_dir = self.test_dir / "out"

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def _config(self, name="run.json", **sections):
        document = {"schema_version": 1, "params": _params_doc()}
        document.update(sections)
        path = self.test_dir / name
        path.write_text(json.dumps(document, indent=2))
        return path

    def _run(self, command, config, *extra):
        return run([command, "--config", str(config), "--out", str(self.out_dir), *extra])


class TestExitCodes(CliTestCase):
    """Test failure classification."""

    def test_unknown_key_is_config_error(self):
        config = self._config(spectra={"bands_hz": [[1.16e6, 1.17e6]], "resolution": 3})
        self.assertEqual(self._run("spectra", config), EXIT_CONFIG)

    def test_missing_config_file(self):
        self.assertEqual(self._run("spectra", self.test_dir / "absent.json"), EXIT_CONFIG)

    def test_missing_section(self):
        config = self._config(spectra={"bands_hz": [[1.16e6, 1.17e6]]})
        self.assertEqual(self._run("estimate", config), EXIT_CONFIG)

    def test_missing_record_is_io_error(self):
        config = self._config(estimate={"record": "nowhere.json"})
        self.assertEqual(self._run("estimate", config), EXIT_IO)
        self.assertTrue((self.out_dir / LOG_FILE_NAME).is_file(), "Failures should still be logged")

    def test_empty_calibrate_section(self):
        config = self._config(calibrate={})
        self.assertEqual(self._run("calibrate", config), EXIT_CONFIG)


class TestSpectraCommand(CliTestCase):
    """Test model spectra output."""

    def test_detected_quadrature_band(self):
        config = self._config(
            spectra={"bands_hz": [[1.16e6, 1.174e6]], "points": 201, "theta_deg": [-120.0, -90.0]}
        )
        self.assertEqual(self._run("spectra", config), EXIT_OK)

        table = read_csv(self.out_dir / "spectrum_band0.csv")
        self.assertEqual(len(table["frequency_hz"]), 201)
        self.assertIn("psd_theta_-120deg", table)
        self.assertTrue(np.all(table["psd_theta_-90deg"] > 0.0), "PSD must be positive")

        rates = _read_table(self.out_dir / "rates.csv")
        self.assertAlmostEqual(float(rates["c_q"][0]), 0.93, places=9)

        manifest = json.loads((self.out_dir / MANIFEST_NAME).read_text())
        self.assertEqual(manifest["command"], "spectra")
        names = {entry["path"] for entry in manifest["outputs"]}
        self.assertEqual(names, {"spectrum_band0.csv", "rates.csv"})
        self.assertTrue(all(len(entry["sha256"]) == 64 for entry in manifest["outputs"]))

    def test_squeezing_preset(self):
        self.assertEqual(self._run("spectra", PRESETS_DIR / "squeezing819.json"), EXIT_OK)
        table = read_csv(self.out_dir / "squeezing_curve.csv")
        self.assertEqual(len(table["theta_deg"]), 10)
        self.assertLess(float(np.min(table["min_psd_shot_noise"])), 1.0, "Some angle should squeeze")


class TestSimulateEstimate(CliTestCase):
    """Test a short simulate and estimate pipeline."""

    def setUp(self):
        super().setUp()
        self.config = self._config(
            params=_params_doc(optical_damping_hz=1700.0),
            seed=11,
            simulate={"duration_s": 0.05, "sample_rate_hz": 1.0e6},
            estimate={
                "record": "record.json",
                "predict_window_s": 1.0e-4,
                "retrodict_window_s": 1.0e-4,
                "guard_s": 5.0e-5,
                "single_mode_comparison": False,
            },
        )

    def test_pipeline_outputs(self):
        self.assertEqual(self._run("simulate", self.config), EXIT_OK)
        self.assertTrue((self.out_dir / "record.json").is_file())
        self.assertTrue((self.out_dir / "record.f64").is_file())

        self.assertEqual(self._run("estimate", self.config), EXIT_OK)
        for name in (
            "means.csv",
            "covariance_diagonal.csv",
            "reconstructed_covariance.csv",
            "reconstructed_stderr.csv",
            "predicted_covariance.csv",
            "retrodicted_covariance.csv",
            "correlation_matrix.csv",
            "collective_coefficients.csv",
            "occupancies.csv",
        ):
            self.assertTrue((self.out_dir / name).is_file(), f"{name} missing")

        occupancy = read_csv(self.out_dir / "occupancies.csv")
        n = float(occupancy["n_cond_multimode"][0])
        self.assertGreater(n, 0.3, "Conditional occupancy should be near the Riccati value")
        self.assertLess(n, 1.5, "Conditional occupancy should be near the Riccati value")

    def test_seed_override_reproducible(self):
        first, second = self.test_dir / "a", self.test_dir / "b"
        for out in (first, second):
            code = run(["simulate", "--config", str(self.config), "--out", str(out), "--seed", "5"])
            self.assertEqual(code, EXIT_OK)
        self.assertEqual((first / "record.f64").read_bytes(), (second / "record.f64").read_bytes())
        manifest = json.loads((first / MANIFEST_NAME).read_text())
        self.assertEqual(manifest["seed"], 5)


class TestCalibrateAndFit(CliTestCase):
    """Test the calibration and fit commands."""

    def test_shot_noise_calibration(self):
        voltages = [0.5, 1.0, 2.0, 4.0, 8.0]
        powers = [2.0 * v + 0.1 * v * v for v in voltages]
        config = self._config(
            calibrate={"shot_noise": {"voltages": voltages, "powers": powers, "operating_voltage": 4.0}}
        )
        self.assertEqual(self._run("calibrate", config), EXIT_OK)
        table = _read_table(self.out_dir / "shot_noise_calibration.csv")
        self.assertAlmostEqual(float(table["a"][0]), 2.0, places=6)
        self.assertAlmostEqual(float(table["shot_noise_reference"][0]), 8.0, places=5)

    def test_fit_exact_spectrum(self):
        params = load_params(PRESETS_DIR / "op819.json")
        freqs = params.defect.omega_m / TWO_PI + np.linspace(-20.0e3, 20.0e3, 401)
        write_csv(
            self.test_dir / "psd.csv",
            {"frequency_hz": freqs, "psd": detected_spectrum(params, TWO_PI * freqs)},
        )
        config = self._config(fit={"psd": "psd.csv"})
        self.assertEqual(self._run("fit", config), EXIT_OK)

        values = _read_table(self.out_dir / "fit_values.csv")
        self.assertAlmostEqual(float(values["c_q"][0]), 0.93, delta=0.01)
        self.assertAlmostEqual(float(values["eta_d"][0]), 0.31, delta=0.01)
        self.assertTrue((self.out_dir / "fit_report.txt").read_text().strip(), "Report should not be empty")


if __name__ == "__main__":
    unittest.main()
