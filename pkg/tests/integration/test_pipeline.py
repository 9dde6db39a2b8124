"""
Integration tests for the command-line pipeline.

Tests cover:
- Ten-mode simulate and estimate run from the shipped preset
- Occupancy table from multimode, collective and single-mode estimates
- Multimode penalty over the single-mode limit and collective ordering
- Prediction and retrodiction sign relations on the reconstructed ensemble
- Run registry bookkeeping across commands
"""

import json
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from config.constants import EXIT_OK, MANIFEST_NAME, PRESETS_DIR  # noqa: E402
from config.run_registry import RunRegistry  # noqa: E402
from optomech.cli import run  # noqa: E402
from optomech.records import read_csv  # noqa: E402


@pytest.mark.slow
@pytest.mark.acceptance
class TestTenModePipeline(unittest.TestCase):
    """Test the full estimation preset end to end."""

    @classmethod
    def setUpClass(cls):
        cls.test_dir = Path(tempfile.mkdtemp())
        cls.out_dir = cls.test_dir / "out"
        config = str(PRESETS_DIR / "estimation10.json")
        cls.codes = [
            run([command, "--config", config, "--out", str(cls.out_dir), "--threads", "2"])
            for command in ("simulate", "estimate")
        ]

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.test_dir, ignore_errors=True)

    def test_commands_succeed(self):
        self.assertEqual(self.codes, [EXIT_OK, EXIT_OK])

    def test_occupancy_table(self):
        table = read_csv(self.out_dir / "occupancies.csv")
        self.assertEqual(len(table["mode"]), 10)
        multimode = float(table["n_cond_multimode"][0])
        self.assertGreater(float(table["n_cond_single_mode"][0]), 0.0)
        self.assertGreater(multimode, 0.0)
        self.assertTrue(np.all(np.isnan(table["n_cond_single_mode"][1:])), "Single-mode filter covers the defect only")
        # Purest collective mode is at least as pure as any reduced mode
        self.assertLessEqual(float(np.min(table["n_cond_collective"])), multimode + 1e-9)

    def _matrix(self, name):
        return np.loadtxt(self.out_dir / name, delimiter=",", skiprows=1, usecols=range(1, 21))

    def test_single_mode_limit_near_reference(self):
        table = read_csv(self.out_dir / "occupancies.csv")
        limit = float(table["n_cond_single_mode_limit"][0])
        self.assertAlmostEqual(limit, 0.88, delta=0.2 * 0.88, msg="Single-mode optimal limit should be near 0.88")

    def test_multimode_penalty(self):
        table = read_csv(self.out_dir / "occupancies.csv")
        limit = float(table["n_cond_single_mode_limit"][0])
        multimode = float(table["n_cond_multimode"][0])
        self.assertGreaterEqual(multimode, 1.3 * limit, "Spurious modes should raise the defect occupancy by >= 30%")

    def test_collective_between_single_and_multimode(self):
        table = read_csv(self.out_dir / "occupancies.csv")
        limit = float(table["n_cond_single_mode_limit"][0])
        multimode = float(table["n_cond_multimode"][0])
        collective = float(table["n_cond_collective"][0])
        self.assertLessEqual(collective, 1.05 * multimode, "Removing correlations should not add occupancy")
        self.assertGreaterEqual(collective, 0.8 * limit, "Collective defect mode should stay near the single-mode limit")

    def test_retrodiction_sign_relations(self):
        pred = self._matrix("predicted_covariance.csv")
        retro = self._matrix("retrodicted_covariance.csv")
        parity = np.diag(np.tile([1.0, -1.0], 10))
        # XX and YY blocks agree, XY blocks change sign
        np.testing.assert_allclose(retro, parity @ pred @ parity, rtol=1e-5, atol=1e-5 * np.max(np.abs(pred)))

        recon = self._matrix("reconstructed_covariance.csv")
        stderr = self._matrix("reconstructed_stderr.csv")
        expected = 0.5 * (pred + retro)
        outside = np.abs(recon - expected) > 3.0 * stderr + 0.02 * np.abs(expected)
        self.assertLessEqual(
            float(np.mean(outside)), 0.05, "Reconstructed ensemble should follow the sign relations to 3 standard errors"
        )

    def test_reconstructed_covariance_shape(self):
        matrix = np.loadtxt(self.out_dir / "reconstructed_covariance.csv", delimiter=",", skiprows=1, usecols=range(1, 21))
        self.assertEqual(matrix.shape, (20, 20))
        np.testing.assert_allclose(matrix, matrix.T, atol=1e-12)

    def test_manifest_records_seed(self):
        manifest = json.loads((self.out_dir / MANIFEST_NAME).read_text())
        self.assertEqual(manifest["command"], "estimate")
        self.assertEqual(manifest["seed"], 20240601)

    def test_registry_lists_both_runs(self):
        runs = RunRegistry(self.test_dir).list_runs()
        self.assertEqual(sorted(info.command for info in runs), ["estimate", "simulate"])
        self.assertTrue(all(info.status == "ok" for info in runs))


if __name__ == "__main__":
    unittest.main()
