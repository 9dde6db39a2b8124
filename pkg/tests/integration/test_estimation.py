"""
Integration tests for simulation followed by estimation.

Tests cover:
- Prediction error statistics against the sampled-filter error covariance
- Reconstructed covariance against the matched-model expectation
- Retrodiction beating prediction on the same record
"""

import dataclasses
import sys
import unittest
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from config.constants import TWO_PI  # noqa: E402
from optomech.estimator import (  # noqa: E402
    FilterModel,
    discrete_error_covariance,
    expected_reconstruction,
    filter_predict,
    filter_retrodict,
    reconstruct_covariance,
    unconditional_covariance,
)
from optomech.model_core import reference_params  # noqa: E402
from optomech.simulator import TrajectoryConfig, simulate  # noqa: E402

OFFSETS_HZ = (0.0, 2.0e3)


def _params():
    base = reference_params()
    defect = base.defect
    modes = tuple(
        dataclasses.replace(
            defect,
            omega_m=defect.omega_m + TWO_PI * off,
            gamma_opt=TWO_PI * 1.0e3,
            coupling_weight=1.0 if i == 0 else 0.8,
            label=f"m{i}",
        )
        for i, off in enumerate(OFFSETS_HZ)
    )
    return base.replace(modes=modes)


def _run(dt, duration, seed):
    params = _params()
    record = simulate(
        TrajectoryConfig(params=params, dt=dt, duration=duration, seed=seed, record_truth=True)
    )
    model = FilterModel.from_params(params, dt=dt)
    return record, model


@pytest.mark.slow
class TestPredictionError(unittest.TestCase):
    """Test the filter error against its stationary prediction."""

    @classmethod
    def setUpClass(cls):
        cls.record, cls.model = _run(dt=1.0e-6, duration=0.5, seed=3)
        cls.pred = filter_predict(cls.record, cls.model)

    def test_error_covariance_matches_sampled_theory(self):
        start = max(self.pred.converged_at or 0, 20_000)
        error = self.record.truth[start:] - self.pred.means[start:]
        measured = np.cov(error, rowvar=False)
        expected = discrete_error_covariance(self.model)
        for k in range(self.model.size):
            self.assertAlmostEqual(
                measured[k, k] / expected[k, k],
                1.0,
                delta=0.1,
                msg=f"Prediction error variance of quadrature {k}",
            )

    def test_error_far_below_unconditional(self):
        start = max(self.pred.converged_at or 0, 20_000)
        error = self.record.truth[start:] - self.pred.means[start:]
        prior = np.diag(unconditional_covariance(self.model))
        self.assertTrue(np.all(np.var(error, axis=0) < 0.1 * prior), "Record should localize every mode")

    def test_innovation_variance(self):
        tail = self.pred.innovations[20_000:]
        h = self.model.measurement()
        expected = 1.0 + 4.0 * self.model.dt * np.diag(h.T @ discrete_error_covariance(self.model) @ h)
        np.testing.assert_allclose(np.var(tail, axis=0), expected, rtol=0.02)


@pytest.mark.slow
@pytest.mark.acceptance
class TestReconstruction(unittest.TestCase):
    """Test the prediction-retrodiction reconstruction on a fine time grid."""

    @classmethod
    def setUpClass(cls):
        dt = 2.0e-7
        cls.record, cls.model = _run(dt=dt, duration=0.2, seed=8)
        cls.pred = filter_predict(cls.record, cls.model)
        cls.retro = filter_retrodict(cls.record, cls.model)
        cls.recon = reconstruct_covariance(
            cls.pred,
            cls.retro,
            dt,
            1.0e-4,
            1.0e-4,
            5.0e-5,
            unconditional=unconditional_covariance(cls.model),
        )

    def test_reconstruction_matches_expectation(self):
        expected = np.diag(expected_reconstruction(self.model))
        measured = np.diag(self.recon.cov)
        stderr = np.diag(self.recon.stderr)
        for k in range(self.model.size):
            self.assertLess(
                abs(measured[k] - expected[k]),
                5.0 * stderr[k] + 0.1 * expected[k],
                f"Reconstructed variance of quadrature {k}",
            )
        self.assertTrue(self.recon.conditioned)

    def test_retrodiction_beats_prediction(self):
        start, stop = 50_000, self.record.n - 50_000
        truth = self.record.truth[start:stop]
        pred_error = np.mean((truth - self.pred.means[start:stop]) ** 2)
        smooth = 0.5 * (self.pred.means[start:stop] + self.retro.means[start:stop])
        smooth_error = np.mean((truth - smooth) ** 2)
        self.assertLess(smooth_error, pred_error, "Combining past and future should reduce the error")


if __name__ == "__main__":
    unittest.main()
