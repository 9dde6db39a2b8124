"""
Unit tests for the linearized optomechanics model.

Tests cover:
- Parameter validation errors
- Mechanical and cavity susceptibilities, detuning-noise symmetry
- Shot-noise limit of the detected spectrum without coupling
- Derived rates, intracavity photons and efficiency budget at the 819 nm operating point
- Dynamical backaction signs on the red side
- Occupancy integrals against mpmath quadratures, including a room-temperature mode
- Ideal sideband-cooling limit and its detuning guard
- Ponderomotive squeezing depth against the efficiency bound, its linearity in
  efficiency and the gain from an angle-dependent homodyne efficiency
- Vacuum passthrough over random draws and invariance under a full turn of theta
- Susceptibility chain against an mpmath evaluation
- Rate identities over random draws and the operating-point rate chain
"""

import math
import sys
import unittest
from pathlib import Path

import mpmath
import numpy as np

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from config.constants import COOLING_IDEAL_OCCUPANCY, TOTAL_EFFICIENCY, TWO_PI  # noqa: E402
from optomech.errors import ConfigError, InvalidDetuning  # noqa: E402
from optomech.model_core import (  # noqa: E402
    CavityMode,
    CouplingParams,
    MechanicalMode,
    SpectrumModel,
    SystemParams,
    cavity_susceptibility,
    coupling_for_cooperativity,
    derived_rates,
    detection_efficiency,
    detected_spectrum,
    efficiency_budget,
    frequency_noise_requirement,
    gamma_qba_bad_cavity,
    ideal_cooling_occupancy,
    intracavity_photons,
    magic_detuning,
    max_squeezing,
    mech_susceptibility,
    occupancy_from_spectrum,
    optical_damping,
    optical_spring,
    post_cavity_efficiency,
    reference_params,
    spurious_detuning_noise,
    squeezing_curve,
    susceptibility_chain,
)
from optomech.tin import angle_dependent_efficiency  # noqa: E402


def _uncoupled(eta_d=0.5, n_th=10.0, q=100.0):
    omega_m = TWO_PI * 1.0e3
    kappa = TWO_PI * 1.0e5
    return SystemParams(
        modes=(MechanicalMode(omega_m=omega_m, gamma_m=omega_m / q, n_th=n_th),),
        cavity=CavityMode.from_linewidth(kappa, magic_detuning(kappa)),
        coupling=CouplingParams.from_mean_field(TWO_PI * 10.0, 0.0),
        eta_d=eta_d,
        theta=0.3,
    )


class TestParameterValidation(unittest.TestCase):
    """Test that unphysical parameters are rejected."""

    def test_low_quality_factor_rejected(self):
        with self.assertRaises(ConfigError):
            MechanicalMode(omega_m=1.0, gamma_m=0.5, n_th=1.0)

    def test_zero_linewidth_rejected(self):
        with self.assertRaises(ConfigError) as ctx:
            MechanicalMode(omega_m=1.0, gamma_m=0.0, n_th=1.0)
        self.assertEqual(ctx.exception.key, "linewidth_hz", "Error should name the offending key")

    def test_decay_channels_must_sum_to_kappa(self):
        with self.assertRaises(ConfigError):
            CavityMode(kappa=10.0, kappa_out=5.0, kappa_in=0.0, kappa_loss=4.0, detuning=-1.0)

    def test_efficiency_outside_unit_interval_rejected(self):
        params = _uncoupled()
        with self.assertRaises(ConfigError):
            params.replace(eta_d=1.2)

    def test_unknown_spectrum_kind_rejected(self):
        with self.assertRaises(ConfigError):
            SpectrumModel("amplitude", _uncoupled())


class TestSusceptibilities(unittest.TestCase):
    """Test the elementary response functions."""

    def test_mechanical_resonance_is_imaginary(self):
        mode = _uncoupled().defect
        chi = mech_susceptibility(mode, mode.omega_m)
        self.assertAlmostEqual(chi.real * mode.gamma_m, 0.0, places=9)
        self.assertAlmostEqual(chi.imag * mode.gamma_m, 1.0, places=9)

    def test_cavity_on_resonance(self):
        kappa = TWO_PI * 1.0e6
        cav = CavityMode.from_linewidth(kappa, 0.0)
        self.assertAlmostEqual(complex(cavity_susceptibility(cav, 0.0)) * kappa, math.sqrt(2.0), places=12)

    def test_detuning_noise_is_even_and_nonnegative(self):
        params = reference_params()
        omega = TWO_PI * np.linspace(1.0e6, 1.3e6, 31)
        s = spurious_detuning_noise(params, omega)
        np.testing.assert_allclose(s, spurious_detuning_noise(params, -omega), rtol=1e-12)
        self.assertTrue(np.all(s >= 0.0))


def _chain_mp(params, omega, theta):
    """Detected-quadrature responses evaluated in mpmath at 40 digits."""
    mp = mpmath.mp
    mp.dps = 40
    mode = params.defect
    cav = params.cavity
    w = mpmath.mpf(omega)
    g = mpmath.mpf(params.coupling.g * mode.coupling_weight)
    abar = mpmath.mpf(params.coupling.mean_field)
    root2 = mpmath.sqrt(2)
    w_m, gamma = mpmath.mpf(mode.omega_m), mpmath.mpf(mode.gamma_m)
    half, det = mpmath.mpf(cav.kappa) / 2, mpmath.mpf(cav.detuning)

    chi_m = w_m / (w_m**2 - w * w - 1j * w * gamma)
    chi_c = (1 / root2) / (half - 1j * det - 1j * w)
    chi_c_neg = mpmath.conj((1 / root2) / (half - 1j * det + 1j * w))
    c_x = 1j * (chi_c_neg - chi_c)
    c_y = -(chi_c_neg + chi_c)

    loop = 1 / (1 + 2 * root2 * g * g * chi_m * c_x)
    delta_x = abar * c_x * loop
    pin_x = root2 * g * chi_m * c_x * loop
    dag_x = mpmath.sqrt(cav.kappa_out) * chi_c_neg * loop
    delta_y = c_y * (abar - 2 * root2 * g * g * chi_m * delta_x)
    pin_y = root2 * g * c_y * chi_m * (1 - 2 * g * pin_x)
    dag_y = 1j * mpmath.sqrt(cav.kappa_out) * chi_c_neg - 2 * root2 * g * g * c_y * chi_m * dag_x

    c, s = mpmath.cos(theta), mpmath.sin(theta)
    out = -mpmath.sqrt(cav.kappa_out)
    return {
        "delta": out * (c * delta_x + s * delta_y),
        "pin": out * (c * pin_x + s * pin_y),
        "aindag": out * (c * dag_x + s * dag_y) + mpmath.expjpi(theta / mpmath.pi) / root2,
    }


class TestSusceptibilityOracle(unittest.TestCase):
    """Test the float susceptibility chain against an mpmath evaluation."""

    def test_chain_matches_high_precision(self):
        params = reference_params()
        offsets = TWO_PI * np.array([-2.0e4, -300.0, -20.0, 0.0, 15.0, 250.0, 3.0e4])
        omegas = params.defect.omega_m + offsets
        for theta in (params.theta, 0.4):
            chi = susceptibility_chain(params, omegas, theta)
            for k, omega in enumerate(omegas):
                exact = _chain_mp(params, float(omega), theta)
                pairs = (
                    ("delta", chi.chi_Delta_theta[k]),
                    ("pin", chi.chi_Pin_theta[k]),
                    ("aindag", chi.chi_aindag_theta["a"][k]),
                )
                for name, value in pairs:
                    reference = complex(exact[name])
                    self.assertLess(
                        abs(value - reference),
                        1e-9 * abs(reference),
                        f"{name} at offset {offsets[k] / TWO_PI:.0f} Hz, theta={theta:.3f}",
                    )


class TestDetectedSpectrum(unittest.TestCase):
    """Test the detected quadrature spectrum."""

    def test_shot_noise_without_coupling(self):
        """Without coupling the detected spectrum is exactly shot noise."""
        params = _uncoupled(eta_d=0.7)
        omega = TWO_PI * np.linspace(-5e4, 5e4, 101)
        for theta in (0.0, 0.7, -1.9):
            spectrum = detected_spectrum(params, omega, theta)
            np.testing.assert_allclose(spectrum, 1.0, rtol=1e-12, err_msg=f"theta={theta}")

    def test_spectrum_is_even_in_frequency(self):
        params = reference_params()
        omega = params.defect.omega_m + TWO_PI * np.linspace(-200.0, 200.0, 41)
        np.testing.assert_allclose(
            detected_spectrum(params, omega), detected_spectrum(params, -omega), rtol=1e-12
        )

    def test_chain_broadcasts_over_arrays(self):
        params = reference_params()
        omega = TWO_PI * np.linspace(1.1e6, 1.2e6, 7).reshape(7, 1)
        chi = susceptibility_chain(params, omega)
        self.assertEqual(chi.chi_Delta_theta.shape, (7, 1), "Susceptibilities keep the input shape")

    def test_vacuum_passthrough_random_draws(self):
        """Without coupling any efficiency, angle and frequency gives shot noise."""
        rng = np.random.default_rng(11)
        for _ in range(100):
            eta = rng.uniform(0.01, 0.948)
            theta = rng.uniform(-math.pi, math.pi)
            omega = TWO_PI * rng.uniform(-2e5, 2e5)
            value = float(detected_spectrum(_uncoupled(eta_d=eta), omega, theta))
            self.assertAlmostEqual(value, 1.0, delta=1e-10, msg=f"eta={eta:.3f} theta={theta:.3f} omega={omega:.4g}")

    def test_full_turn_of_angle_is_invariant(self):
        params = reference_params()
        omega = params.defect.omega_m + TWO_PI * np.linspace(-300.0, 300.0, 61)
        for theta in (-2.1, -0.4, 0.9):
            np.testing.assert_allclose(
                detected_spectrum(params, omega, theta + TWO_PI),
                detected_spectrum(params, omega, theta),
                rtol=1e-10,
                err_msg=f"theta={theta}",
            )


class TestSqueezing(unittest.TestCase):
    """Test ponderomotive squeezing against the efficiency bound."""

    def setUp(self):
        self.params = reference_params()
        self.bound = 0.31 * 0.93 / 1.93

    def test_depth_follows_efficiency_bound(self):
        result = max_squeezing(self.params)
        self.assertGreater(result.depth_db, 0.0)
        self.assertLessEqual(result.depth, self.bound * 1.001, "Depth cannot exceed eta_d C / (1 + C)")
        self.assertAlmostEqual(result.depth / self.bound, 1.0, delta=0.05, msg=f"depth {result.depth:.4f}")

    def test_depth_is_linear_in_efficiency(self):
        theta = max_squeezing(self.params).theta
        low = squeezing_curve(self.params.replace(eta_d=0.2), [theta])[0]
        high = squeezing_curve(self.params.replace(eta_d=0.4), [theta])[0]
        self.assertAlmostEqual((1.0 - high) / (1.0 - low), 2.0, places=9)

    def test_post_cavity_efficiency_removes_output_coupling(self):
        ceiling = self.params.cavity.output_efficiency
        self.assertAlmostEqual(post_cavity_efficiency(self.params), 0.31 / ceiling, places=12)
        lossless = self.params.replace(eta_d=ceiling)
        self.assertAlmostEqual(post_cavity_efficiency(lossless), 1.0, places=12)
        with self.assertRaises(ConfigError):
            post_cavity_efficiency(self.params.replace(eta_d=min(1.0, ceiling * 1.01)))

    def test_angle_dependent_efficiency_deepens_squeezing(self):
        fixed = max_squeezing(self.params)
        tuned = max_squeezing(self.params, efficiency=angle_dependent_efficiency(self.params.cavity))
        self.assertGreater(tuned.depth, fixed.depth, "Cancelling LO raises the efficiency near the optimum")
        self.assertGreater(tuned.depth, 0.155)
        self.assertLessEqual(tuned.depth, 0.408 * 0.93 / 1.93, "Even a perfect homodyne stays below the bound")


class TestDerivedRates(unittest.TestCase):
    """Test rates at the reference operating point."""

    def setUp(self):
        self.params = reference_params()
        self.rates = derived_rates(self.params)

    def test_cooperativity_matches_request(self):
        self.assertAlmostEqual(self.rates.c_q, 0.93, places=10)

    def test_measurement_efficiency(self):
        expected = 0.31 * 0.93 / 1.93
        self.assertAlmostEqual(self.rates.eta_meas, expected, places=10)
        self.assertAlmostEqual(self.rates.heisenberg_ratio, 1.0 / math.sqrt(expected), places=10)

    def test_rate_identities_random_draws(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            eta = rng.uniform(0.05, 0.9)
            c_q = rng.uniform(0.1, 5.0)
            rates = derived_rates(coupling_for_cooperativity(reference_params(eta_d=eta), c_q))
            label = f"eta={eta:.3f} C={c_q:.3f}"
            self.assertAlmostEqual(rates.eta_meas / (eta * c_q / (1.0 + c_q)), 1.0, places=9, msg=label)
            self.assertAlmostEqual(rates.heisenberg_ratio * math.sqrt(rates.eta_meas), 1.0, places=9, msg=label)
            self.assertAlmostEqual(rates.gamma_meas / (eta * rates.gamma_qba), 1.0, places=9, msg=label)
            self.assertAlmostEqual(
                16.0 * rates.gamma_meas * rates.n_imp / self.params.defect.gamma_m, 1.0, places=9, msg=label
            )

    def test_operating_point_rate_chain(self):
        self.assertAlmostEqual(self.rates.gamma_meas / (TWO_PI * 11.0e3), 1.0, delta=0.15)
        self.assertAlmostEqual(self.rates.eta_meas, 0.16, delta=0.02)
        self.assertAlmostEqual(self.rates.heisenberg_ratio, 2.5, delta=0.1)
        # 4.09e-8 at eta_d = 0.31; 3.6e-8 needs a measurement rate near 11.1 kHz
        self.assertAlmostEqual(self.rates.n_imp / 3.6e-8, 1.0, delta=0.15)

    def test_rescaled_cooperativity(self):
        rescaled = coupling_for_cooperativity(self.params, 2.5)
        self.assertAlmostEqual(derived_rates(rescaled).c_q, 2.5, places=9)

    def test_red_detuning_damps_and_softens(self):
        self.assertGreater(optical_damping(self.params), 0.0, "Red side should damp")
        self.assertLess(optical_spring(self.params), 0.0, "Red side should soften")

    def test_bad_cavity_backaction_scales_with_cooperativity(self):
        doubled = coupling_for_cooperativity(self.params, 2.0 * self.rates.c_q)
        ratio = gamma_qba_bad_cavity(doubled) / gamma_qba_bad_cavity(self.params)
        self.assertAlmostEqual(ratio, 2.0, places=9)

    def test_intracavity_photons(self):
        expected = (self.params.coupling.g / self.params.coupling.g0) ** 2
        self.assertAlmostEqual(intracavity_photons(self.params) / expected, 1.0, places=9)
        self.assertEqual(intracavity_photons(_uncoupled()), 0.0)

    def test_efficiency_budget(self):
        self.assertAlmostEqual(detection_efficiency(), TOTAL_EFFICIENCY, delta=1e-3)
        self.assertAlmostEqual(detection_efficiency(1.0) * 0.75, detection_efficiency(), places=12)
        budget = efficiency_budget()
        budget["homodyne"] = 0.0
        self.assertGreater(detection_efficiency(), 0.0, "Budget must be returned as a copy")

    def test_frequency_noise_requirement(self):
        expected = 159.0**2 / (5.3e6 * 6.41e-3)
        self.assertAlmostEqual(frequency_noise_requirement(self.params) / expected, 1.0, places=9)


class TestOccupancy(unittest.TestCase):
    """Test the occupancy integral."""

    def test_uncoupled_occupancy_matches_mpmath(self):
        params = _uncoupled(n_th=10.0, q=100.0)
        mode = params.defect
        w_m, gamma = mode.omega_m, mode.gamma_m

        def integrand(w):
            return (w_m**2 * 2 * gamma * (mode.n_th + 0.5) * abs(w) / w_m) / ((w_m**2 - w * w) ** 2 + (w * gamma) ** 2)

        mpmath.mp.dps = 30
        exact = mpmath.quad(integrand, [-mpmath.inf, -w_m, 0, w_m, mpmath.inf]) / (2 * mpmath.pi)
        result = occupancy_from_spectrum(SpectrumModel("mechanical_position", params))
        self.assertAlmostEqual(result.occupancy, float(exact) - 0.5, delta=1e-6 * float(exact))

    def test_room_temperature_occupancy_matches_mpmath(self):
        params = _uncoupled(n_th=5.3e6, q=1.0e3)
        mode = params.defect
        w_m, gamma = mode.omega_m, mode.gamma_m

        def integrand(w):
            return (w_m**2 * 2 * gamma * (mode.n_th + 0.5) * abs(w) / w_m) / ((w_m**2 - w * w) ** 2 + (w * gamma) ** 2)

        mpmath.mp.dps = 30
        edges = [w_m - 20 * gamma, w_m, w_m + 20 * gamma]
        points = [-mpmath.inf] + [-e for e in reversed(edges)] + [0] + edges + [mpmath.inf]
        exact = float(mpmath.quad(integrand, points) / (2 * mpmath.pi))
        result = occupancy_from_spectrum(SpectrumModel("mechanical_position", params))
        self.assertAlmostEqual(result.occupancy / (exact - 0.5), 1.0, delta=1e-6)
        self.assertAlmostEqual(result.occupancy / 5.3e6, 1.0, delta=1e-2, msg="Uncoupled mode stays at n_th")

    def test_occupancy_requires_mechanical_spectrum(self):
        with self.assertRaises(ConfigError):
            occupancy_from_spectrum(SpectrumModel("detected_quadrature", _uncoupled()))


class TestSidebandCooling(unittest.TestCase):
    """Test the ideal sideband-cooling limit."""

    def test_ideal_limit_at_magic_detuning(self):
        kappa = 13.5e6
        n = ideal_cooling_occupancy(1.167e6, kappa, magic_detuning(kappa))
        self.assertAlmostEqual(n, COOLING_IDEAL_OCCUPANCY, delta=0.05)

    def test_blue_detuning_rejected(self):
        with self.assertRaises(InvalidDetuning):
            ideal_cooling_occupancy(1.0, 1.0, 0.2)


if __name__ == "__main__":
    unittest.main()
