"""
Unit tests for membrane design helpers.

Tests cover:
- Effective density of a pillar-loaded film
- Clampless dilution factor and quality factor
- Flexural wavevector and strain parameter
- Validation of film and pillar parameters
"""

import math
import sys
import unittest
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from optomech.errors import ConfigError  # noqa: E402
from optomech.membrane import (  # noqa: E402
    FilmProperties,
    PillarGeometry,
    dilution_factor_clampless,
    flexural_wavevector,
    membrane_design_helpers,
    quality_factor,
    rho_eff,
    strain_parameter,
)

OMEGA = 2.0 * math.pi * 1.2e6


def _film():
    return FilmProperties(stress=1.0e9, youngs_modulus=250e9, poisson_ratio=0.23, density=3000.0, thickness=20e-9)


def _pillars(height=400e-9):
    return PillarGeometry(diameter=300e-9, lattice_constant=500e-9, height=height, density=2330.0)


class TestEffectiveDensity(unittest.TestCase):
    """Test the pillar-loaded effective density."""

    def test_bare_film(self):
        self.assertEqual(rho_eff(_film(), _pillars(height=0.0)), 3000.0, "No pillars means film density")

    def test_loaded_film(self):
        film, pillars = _film(), _pillars()
        filling = math.pi / (2 * math.sqrt(3)) * (0.3 / 0.5) ** 2
        loading = 2330.0 * 400e-9 / (3000.0 * 20e-9)
        self.assertAlmostEqual(rho_eff(film, pillars) / (3000.0 * (1 + filling * loading)), 1.0, places=12)
        self.assertGreater(rho_eff(film, pillars), film.density)


class TestDissipationDilution(unittest.TestCase):
    """Test dilution factor and quality factor."""

    def test_dilution_formula(self):
        film = _film()
        expected = 12 * (1 - 0.23**2) * 1e18 / (250e9 * 3000.0 * (20e-9) ** 2 * OMEGA**2)
        self.assertAlmostEqual(dilution_factor_clampless(film, OMEGA) / expected, 1.0, places=12)

    def test_dilution_scales_inverse_square_frequency(self):
        film = _film()
        ratio = dilution_factor_clampless(film, OMEGA) / dilution_factor_clampless(film, 2 * OMEGA)
        self.assertAlmostEqual(ratio, 4.0, places=10)

    def test_quality_factor(self):
        film = _film()
        self.assertAlmostEqual(
            quality_factor(film, OMEGA, 2500.0), 2500.0 * dilution_factor_clampless(film, OMEGA), places=3
        )

    def test_nonpositive_inputs(self):
        with self.assertRaises(ConfigError):
            dilution_factor_clampless(_film(), 0.0)
        with self.assertRaises(ConfigError):
            quality_factor(_film(), OMEGA, -1.0)
        with self.assertRaises(ConfigError):
            strain_parameter(_film(), 0.0)


class TestWaveMechanics(unittest.TestCase):
    """Test wavevector and bending strain."""

    def test_wavevector(self):
        film, pillars = _film(), _pillars()
        expected = OMEGA * math.sqrt(rho_eff(film, pillars) / film.stress)
        self.assertAlmostEqual(flexural_wavevector(film, pillars, OMEGA), expected, places=6)

    def test_strain_parameter_is_small_for_thin_film(self):
        lam = strain_parameter(_film(), 3e-3)
        self.assertAlmostEqual(lam, math.sqrt(250e9 * (20e-9) ** 2 / (12 * 1e9 * 9e-6)), places=15)
        self.assertLess(lam, 1e-3)

    def test_design_bundle(self):
        design = membrane_design_helpers(_film(), _pillars(), OMEGA, 2500.0)
        self.assertAlmostEqual(design.quality_factor, design.dilution_factor * 2500.0, places=3)
        self.assertEqual(design.rho_eff, rho_eff(_film(), _pillars()))


class TestValidation(unittest.TestCase):
    """Test rejection of unphysical materials."""

    def test_incompressible_poisson_ratio(self):
        with self.assertRaises(ConfigError) as ctx:
            FilmProperties(stress=1e9, youngs_modulus=1e11, poisson_ratio=0.5, density=3000.0, thickness=1e-8)
        self.assertEqual(ctx.exception.key, "poisson_ratio")

    def test_negative_stress(self):
        with self.assertRaises(ConfigError):
            FilmProperties(stress=-1e9, youngs_modulus=1e11, poisson_ratio=0.2, density=3000.0, thickness=1e-8)

    def test_negative_pillar_height(self):
        with self.assertRaises(ConfigError):
            PillarGeometry(diameter=1e-7, lattice_constant=5e-7, height=-1e-7, density=2330.0)


if __name__ == "__main__":
    unittest.main()
