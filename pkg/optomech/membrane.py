"""Closed-form design helpers for pillar-loaded, soft-clamped membranes.

These are the analytic estimates used to size a phononic-crystal membrane
before any finite-element work: the effective density of a region loaded by
a triangular lattice of pillars, the clampless dilution factor, the total
quality factor, the flexural wavevector and the bending strain parameter.
All inputs are SI units (Pa, kg/m^3, m, rad/s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class FilmProperties:
    """Material and stress of the membrane film.

    Attributes:
        stress: Tensile stress sigma (Pa)
        youngs_modulus: E (Pa)
        poisson_ratio: nu
        density: rho (kg/m^3)
        thickness: h (m)
    """

    stress: float
    youngs_modulus: float
    poisson_ratio: float
    density: float
    thickness: float

    def __post_init__(self) -> None:
        for name in ("stress", "youngs_modulus", "density", "thickness"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive", key=name)
        if not 0 <= self.poisson_ratio < 0.5:
            raise ConfigError("Poisson ratio must be in [0, 0.5)", key="poisson_ratio")


@dataclass(frozen=True)
class PillarGeometry:
    """Triangular lattice of cylindrical pillars on the film.

    Attributes:
        diameter: Pillar diameter d (m)
        lattice_constant: Lattice spacing a (m)
        height: Pillar height h_pil (m), zero for a bare film
        density: Pillar density rho_pil (kg/m^3)
    """

    diameter: float
    lattice_constant: float
    height: float
    density: float

    def __post_init__(self) -> None:
        if not self.diameter > 0 or not self.lattice_constant > 0:
            raise ConfigError("pillar diameter and lattice constant must be positive", key="diameter")
        if self.height < 0 or self.density < 0:
            raise ConfigError("pillar height and density must be nonnegative", key="height")


def rho_eff(film: FilmProperties, pillars: PillarGeometry) -> float:
    """Effective density rho [1 + pi/(2 sqrt 3) (rho_pil h_pil / rho h) (d/a)^2]."""
    filling = math.pi / (2.0 * math.sqrt(3.0)) * (pillars.diameter / pillars.lattice_constant) ** 2
    loading = (pillars.density * pillars.height) / (film.density * film.thickness)
    return film.density * (1.0 + filling * loading)


def dilution_factor_clampless(film: FilmProperties, omega: float) -> float:
    """Clampless dilution factor 12 (1 - nu^2) sigma^2 / (E rho h^2 Omega^2)."""
    if not omega > 0:
        raise ConfigError("mode frequency must be positive", key="omega")
    return (
        12.0
        * (1.0 - film.poisson_ratio**2)
        * film.stress**2
        / (film.youngs_modulus * film.density * film.thickness**2 * omega**2)
    )


def quality_factor(film: FilmProperties, omega: float, q_intrinsic: float) -> float:
    """Dissipation-diluted quality factor D_Q * Q_int."""
    if not q_intrinsic > 0:
        raise ConfigError("intrinsic quality factor must be positive", key="q_intrinsic")
    return dilution_factor_clampless(film, omega) * q_intrinsic


def flexural_wavevector(film: FilmProperties, pillars: PillarGeometry, omega: float) -> float:
    """Wavevector k ~ Omega sqrt(rho_eff / sigma) of a tension-dominated film."""
    return omega * math.sqrt(rho_eff(film, pillars) / film.stress)


def strain_parameter(film: FilmProperties, length: float) -> float:
    """Bending parameter lambda = sqrt(E h^2 / (12 sigma L^2))."""
    if not length > 0:
        raise ConfigError("length must be positive", key="length")
    return math.sqrt(film.youngs_modulus * film.thickness**2 / (12.0 * film.stress * length**2))


@dataclass(frozen=True)
class MembraneDesign:
    rho_eff: float
    dilution_factor: float
    quality_factor: float
    wavevector: float


def membrane_design_helpers(
    film: FilmProperties, pillars: PillarGeometry, omega: float, q_intrinsic: float
) -> MembraneDesign:
    """Evaluate all closed-form design values for one mode frequency."""
    return MembraneDesign(
        rho_eff=rho_eff(film, pillars),
        dilution_factor=dilution_factor_clampless(film, omega),
        quality_factor=quality_factor(film, omega, q_intrinsic),
        wavevector=flexural_wavevector(film, pillars, omega),
    )
