"""Williamson decomposition of quadrature covariance matrices.

For a positive definite C there is a real symplectic U with

    U^T C U = diag(nu_1, nu_1, nu_2, nu_2, ...)

in the interleaved (X1, Y1, X2, Y2, ...) ordering used throughout the
package. The collective quadratures r' = U^T r are uncorrelated; nu_i - 1/2 is
the occupancy of collective mode i.

Construction: with M = C^{-1/2}, the antisymmetric matrix M Omega M has a
real Schur form K^T (M Omega M) K made of 2x2 blocks [[0, t], [-t, 0]].
Ordering every block so that t > 0 gives nu = 1/t and U = M K diag(sqrt nu).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.optimize import linear_sum_assignment

from config.constants import WILLIAMSON_TOL

from .errors import ConfigError, NotPositiveDefinite
from .estimator import symplectic_form

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CollectiveBasis:
    """Symplectic transform to uncorrelated collective modes.

    Attributes:
        transform: U, columns are the collective quadrature directions
        symplectic_eigenvalues: nu_i, sorted descending unless matched to modes
        coefficients: Rows of U^T; row 2i + q expresses collective quadrature q of
            mode i in the original quadratures
    """

    transform: np.ndarray
    symplectic_eigenvalues: np.ndarray

    @property
    def coefficients(self) -> np.ndarray:
        return self.transform.T

    @property
    def occupancies(self) -> np.ndarray:
        return self.symplectic_eigenvalues - 0.5

    def diagonal_covariance(self, cov: np.ndarray) -> np.ndarray:
        return self.transform.T @ cov @ self.transform


def is_symplectic(u: np.ndarray, tol: float = 1e-9) -> bool:
    omega = symplectic_form(u.shape[0] // 2)
    return bool(np.max(np.abs(u.T @ omega @ u - omega)) <= tol)


def _align_pair(u: np.ndarray, k: int) -> None:
    """Rotate collective pair k in place so it lines up with original mode k."""
    block = u[2 * k : 2 * k + 2, 2 * k : 2 * k + 2]
    a, b = block[0, 0], block[0, 1]
    c, d = block[1, 0], block[1, 1]
    phi = math.atan2(b - c, a + d)
    rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    u[:, 2 * k : 2 * k + 2] = u[:, 2 * k : 2 * k + 2] @ rot


def symplectic_diagonalize(cov: np.ndarray, match_modes: bool = False) -> CollectiveBasis:
    """Williamson normal form of a covariance matrix.

    Args:
        cov: Symmetric positive definite 2N x 2N matrix
        match_modes: Order collective modes by overlap with the original modes
            instead of by descending eigenvalue, and rotate every pair to be
            closest to its original mode's (X, Y)

    Raises:
        NotPositiveDefinite: If cov is not symmetric positive definite
    """
    cov = np.asarray(cov, dtype=float)
    size = cov.shape[0]
    if cov.shape != (size, size) or size % 2:
        raise ConfigError("covariance must be square with even dimension", key="cov")
    if np.max(np.abs(cov - cov.T)) > WILLIAMSON_TOL * max(1.0, float(np.max(np.abs(cov)))):
        raise NotPositiveDefinite("covariance is not symmetric")
    try:
        linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite("covariance is not positive definite") from exc

    n = size // 2
    omega = symplectic_form(n)
    m = np.real(linalg.sqrtm(np.linalg.inv(cov)))
    m = 0.5 * (m + m.T)
    t, k = linalg.schur(m @ omega @ m, output="real")
    for i in range(n):
        if t[2 * i, 2 * i + 1] < 0:
            k[:, [2 * i, 2 * i + 1]] = k[:, [2 * i + 1, 2 * i]]
            t[[2 * i, 2 * i + 1], :] = t[[2 * i + 1, 2 * i], :]
            t[:, [2 * i, 2 * i + 1]] = t[:, [2 * i + 1, 2 * i]]
    nu = np.array([1.0 / t[2 * i, 2 * i + 1] for i in range(n)])
    u = m @ k @ np.diag(np.repeat(np.sqrt(nu), 2))

    if match_modes:
        weight = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                weight[i, j] = np.sum(u[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] ** 2)
        _, order = linear_sum_assignment(-weight)
    else:
        order = np.argsort(-nu, kind="stable")
    columns = np.concatenate([[2 * j, 2 * j + 1] for j in order])
    u = u[:, columns]
    nu = nu[order]
    if match_modes:
        for i in range(n):
            _align_pair(u, i)

    if not is_symplectic(u):
        raise NotPositiveDefinite(
            "decomposition lost symplecticity", hint="the covariance is too ill-conditioned"
        )
    logger.debug(
        "Williamson decomposition",
        extra={"operation": "symplectic_diagonalize", "n_modes": n, "largest": float(nu.max())},
    )
    return CollectiveBasis(transform=u, symplectic_eigenvalues=nu)


def defect_coefficients(basis: CollectiveBasis, mode: int = 0) -> np.ndarray:
    """Coefficients of collective mode `mode` over the original quadratures, shape (2, 2N)."""
    return basis.coefficients[2 * mode : 2 * mode + 2]


def random_symplectic(n_modes: int, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
    """Random symplectic matrix exp(Omega S) built from a symmetric generator S."""
    s = rng.normal(scale=scale, size=(2 * n_modes, 2 * n_modes))
    s = 0.5 * (s + s.T)
    return linalg.expm(symplectic_form(n_modes) @ s)


def covariance_from_williamson(nu: Sequence[float], s: np.ndarray) -> np.ndarray:
    """C = S^T diag(nu) S for symplectic S."""
    d = np.diag(np.repeat(np.asarray(nu, dtype=float), 2))
    return s.T @ d @ s
