"""
Coefficient geometry of S-shaped curves.

- Planck-taper window weights that pin the boundary coefficients to zero
  and shrink their neighbours (vanishing end derivatives).
- Prior precision combining a first-difference smoothness penalty with a
  window-weighted magnitude penalty.
- The unimodal cone 0 <= g_1 <= ... <= g_{m*} >= ... >= g_M >= 0 and its
  facet operator on the free coefficients.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.constrained_gaussian import LinearConstraints
from core.errors import ConstraintError

logger = logging.getLogger(__name__)

TAPER_FRACTION = 0.1


# ============================================================================
# WINDOW
# ============================================================================

@dataclass(frozen=True)
class WindowWeights:
    M: int
    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (self.M,):
            raise ConstraintError(f"window needs {self.M} weights, got shape {weights.shape}")
        if np.any(weights < 0) or np.any(weights > 1):
            raise ConstraintError("window weights must lie in [0, 1]")
        object.__setattr__(self, "weights", weights)

    @property
    def free(self) -> np.ndarray:
        """0-based indices of coefficients that are not pinned to zero."""
        return np.flatnonzero(self.weights > 0)

    @property
    def pinned(self) -> np.ndarray:
        return np.flatnonzero(self.weights == 0)


def planck_taper_window(M: int) -> WindowWeights:
    """
    Weights over m = 1..M with M' = M - 4 and m' = m - 2, reflected so that
    the window is symmetric: 0 for m' <= 0, a Planck taper below 0.1 M',
    1 on the plateau.
    """
    if M < 8:
        raise ConstraintError(f"Planck-taper window needs M >= 8, got {M}")
    n = M - 4
    edge = TAPER_FRACTION * n
    weights = np.zeros(M)
    for m in range(1, M + 1):
        mp = m - 2
        mp = min(mp, n + 1 - mp)
        if mp <= 0:
            continue
        if mp < edge:
            weights[m - 1] = 1.0 / (1.0 + np.exp(edge / mp - edge / (n - mp)))
        else:
            weights[m - 1] = 1.0
    return WindowWeights(M=M, weights=weights)


def unit_window(M: int) -> WindowWeights:
    """No pinned coefficients and no tapering (monotone-only model)."""
    return WindowWeights(M=M, weights=np.ones(M))


# ============================================================================
# PRIOR PRECISION
# ============================================================================

@dataclass
class PriorPrecision:
    """Q on the free coefficients; the prior is exp(-gamma'Q gamma / 2)."""

    Q: np.ndarray
    free: np.ndarray
    sigma2_s: float
    sigma2_v: float
    _chol: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def chol(self) -> np.ndarray:
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.Q) if self.Q.size else np.zeros((0, 0))
        return self._chol

    def log_det(self) -> float:
        return float(2.0 * np.log(np.diag(self.chol)).sum())

    def quadratic_form(self, gamma_free: np.ndarray) -> float:
        gamma_free = np.asarray(gamma_free, dtype=float)
        return float(gamma_free @ self.Q @ gamma_free)

    def covariance(self) -> np.ndarray:
        inv_chol = np.linalg.inv(self.chol)
        return inv_chol.T @ inv_chol


def difference_matrix(M: int) -> np.ndarray:
    """(M-1) x M first differences."""
    return np.diff(np.eye(M), axis=0)


def build_prior_precision(sigma2_s: float, sigma2_v: float, window: WindowWeights) -> PriorPrecision:
    if not (sigma2_s > 0 and sigma2_v > 0):
        raise ConstraintError(f"prior variances must be positive, got ({sigma2_s}, {sigma2_v})")
    free = window.free
    D = difference_matrix(window.M)[:, free]
    Q = D.T @ D / sigma2_s + np.diag(1.0 / window.weights[free]) / sigma2_v
    return PriorPrecision(Q=Q, free=free, sigma2_s=float(sigma2_s), sigma2_v=float(sigma2_v))


# ============================================================================
# UNIMODAL CONE
# ============================================================================

def region_membership(gamma, m_star: int) -> bool:
    """Nonnegative, nondecreasing up to m* and nonincreasing after (1-based m*)."""
    gamma = np.asarray(gamma, dtype=float)
    M = gamma.shape[0]
    if not 1 <= m_star <= M:
        raise ConstraintError(f"inflection index must be in 1..{M}, got {m_star}")
    if np.any(gamma < 0):
        return False
    up = np.diff(gamma[:m_star])
    down = np.diff(gamma[m_star - 1:])
    return bool(np.all(up >= 0) and np.all(down <= 0))


@dataclass(frozen=True)
class ConeOperator:
    """
    Facet operator of the pinned cone on the free coordinates
    x = (gamma_3, ..., gamma_{M-2}): D x >= 0 iff gamma is in the cone.
    With an interior peak D has n+1 rows for n free coordinates.
    """

    m_star: int
    M: int
    D: np.ndarray
    left_inverse: np.ndarray

    @property
    def n_free(self) -> int:
        return self.M - 4

    @property
    def peak(self) -> int:
        """1-based peak position among the free coordinates."""
        return self.m_star - 2

    def interior_point(self) -> np.ndarray:
        """Tent peaking at m*; every facet row is strictly positive."""
        i = np.arange(1, self.n_free + 1)
        return (self.n_free + 1 - np.abs(i - self.peak)).astype(float)

    def constraints(self, n_leading: int = 0) -> LinearConstraints:
        """{(beta, x) : D x >= 0} with n_leading unconstrained leading coordinates."""
        F = np.hstack([np.zeros((self.D.shape[0], n_leading)), self.D])
        witness = np.concatenate([np.zeros(n_leading), self.interior_point()])
        return LinearConstraints(F, np.zeros(self.D.shape[0]), witness=witness)


def cone_to_orthant(m_star: int, M: int) -> ConeOperator:
    if M < 8:
        raise ConstraintError(f"unimodal cone needs M >= 8, got {M}")
    if not 3 <= m_star <= M - 2:
        raise ConstraintError(f"inflection index must be in 3..{M - 2}, got {m_star}")
    n = M - 4
    p = m_star - 2
    rows = []
    if p > 1:
        rows.append(np.eye(n)[0])
    for i in range(p - 1):
        row = np.zeros(n)
        row[i], row[i + 1] = -1.0, 1.0
        rows.append(row)
    for i in range(p - 1, n - 1):
        row = np.zeros(n)
        row[i], row[i + 1] = 1.0, -1.0
        rows.append(row)
    if p < n:
        rows.append(np.eye(n)[-1])
    D = np.vstack(rows)
    return ConeOperator(m_star=m_star, M=M, D=D, left_inverse=np.linalg.pinv(D))


def nonnegative_constraints(n_coeff: int, n_leading: int = 0) -> LinearConstraints:
    """{(beta, gamma) : gamma >= 0} for the monotone-only model."""
    F = np.hstack([np.zeros((n_coeff, n_leading)), np.eye(n_coeff)])
    witness = np.concatenate([np.zeros(n_leading), np.ones(n_coeff)])
    return LinearConstraints(F, np.zeros(n_coeff), witness=witness)


def free_to_full(gamma_free: np.ndarray, window: WindowWeights) -> np.ndarray:
    gamma = np.zeros(window.M)
    gamma[window.free] = gamma_free
    return gamma


def unimodal_envelope(x: np.ndarray, peak: int) -> np.ndarray:
    """
    Smallest unimodal majorant of x peaking at `peak` (1-based): running
    maxima from the left up to the peak and from the right down to it.
    """
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    left = np.maximum.accumulate(x[:peak])
    right = np.maximum.accumulate(x[peak - 1:][::-1])[::-1]
    out = np.concatenate([left[:-1], right])
    out[peak - 1] = max(left[-1], right[0])
    return out
