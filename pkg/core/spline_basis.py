"""
Quadratic B-spline and integrated-spline (I-spline) bases on [L, U],
with knots placed at quantiles of a beta-kernel smoothed age density.

Basis functions are indexed 1..M in messages and 0..M-1 in arrays.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np
from scipy import optimize, stats
from scipy.interpolate import BSpline

from core.errors import BasisError, KnotPlacementError

logger = logging.getLogger(__name__)

DEGREE = 2
DENSITY_DOMAIN = 120.0
QUANTILE_GRID_SIZE = 4096
QUANTILE_XTOL = 1e-8
MIN_KNOT_GAP = 1e-6


# ============================================================================
# BASIS SPEC
# ============================================================================

@dataclass(frozen=True)
class BasisSpec:
    """
    M quadratic basis functions over the knots zeta_1 < ... < zeta_{M-1}.

    Shared read-only across sampler threads. The cached attributes depend only
    on (M, knots), so a racing first access at worst computes one twice and
    stores an equal value.
    """

    M: int
    knots: Tuple[float, ...]

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        object.__setattr__(self, "knots", knots)
        if self.M < 6:
            raise BasisError(f"basis needs M >= 6, got {self.M}")
        if len(knots) != self.M - 1:
            raise BasisError(f"expected {self.M - 1} knots for M={self.M}, got {len(knots)}")
        if not np.all(np.isfinite(knots)):
            raise BasisError("knots must be finite")
        if np.any(np.diff(knots) <= 0):
            raise BasisError(f"knots must be strictly increasing: {knots}")

    @property
    def L(self) -> float:
        return self.knots[0]

    @property
    def U(self) -> float:
        return self.knots[-1]

    def knot(self, m: int) -> float:
        """zeta_m with 1-based indexing."""
        return self.knots[m - 1]

    @cached_property
    def full_knots(self) -> np.ndarray:
        """Clamped knot vector: boundary knots repeated DEGREE+1 times."""
        k = np.asarray(self.knots)
        return np.concatenate([[k[0]] * DEGREE, k, [k[-1]] * DEGREE])

    @cached_property
    def _bspline(self) -> BSpline:
        return BSpline(self.full_knots, np.eye(self.M), DEGREE, extrapolate=False)

    @cached_property
    def _ispline(self) -> BSpline:
        return self._bspline.antiderivative()

    @cached_property
    def ispline_totals(self) -> np.ndarray:
        """I_m(U) = (t_{m+3} - t_m) / 3 on the clamped vector."""
        t = self.full_knots
        return (t[DEGREE + 1:] - t[:-(DEGREE + 1)]) / (DEGREE + 1)

    def support(self, m: int) -> Tuple[float, float]:
        """Support interval of B_m (1-based)."""
        t = self.full_knots
        return float(t[m - 1]), float(t[m + DEGREE])

    def inflection_interval(self, m_star: int) -> Tuple[float, float]:
        """Central knot interval of the peak basis B_{m*}: [zeta_{m*-1}, zeta_{m*}]."""
        t = self.full_knots
        return float(t[m_star]), float(t[m_star + 1])

    def bspline_values(self, t) -> np.ndarray:
        """B-spline values, zero outside [L, U]."""
        values = self._bspline(np.asarray(t, dtype=float))
        return np.nan_to_num(values, nan=0.0)

    def ispline_values(self, t) -> np.ndarray:
        """I-spline values, held constant outside [L, U]."""
        t = np.clip(np.asarray(t, dtype=float), self.L, self.U)
        values = self._ispline(t)
        # exact zero at L and exact totals at U
        values = np.where(t[..., None] <= self.L, 0.0, values)
        return np.where(t[..., None] >= self.U, self.ispline_totals, values)


# ============================================================================
# SMOOTHED AGE DENSITY
# ============================================================================

class SmoothedAgeDensity:
    """
    Beta-kernel density on [0, 120]. Each sample point t contributes a
    Beta(nu*s + 1, nu*(1-s) + 1) kernel at s = t/120, whose mode is s.
    """

    def __init__(self, time_points: Sequence[float], nu: float):
        points = np.asarray(time_points, dtype=float).ravel()
        if points.size == 0:
            raise BasisError("smoothed age density needs at least one time point")
        if np.any(~np.isfinite(points)) or points.min() < 0 or points.max() > DENSITY_DOMAIN:
            raise BasisError(f"time points must lie in [0, {DENSITY_DOMAIN:g}]")
        if not nu > 0:
            raise BasisError(f"kernel concentration must be positive, got {nu}")
        self.points = points
        self.nu = float(nu)
        s = points / DENSITY_DOMAIN
        self.alpha = nu * s + 1.0
        self.beta = nu * (1.0 - s) + 1.0

    def pdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        x = np.clip(t / DENSITY_DOMAIN, 0.0, 1.0)[..., None]
        density = stats.beta.pdf(x, self.alpha, self.beta).mean(axis=-1) / DENSITY_DOMAIN
        return np.where((t < 0) | (t > DENSITY_DOMAIN), 0.0, density)

    def cdf(self, t) -> np.ndarray:
        x = np.clip(np.asarray(t, dtype=float) / DENSITY_DOMAIN, 0.0, 1.0)[..., None]
        return stats.beta.cdf(x, self.alpha, self.beta).mean(axis=-1)


def smoothed_age_density(time_points: Sequence[float], nu: float) -> SmoothedAgeDensity:
    return SmoothedAgeDensity(time_points, nu)


# ============================================================================
# KNOT PLACEMENT
# ============================================================================

def build_knots(density, M: int, L: float, U: float) -> BasisSpec:
    """
    Place M-1 knots on [L, U]: the boundaries plus interior knots at levels
    k/(M-2), k = 1..M-3, of the density's CDF renormalized to [L, U].

    `density` only needs a vectorized `cdf` method, so frozen scipy
    distributions work as well as SmoothedAgeDensity.
    """
    if M < 6:
        raise BasisError(f"basis needs M >= 6, got {M}")
    if not L < U:
        raise BasisError(f"knot range must satisfy L < U, got [{L}, {U}]")

    lo_mass, hi_mass = float(density.cdf(L)), float(density.cdf(U))
    mass = hi_mass - lo_mass
    if not mass > 0:
        raise KnotPlacementError(f"density has no mass on [{L}, {U}]")

    def renormalized(x):
        return (np.asarray(density.cdf(x), dtype=float) - lo_mass) / mass

    grid = np.linspace(L, U, QUANTILE_GRID_SIZE)
    grid_cdf = np.maximum.accumulate(renormalized(grid))

    interior = []
    for k in range(1, M - 2):
        level = k / (M - 2)
        idx = int(np.searchsorted(grid_cdf, level, side="left"))
        idx = min(max(idx, 1), QUANTILE_GRID_SIZE - 1)
        if grid_cdf[idx] == level:
            interior.append(float(grid[idx]))
            continue
        root = optimize.brentq(
            lambda x: float(renormalized(x)) - level,
            grid[idx - 1], grid[idx], xtol=QUANTILE_XTOL,
        )
        interior.append(float(root))

    knots = np.concatenate([[L], interior, [U]])
    gaps = np.diff(knots)
    if np.any(gaps <= MIN_KNOT_GAP):
        bad = int(np.argmax(gaps <= MIN_KNOT_GAP))
        # knots[bad + 1] collides with knots[bad]; report the interior one
        colliding = bad + 1 if bad + 1 <= M - 3 else bad
        level = colliding / (M - 2)
        raise KnotPlacementError(
            f"quantile knots collide at level {level:.4f} (knot {colliding + 1} = {knots[colliding]:.6f})",
            level=level,
        )

    spec = BasisSpec(M=M, knots=tuple(knots))
    logger.debug(f"Built {M - 1} knots on [{L}, {U}]: {np.round(knots, 3).tolist()}")
    return spec


def build_basis_from_ages(ages: Sequence[float], M: int, L: float, U: float, nu: float) -> BasisSpec:
    """Smooth the observed ages and place quantile knots."""
    return build_knots(smoothed_age_density(ages, nu), M, L, U)


# ============================================================================
# EVALUATION
# ============================================================================

def eval_bspline_basis(spec: BasisSpec, t) -> np.ndarray:
    """B_1..B_M at t; t must lie in [L, U]. Returns shape t.shape + (M,)."""
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < spec.L) or np.any(t > spec.U):
        raise BasisError(f"B-spline evaluation point outside [{spec.L}, {spec.U}]")
    return spec.bspline_values(t)


def eval_ispline_basis(spec: BasisSpec, t) -> np.ndarray:
    """I_1..I_M at t; constant I_m(U) above U and 0 below L."""
    return spec.ispline_values(t)


def eval_curve(spec: BasisSpec, gamma, t):
    """(f(t), f'(t)) for f = sum gamma_m I_m."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (spec.M,):
        raise BasisError(f"coefficient vector must have length {spec.M}, got shape {gamma.shape}")
    value = spec.ispline_values(t) @ gamma
    derivative = spec.bspline_values(t) @ gamma
    return value, derivative
