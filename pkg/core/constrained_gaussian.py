"""
Gaussian mass over linear-inequality regions {x : F x >= g} and exact
sampling from the Gaussian truncated to such a region.

region_probability uses Genz's separation of variables: after whitening,
an LQ factorization makes every constraint bound one coordinate given the
previous ones, so the region mass is the expectation of a product of
univariate normal interval probabilities.

sample_constrained follows exact Hamiltonian dynamics for truncated
Gaussians: in whitened coordinates the trajectories are sinusoids, walls
are hit at closed-form times and the velocity is reflected.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy import linalg, optimize
from scipy.special import ndtr, ndtri

from config import app_config
from core.errors import InfeasibleRegionError, NumericalError, TruncatedSamplingError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
TRAVEL_TIME = np.pi / 2
MIN_HIT_TIME = 1e-9
FEASIBILITY_TOL = 1e-12
CENTER_BOX = 1e6
MAX_VELOCITY_RETRIES = 50


# ============================================================================
# TYPES
# ============================================================================

@dataclass
class GaussianParams:
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        d = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (d, d):
            raise NumericalError(f"mean/covariance shapes disagree: {self.mean.shape} vs {self.cov.shape}")
        try:
            self.chol = np.linalg.cholesky(self.cov) if d else np.zeros((0, 0))
        except np.linalg.LinAlgError:
            raise NumericalError("covariance matrix is not symmetric positive definite")

    @classmethod
    def from_precision(cls, precision: np.ndarray, shift: np.ndarray) -> "GaussianParams":
        """Gaussian with density proportional to exp(-x'Px/2 + shift'x)."""
        precision = np.atleast_2d(np.asarray(precision, dtype=float))
        d = precision.shape[0]
        if d == 0:
            return cls(np.zeros(0), np.zeros((0, 0)))
        try:
            factor = linalg.cho_factor(precision, lower=True)
        except linalg.LinAlgError:
            raise NumericalError("precision matrix is not symmetric positive definite")
        cov = linalg.cho_solve(factor, np.eye(d))
        mean = linalg.cho_solve(factor, np.asarray(shift, dtype=float))
        return cls(mean, 0.5 * (cov + cov.T))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def marginal(self, index) -> "GaussianParams":
        index = np.asarray(index)
        return GaussianParams(self.mean[index], self.cov[np.ix_(index, index)])


class LinearConstraints:
    """Feasible set {x : F x >= g}; rows with g = -inf are inactive."""

    def __init__(self, F, g, witness: Optional[np.ndarray] = None):
        F = np.atleast_2d(np.asarray(F, dtype=float))
        g = np.asarray(g, dtype=float).ravel()
        if F.shape[0] < 1:
            raise InfeasibleRegionError("constraint set needs at least one row")
        if g.shape[0] != F.shape[0]:
            raise InfeasibleRegionError(f"F has {F.shape[0]} rows but g has {g.shape[0]} entries")
        if np.any(np.isnan(g)) or np.any(g == np.inf):
            raise InfeasibleRegionError("bounds must be finite or -inf")
        self.F = F
        self.g = g
        if witness is None:
            witness = self.chebyshev_center
        else:
            witness = np.asarray(witness, dtype=float)
            if witness.shape != (self.dim,) or self.slack(witness).min() < -FEASIBILITY_TOL:
                raise InfeasibleRegionError("witness point violates the constraints")
        self.witness = witness

    @property
    def dim(self) -> int:
        return self.F.shape[1]

    def slack(self, x: np.ndarray) -> np.ndarray:
        active = np.isfinite(self.g)
        out = np.full(self.g.shape, np.inf)
        out[active] = self.F[active] @ x - self.g[active]
        return out

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        return bool(self.slack(x).min() >= -tol)

    @cached_property
    def chebyshev_center(self) -> np.ndarray:
        """Center of a largest inscribed ball (radius capped at 1) inside a large box."""
        active = np.isfinite(self.g)
        F, g = self.F[active], self.g[active]
        norms = np.linalg.norm(F, axis=1)
        if np.any((norms == 0) & (g > 0)):
            raise InfeasibleRegionError("constraint 0 >= g with g > 0 cannot be met")
        keep = norms > 0
        F, g, norms = F[keep], g[keep], norms[keep]
        d = self.dim
        if F.shape[0] == 0:
            return np.zeros(d)
        objective = np.zeros(d + 1)
        objective[-1] = -1.0
        A_ub = np.hstack([-F, norms[:, None]])
        bounds = [(-CENTER_BOX, CENTER_BOX)] * d + [(None, 1.0)]
        result = optimize.linprog(objective, A_ub=A_ub, b_ub=-g, bounds=bounds, method="highs")
        if result.status != 0 or result.x[-1] <= FEASIBILITY_TOL:
            raise InfeasibleRegionError("constraint region has an empty interior")
        return result.x[:d]


# ============================================================================
# REGION PROBABILITY
# ============================================================================

def _truncated_standard_normal(lo: np.ndarray, hi: np.ndarray, u: np.ndarray):
    """Interval mass of N(0,1) on [lo, hi] and an inverse-CDF draw from it."""
    upper_tail = lo > 0
    # upper-tail form keeps precision when the interval sits far right
    c_lo = np.where(upper_tail, ndtr(-lo), ndtr(lo))
    c_hi = np.where(upper_tail, ndtr(-hi), ndtr(hi))
    prob = np.clip(np.where(upper_tail, c_lo - c_hi, c_hi - c_lo), 0.0, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        draw = np.where(
            upper_tail,
            -ndtri(c_lo - u * (c_lo - c_hi)),
            ndtri(c_lo + u * (c_hi - c_lo)),
        )
    fallback = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    draw = np.where(np.isfinite(draw) & (prob > 0), draw, fallback)
    return prob, np.clip(draw, lo, hi)


def region_probability(
    p: GaussianParams,
    c: LinearConstraints,
    n_mc: int = app_config.GENZ_N_MC,
    seed=None,
) -> Tuple[float, float]:
    """
    Monte Carlo estimate of P(F x >= g) for x ~ N(mean, cov).

    Returns (estimate, standard error). Deterministic given seed; passing
    the same seed for two parameter settings gives common random numbers.
    """
    if c.dim != p.dim:
        raise NumericalError(f"constraint dimension {c.dim} does not match Gaussian dimension {p.dim}")
    if n_mc < 2:
        raise NumericalError(f"n_mc must be at least 2, got {n_mc}")

    active = np.isfinite(c.g)
    F, g = c.F[active], c.g[active]
    if F.shape[0] == 0:
        return 1.0, 0.0

    A = F @ p.chol
    b = g - F @ p.mean
    scale = np.linalg.norm(A, axis=1)
    null = scale <= 1e-14 * max(1.0, scale.max())
    if np.any(null & (b > 0)):
        return 0.0, 0.0
    A, b, scale = A[~null], b[~null], scale[~null]
    if A.shape[0] == 0:
        return 1.0, 0.0
    A = A / scale[:, None]
    b = b / scale

    # A z = C w with w = Q'z standard normal and C lower trapezoidal
    _, R = np.linalg.qr(A.T)
    C = R.T
    k = C.shape[1]
    nonzero = np.abs(C) > 1e-12
    pivot = np.where(nonzero.any(axis=1), k - 1 - np.argmax(nonzero[:, ::-1], axis=1), -1)
    if np.any((pivot < 0) & (b > 0)):
        return 0.0, 0.0

    rng = np.random.default_rng(seed)
    uniforms = rng.random((n_mc, k))
    W = np.zeros((n_mc, k))
    weight = np.ones(n_mc)
    for j in range(k):
        rows = np.flatnonzero(pivot == j)
        lo = np.full(n_mc, -np.inf)
        hi = np.full(n_mc, np.inf)
        if rows.size:
            partial = W[:, :j] @ C[rows, :j].T
            bounds = (b[rows] - partial) / C[rows, j]
            positive = C[rows, j] > 0
            if positive.any():
                lo = bounds[:, positive].max(axis=1)
            if (~positive).any():
                hi = bounds[:, ~positive].min(axis=1)
        prob, W[:, j] = _truncated_standard_normal(lo, hi, uniforms[:, j])
        weight *= prob

    estimate = float(weight.mean())
    std_error = float(weight.std(ddof=1) / np.sqrt(n_mc))
    return estimate, std_error


# ============================================================================
# EXACT HMC SAMPLER
# ============================================================================

def _next_hit(f: np.ndarray, h: np.ndarray, a: np.ndarray, b: np.ndarray):
    """
    First time the trajectory x(t) = a sin t + b cos t reaches a wall
    f_i x + h_i = 0, and the wall index. (inf, -1) if none in (0, 2pi).
    """
    fa = f @ a
    fb = f @ b
    u = np.hypot(fa, fb)
    reachable = u > np.abs(h)
    if not np.any(reachable):
        return np.inf, -1
    phi = np.arctan2(-fa[reachable], fb[reachable])
    base = np.arccos(np.clip(-h[reachable] / u[reachable], -1.0, 1.0))
    roots = np.stack([(base - phi) % TWO_PI, (-base - phi) % TWO_PI])
    roots = np.where(roots > MIN_HIT_TIME, roots, np.inf).min(axis=0)
    j = int(np.argmin(roots))
    return float(roots[j]), int(np.flatnonzero(reachable)[j])


def _trajectory(f, h, z, rng, max_bounces):
    """One trajectory of length pi/2 from z; None if the velocity must be redrawn."""
    a = rng.standard_normal(z.shape[0])
    b = z.copy()
    remaining = TRAVEL_TIME
    bounces = 0
    while True:
        t, wall = _next_hit(f, h, a, b)
        if wall < 0 or t >= remaining:
            break
        remaining -= t
        position = np.sin(t) * a + np.cos(t) * b
        velocity = np.cos(t) * a - np.sin(t) * b
        row = f[wall]
        velocity = velocity - 2.0 * (row @ velocity) / (row @ row) * row
        if row @ velocity < 0:
            return None
        a, b = velocity, position
        bounces += 1
        if bounces > max_bounces:
            raise TruncatedSamplingError(f"trajectory exceeded {max_bounces} wall bounces")
    return np.sin(remaining) * a + np.cos(remaining) * b


def _strictly_feasible_start(c: LinearConstraints, init: np.ndarray) -> np.ndarray:
    slack = c.slack(init)
    if slack.min() < -FEASIBILITY_TOL * max(1.0, np.abs(init).max()):
        raise InfeasibleRegionError(f"initial point violates constraints (min slack {slack.min():.3e})")
    if slack.min() > 0:
        return init
    center = c.chebyshev_center
    step = 1e-8
    while step <= 1.0:
        moved = init + step * (center - init)
        if c.slack(moved).min() > 0:
            logger.debug(f"Moved boundary start inward by {step:g} toward the Chebyshev center")
            return moved
        step *= 10.0
    raise InfeasibleRegionError("could not find a strictly feasible start near the initial point")


def sample_constrained(
    p: GaussianParams,
    c: LinearConstraints,
    n: int,
    seed=None,
    init: Optional[np.ndarray] = None,
    warmup: int = 0,
    max_bounces: int = app_config.HMC_MAX_BOUNCES,
) -> np.ndarray:
    """
    n draws (n x d) of a Markov chain whose stationary law is N(mean, cov)
    restricted to {F x >= g}. `seed` may be an int, SeedSequence or Generator.
    """
    if c.dim != p.dim:
        raise NumericalError(f"constraint dimension {c.dim} does not match Gaussian dimension {p.dim}")
    rng = np.random.default_rng(seed)
    x0 = c.witness if init is None else np.asarray(init, dtype=float)
    x0 = _strictly_feasible_start(c, x0)

    active = np.isfinite(c.g)
    F, g = c.F[active], c.g[active]
    # whitened frame: x = mean + L z, walls f z + h >= 0
    f = F @ p.chol
    h = F @ p.mean - g
    z = linalg.solve_triangular(p.chol, x0 - p.mean, lower=True)

    draws = np.empty((n, p.dim))
    for i in range(warmup + n):
        for _ in range(MAX_VELOCITY_RETRIES):
            proposal = _trajectory(f, h, z, rng, max_bounces)
            if proposal is None:
                continue
            x = p.mean + p.chol @ proposal
            if c.slack(x).min() >= -FEASIBILITY_TOL:
                z = proposal
                break
        else:
            raise TruncatedSamplingError(
                f"no constraint-satisfying trajectory after {MAX_VELOCITY_RETRIES} velocity draws"
            )
        if i >= warmup:
            draws[i - warmup] = x
    return draws
