"""
Hierarchical random-effects model

    y_ijk = f_k(t_ij) + x_i' beta_k + omega_ik + eps_ijk

with f_k an I-spline curve (or a logistic curve for the parametric
comparator), plus the Gaussian full conditional of (beta_k, gamma_k).
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import stats
from scipy.special import expit

from core.constrained_gaussian import GaussianParams
from core.data_model import LongitudinalDataset
from core.errors import NumericalError
from core.shape_constraints import (
    PriorPrecision,
    WindowWeights,
    build_prior_precision,
    planck_taper_window,
    region_membership,
    unit_window,
)
from core.spline_basis import BasisSpec, eval_ispline_basis
from schemas.model_config import ConstraintMode, ModelConfig

logger = logging.getLogger(__name__)

LOGISTIC_PARAMS = ("c", "s", "h")


# ============================================================================
# STATE
# ============================================================================

@dataclass
class ModelState:
    beta: np.ndarray                 # K x q
    gamma: np.ndarray                # K x M, zeros for the logistic model
    omega: np.ndarray                # N x K
    sigma2_obs: float
    sigma2_rnd: float
    sigma2_s: float
    sigma2_v: float
    m_star: Dict[str, int]           # group -> inflection index (1-based)
    biomarker_groups: Tuple[str, ...]
    logistic: Optional[np.ndarray] = None   # K x 3 columns (c, s, h)

    def copy(self) -> "ModelState":
        return replace(
            self,
            beta=self.beta.copy(),
            gamma=self.gamma.copy(),
            omega=self.omega.copy(),
            m_star=dict(self.m_star),
            logistic=None if self.logistic is None else self.logistic.copy(),
        )

    def m_star_of(self, k: int) -> int:
        return self.m_star[self.biomarker_groups[k]]


def logistic_curve(t, c: float, s: float, h: float) -> np.ndarray:
    """h / (1 + exp(-(t - c) / s))"""
    return h * expit((np.asarray(t, dtype=float) - c) / s)


def window_for(config: ModelConfig) -> WindowWeights:
    if config.variant == ConstraintMode.S_SHAPED:
        return planck_taper_window(config.M)
    return unit_window(config.M)


# ============================================================================
# CONTEXT
# ============================================================================

@dataclass
class ModelContext:
    """Everything a sampler step reads but never changes."""

    dataset: LongitudinalDataset
    basis: BasisSpec
    config: ModelConfig
    window: WindowWeights = field(default=None)

    def __post_init__(self):
        if self.window is None:
            self.window = window_for(self.config)

    @cached_property
    def ispline(self) -> np.ndarray:
        """I(t_ij) for every visit, R x M."""
        return eval_ispline_basis(self.basis, self.dataset.ages)

    @cached_property
    def ispline_free(self) -> np.ndarray:
        return self.ispline[:, self.window.free]

    @cached_property
    def design(self) -> np.ndarray:
        """x_i for every visit, R x q."""
        return self.dataset.X[self.dataset.subject_index]

    @cached_property
    def observed_rows(self) -> List[np.ndarray]:
        return [np.flatnonzero(self.dataset.observed[:, k]) for k in range(self.dataset.K)]

    @cached_property
    def observed_counts(self) -> np.ndarray:
        return self.dataset.observed_counts()

    @cached_property
    def group_members(self) -> Dict[str, List[int]]:
        if self.config.share_inflection:
            return self.dataset.group_members()
        return {name: [k] for k, name in enumerate(self.dataset.biomarker_names)}

    @property
    def biomarker_groups(self) -> Tuple[str, ...]:
        groups = [""] * self.dataset.K
        for g, members in self.group_members.items():
            for k in members:
                groups[k] = g
        return tuple(groups)

    @property
    def is_logistic(self) -> bool:
        return self.config.variant == ConstraintMode.LOGISTIC_PARAMETRIC


def initial_state(context: ModelContext) -> ModelState:
    """
    Deterministic strictly feasible start: a symmetric tent peaking at
    ceil(M/2) scaled to 0.1, zero fixed and random effects, variances at
    their prior means.
    """
    ds, config = context.dataset, context.config
    M = config.M
    m0 = int(np.ceil(M / 2))
    gamma = np.zeros((ds.K, M))
    if config.variant == ConstraintMode.S_SHAPED:
        positions = np.arange(1, M + 1)
        tent = (M - np.abs(positions - m0)).astype(float)
        tent[context.window.pinned] = 0.0
        gamma[:] = 0.1 * tent / tent.max()
    elif config.variant == ConstraintMode.MONOTONE_ONLY:
        gamma[:] = 0.1
    ig_mean = config.variance_prior_scale / (config.variance_prior_shape - 1)
    hyper_mean = 2.0 * config.hyper_scale ** 2
    logistic = None
    if context.is_logistic:
        prior_means = [config.logistic_prior_c[0], config.logistic_prior_s[0], config.logistic_prior_h[0]]
        logistic = np.tile(prior_means, (ds.K, 1)).astype(float)
    return ModelState(
        beta=np.zeros((ds.K, ds.q)),
        gamma=gamma,
        omega=np.zeros((ds.N, ds.K)),
        sigma2_obs=ig_mean,
        sigma2_rnd=ig_mean,
        sigma2_s=hyper_mean,
        sigma2_v=hyper_mean,
        m_star={g: m0 for g in context.group_members},
        biomarker_groups=context.biomarker_groups,
        logistic=logistic,
    )


# ============================================================================
# LIKELIHOOD AND PRIOR
# ============================================================================

def curve_values(state: ModelState, ds: LongitudinalDataset, basis: BasisSpec,
                 ispline: Optional[np.ndarray] = None) -> np.ndarray:
    """f_k(t_ij) for every visit and biomarker, R x K."""
    if state.logistic is not None:
        c, s, h = state.logistic.T
        return logistic_curve(ds.ages[:, None], c, s, h)
    if ispline is None:
        ispline = eval_ispline_basis(basis, ds.ages)
    return ispline @ state.gamma.T


def residuals(state: ModelState, ds: LongitudinalDataset, basis: BasisSpec,
              ispline: Optional[np.ndarray] = None) -> np.ndarray:
    """y - f - x'beta - omega with masked cells set to 0."""
    mean = (
        curve_values(state, ds, basis, ispline)
        + ds.X[ds.subject_index] @ state.beta.T
        + state.omega[ds.subject_index]
    )
    return np.where(ds.observed, ds.outcomes_filled() - mean, 0.0)


def log_likelihood(state: ModelState, ds: LongitudinalDataset, basis: BasisSpec,
                   ispline: Optional[np.ndarray] = None) -> float:
    resid = residuals(state, ds, basis, ispline)
    return float(stats.norm.logpdf(resid[ds.observed], scale=np.sqrt(state.sigma2_obs)).sum())


def log_hyperprior(sigma2: float, scale: float) -> float:
    """Exponential in sigma^2: density exp(-sigma^2 / (2 scale^2)) / (2 scale^2)."""
    return float(stats.expon.logpdf(sigma2, scale=2.0 * scale ** 2))


def gamma_log_density(gamma_free: np.ndarray, precision: PriorPrecision) -> float:
    """Unnormalized-by-truncation Gaussian log density N(gamma_free; 0, Q^-1)."""
    n = precision.Q.shape[0]
    return 0.5 * precision.log_det() - 0.5 * n * np.log(2 * np.pi) - 0.5 * precision.quadratic_form(gamma_free)


def logistic_log_prior(params: np.ndarray, config: ModelConfig) -> float:
    """Truncated-normal priors on (c, s, h), each restricted to positive values."""
    total = 0.0
    for value, (mean, sd) in zip(params, (config.logistic_prior_c, config.logistic_prior_s, config.logistic_prior_h)):
        if value <= 0:
            return -np.inf
        total += stats.truncnorm.logpdf(value, a=-mean / sd, b=np.inf, loc=mean, scale=sd)
    return float(total)


def log_prior(state: ModelState, config: ModelConfig, window: WindowWeights) -> float:
    """
    Sum of all prior log densities except the truncation constant of the
    gamma prior; -inf when a shape constraint is violated.
    """
    a, b = config.variance_prior_shape, config.variance_prior_scale
    total = stats.invgamma.logpdf(state.sigma2_obs, a, scale=b)
    total += stats.invgamma.logpdf(state.sigma2_rnd, a, scale=b)
    total += stats.norm.logpdf(state.beta, scale=config.beta_prior_sd).sum()
    total += stats.norm.logpdf(state.omega, scale=np.sqrt(state.sigma2_rnd)).sum()

    if config.variant == ConstraintMode.LOGISTIC_PARAMETRIC:
        for params in state.logistic:
            total += logistic_log_prior(params, config)
        return float(total)

    scale = config.hyper_scale
    total += log_hyperprior(state.sigma2_s, scale) + log_hyperprior(state.sigma2_v, scale)
    precision = build_prior_precision(state.sigma2_s, state.sigma2_v, window)
    for k, gamma in enumerate(state.gamma):
        if np.any(gamma[window.pinned] != 0) or np.any(gamma < 0):
            return -np.inf
        if config.variant == ConstraintMode.S_SHAPED and not region_membership(gamma, state.m_star_of(k)):
            return -np.inf
        total += gamma_log_density(gamma[window.free], precision)
    return float(total)


# ============================================================================
# FULL CONDITIONALS
# ============================================================================

def _gaussian_regression(Z: np.ndarray, target: np.ndarray, prior_precision: np.ndarray,
                         sigma2_obs: float) -> GaussianParams:
    precision = prior_precision + Z.T @ Z / sigma2_obs
    shift = Z.T @ target / sigma2_obs
    try:
        return GaussianParams.from_precision(0.5 * (precision + precision.T), shift)
    except NumericalError as e:
        raise NumericalError(f"coefficient conditional is singular: {e}")


def conditional_coeff_gaussian(
    k: int,
    state: ModelState,
    ds: LongitudinalDataset,
    basis: BasisSpec,
    window: WindowWeights,
    config: Optional[ModelConfig] = None,
    ispline: Optional[np.ndarray] = None,
) -> GaussianParams:
    """
    Untruncated Gaussian conditional of (beta_k, gamma_k,free):
    precision blockdiag(I / V_beta, Q) + Z'Z / sigma2_obs, where each row of
    Z stacks x_i and the free I-spline values at t_ij.
    """
    config = config or ModelConfig(M=basis.M)
    rows = np.flatnonzero(ds.observed[:, k])
    if ispline is None:
        ispline = eval_ispline_basis(basis, ds.ages)
    Z = np.hstack([ds.X[ds.subject_index[rows]], ispline[np.ix_(rows, window.free)]])
    target = ds.Y[rows, k] - state.omega[ds.subject_index[rows], k]

    prior = build_prior_precision(state.sigma2_s, state.sigma2_v, window) if window.free.size else None
    q, n = ds.q, window.free.size
    prior_precision = np.zeros((q + n, q + n))
    prior_precision[:q, :q] = np.eye(q) / config.beta_prior_sd ** 2
    if prior is not None:
        prior_precision[q:, q:] = prior.Q
    return _gaussian_regression(Z, target, prior_precision, state.sigma2_obs)


def conditional_beta_gaussian(
    k: int,
    state: ModelState,
    ds: LongitudinalDataset,
    curve: np.ndarray,
    config: ModelConfig,
) -> GaussianParams:
    """Conditional of beta_k given a fixed curve f_k(t_ij) (logistic model)."""
    rows = np.flatnonzero(ds.observed[:, k])
    Z = ds.X[ds.subject_index[rows]]
    target = ds.Y[rows, k] - curve[rows] - state.omega[ds.subject_index[rows], k]
    prior_precision = np.eye(ds.q) / config.beta_prior_sd ** 2
    return _gaussian_regression(Z, target, prior_precision, state.sigma2_obs)
