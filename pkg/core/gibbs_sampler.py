"""
Gibbs sampler for the shape-constrained hierarchical model.

One iteration, in order:
  1. inflection indices (S-shaped model) and (beta_k, gamma_k) jointly from
     their truncated Gaussian conditionals; logistic model: beta_k and a
     Metropolis move on log(c, s, h)
  2. sigma2_obs, sigma2_rnd (conjugate inverse-gamma)
  3. random effects omega_ik (conjugate normal)
  4. (sigma2_s, sigma2_v) by adaptive random-walk Metropolis in log space

The hyperparameter move uses Monte Carlo estimates of the prior's
truncation constant with common random numbers in numerator and
denominator, so it is a pseudo-marginal approximation.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import logsumexp

from config import app_config
from core.constrained_gaussian import (
    GaussianParams,
    LinearConstraints,
    region_probability,
    sample_constrained,
)
from core.errors import NumericalError, SamplerStepError, ShapeSplineError
from core.hier_model import (
    LOGISTIC_PARAMS,
    ModelContext,
    ModelState,
    conditional_beta_gaussian,
    conditional_coeff_gaussian,
    gamma_log_density,
    initial_state,
    log_hyperprior,
    log_likelihood,
    logistic_curve,
    logistic_log_prior,
    residuals,
)
from core.shape_constraints import (
    WindowWeights,
    build_prior_precision,
    cone_to_orthant,
    nonnegative_constraints,
    unimodal_envelope,
)
from schemas.model_config import ConstraintMode, ModelConfig, SamplerConfig

logger = logging.getLogger(__name__)

SEED_BOUND = 2 ** 63 - 1
Z_RETRY_FACTOR = 4
ADAPT_EXPONENT = 0.6
SWITCH_OFFSET = 1e-6


# ============================================================================
# ADAPTATION
# ============================================================================

@dataclass
class AdaptState:
    """Robbins-Monro tuning of a log proposal scale toward a target acceptance rate."""

    log_step: float
    target: float = app_config.TARGET_ACCEPT
    n_adapt: int = 0
    n_proposed: int = 0
    n_accepted: int = 0

    @property
    def step(self) -> float:
        return float(np.exp(self.log_step))

    def record(self, accepted: bool, adapting: bool) -> None:
        self.n_proposed += 1
        self.n_accepted += int(accepted)
        if adapting:
            self.n_adapt += 1
            self.log_step += self.n_adapt ** -ADAPT_EXPONENT * (float(accepted) - self.target)

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposed if self.n_proposed else 0.0


# ============================================================================
# CONSTRAINT SETS
# ============================================================================

# Called from chain and biomarker threads. lru_cache may build an entry twice
# under a race; both builds are equal, so draws do not depend on timing.
@lru_cache(maxsize=None)
def cone_constraints(m_star: int, M: int, n_leading: int = 0) -> LinearConstraints:
    return cone_to_orthant(m_star, M).constraints(n_leading)


@lru_cache(maxsize=None)
def orthant_constraints(n_coeff: int, n_leading: int = 0) -> LinearConstraints:
    return nonnegative_constraints(n_coeff, n_leading)


def candidate_indices(M: int) -> np.ndarray:
    return np.arange(3, M - 1)


def _log_probability(p: GaussianParams, c: LinearConstraints, n_mc: int, seed: int) -> float:
    """log P(region), retrying once with more samples if the estimate is 0."""
    estimate, _ = region_probability(p, c, n_mc, seed)
    if estimate <= 0:
        estimate, _ = region_probability(p, c, Z_RETRY_FACTOR * n_mc, seed)
    return float(np.log(estimate)) if estimate > 0 else -np.inf


# ============================================================================
# INFLECTION INDICES
# ============================================================================

def inflection_index_weights(marginals: Sequence[GaussianParams], M: int, n_mc: int, seed: int) -> np.ndarray:
    """
    Unnormalized log weights over m* = 3..M-2 for one group:
    sum over members of log P(gamma_free in cone m*) under each member's
    conditional gamma marginal. All candidates share one random stream.
    """
    candidates = candidate_indices(M)
    log_w = np.zeros(candidates.size)
    for i, m in enumerate(candidates):
        constraints = cone_constraints(int(m), M)
        for marginal in marginals:
            log_w[i] += _log_probability(marginal, constraints, n_mc, seed)
            if log_w[i] == -np.inf:
                break
    if not np.any(np.isfinite(log_w)):
        raise NumericalError(f"all inflection-index weights are zero for a group of {len(marginals)} biomarkers")
    return log_w


def draw_index(log_weights: np.ndarray, M: int, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from the normalized weights; returns a 1-based index."""
    weights = np.exp(log_weights - np.max(log_weights))
    cdf = np.cumsum(weights)
    u = rng.random() * cdf[-1]
    i = min(int(np.searchsorted(cdf, u, side="right")), cdf.size - 1)
    return int(candidate_indices(M)[i])


def coefficient_conditionals(state: ModelState, context: ModelContext) -> List[GaussianParams]:
    return [
        conditional_coeff_gaussian(
            k, state, context.dataset, context.basis, context.window, context.config, context.ispline
        )
        for k in range(context.dataset.K)
    ]


def step_inflection_indices(
    state: ModelState,
    context: ModelContext,
    rng: np.random.Generator,
    n_mc: int = app_config.GENZ_N_MC,
    conditionals: Optional[List[GaussianParams]] = None,
) -> Dict[str, int]:
    """Draw each group's m* from its collapsed conditional."""
    if conditionals is None:
        conditionals = coefficient_conditionals(state, context)
    q = context.dataset.q
    gamma_index = np.arange(q, q + context.window.free.size)
    updated = {}
    for group, members in context.group_members.items():
        seed = int(rng.integers(SEED_BOUND))
        marginals = [conditionals[k].marginal(gamma_index) for k in members]
        log_w = inflection_index_weights(marginals, context.config.M, n_mc, seed)
        updated[group] = draw_index(log_w, context.config.M, rng)
    return updated


# ============================================================================
# COEFFICIENTS
# ============================================================================

def _switch_start(gamma_free: np.ndarray, m_star: int, M: int) -> np.ndarray:
    """Strictly feasible point of the new cone close to the current coefficients."""
    cone = cone_to_orthant(m_star, M)
    envelope = unimodal_envelope(gamma_free, cone.peak)
    tent = cone.interior_point()
    return envelope + SWITCH_OFFSET * max(1.0, float(envelope.max())) * tent / tent.max()


def _draw_coefficients(k, state, context, conditional, previous_m, seed, sampler_config):
    ds, config, window = context.dataset, context.config, context.window
    q = ds.q
    gamma_free = state.gamma[k, window.free]
    warmup = 0
    if config.variant == ConstraintMode.S_SHAPED:
        m_star = state.m_star_of(k)
        constraints = cone_constraints(m_star, config.M, q)
        if previous_m != m_star:
            gamma_free = _switch_start(gamma_free, m_star, config.M)
            warmup = sampler_config.hmc_warmup_on_switch
    else:
        constraints = orthant_constraints(window.free.size, q)
    init = np.concatenate([state.beta[k], gamma_free])
    draw = sample_constrained(conditional, constraints, 1, seed=seed, init=init, warmup=warmup)[0]
    # snap wall contacts within the feasibility tolerance back into the region
    if config.variant == ConstraintMode.S_SHAPED:
        gamma_free = unimodal_envelope(draw[q:], state.m_star_of(k) - 2)
    else:
        gamma_free = np.maximum(draw[q:], 0.0)
    return draw[:q], gamma_free


def step_coefficients(
    state: ModelState,
    context: ModelContext,
    rng: np.random.Generator,
    sampler_config: SamplerConfig,
    conditionals: Optional[List[GaussianParams]] = None,
    previous_m_star: Optional[Dict[str, int]] = None,
    executor: Optional[ThreadPoolExecutor] = None,
) -> None:
    """
    Joint (beta_k, gamma_k,free) draws restricted to R^q x cone. Each
    biomarker gets its own seed drawn up front, so threaded and sequential
    runs agree.
    """
    K = context.dataset.K
    if conditionals is None:
        conditionals = coefficient_conditionals(state, context)
    previous = previous_m_star or state.m_star
    seeds = [int(s) for s in rng.integers(SEED_BOUND, size=K)]

    def work(k):
        return _draw_coefficients(
            k, state, context, conditionals[k], previous.get(state.biomarker_groups[k]), seeds[k], sampler_config
        )

    results = list(executor.map(work, range(K))) if executor else [work(k) for k in range(K)]
    free = context.window.free
    for k, (beta, gamma_free) in enumerate(results):
        state.beta[k] = beta
        state.gamma[k] = 0.0
        state.gamma[k, free] = gamma_free


def step_logistic(
    state: ModelState,
    context: ModelContext,
    rng: np.random.Generator,
    adapt: List[AdaptState],
    adapting: bool,
) -> None:
    """Conjugate beta_k, then random-walk Metropolis on log(c, s, h) per biomarker."""
    ds, config = context.dataset, context.config
    sd = np.sqrt(state.sigma2_obs)
    for k in range(ds.K):
        curve = logistic_curve(ds.ages, *state.logistic[k])
        conditional = conditional_beta_gaussian(k, state, ds, curve, config)
        state.beta[k] = conditional.mean + conditional.chol @ rng.standard_normal(ds.q)

        rows = context.observed_rows[k]
        base = ds.Y[rows, k] - context.design[rows] @ state.beta[k] - state.omega[ds.subject_index[rows], k]
        ages = ds.ages[rows]

        def log_target(log_params):
            params = np.exp(log_params)
            prior = logistic_log_prior(params, config)
            if not np.isfinite(prior):
                return -np.inf
            fit = stats.norm.logpdf(base - logistic_curve(ages, *params), scale=sd).sum()
            return fit + prior + log_params.sum()

        current = np.log(state.logistic[k])
        proposal = current + adapt[k].step * rng.standard_normal(len(LOGISTIC_PARAMS))
        accepted = np.log(rng.random()) < log_target(proposal) - log_target(current)
        if accepted:
            state.logistic[k] = np.exp(proposal)
        adapt[k].record(bool(accepted), adapting)


# ============================================================================
# VARIANCES AND RANDOM EFFECTS
# ============================================================================

def step_variances(state: ModelState, context: ModelContext, rng: np.random.Generator) -> None:
    ds, config = context.dataset, context.config
    a, b = config.variance_prior_shape, config.variance_prior_scale
    resid = residuals(state, ds, context.basis, context.ispline)
    n_obs = int(ds.observed.sum())
    rss = float(np.sum(resid ** 2))
    state.sigma2_obs = float(stats.invgamma.rvs(a + n_obs / 2, scale=b + rss / 2, random_state=rng))

    n_effects = ds.K * ds.N
    shape = a + (n_effects if config.rnd_shape_exact else n_effects / 2)
    state.sigma2_rnd = float(stats.invgamma.rvs(shape, scale=b + 0.5 * np.sum(state.omega ** 2), random_state=rng))


def step_random_effects(state: ModelState, context: ModelContext, rng: np.random.Generator) -> None:
    """omega_ik ~ N(mean, 1/precision), precision = 1/sigma2_rnd + J_ik/sigma2_obs."""
    ds = context.dataset
    partial = residuals(state, ds, context.basis, context.ispline) + np.where(
        ds.observed, state.omega[ds.subject_index], 0.0
    )
    sums = np.zeros((ds.N, ds.K))
    np.add.at(sums, ds.subject_index, partial)
    precision = 1.0 / state.sigma2_rnd + context.observed_counts / state.sigma2_obs
    mean = sums / state.sigma2_obs / precision
    state.omega = mean + rng.standard_normal((ds.N, ds.K)) / np.sqrt(precision)


# ============================================================================
# HYPERPARAMETERS
# ============================================================================

def log_normalizer(
    sigma2_s: float,
    sigma2_v: float,
    window: WindowWeights,
    variant: ConstraintMode,
    group_sizes: Sequence[int],
    n_mc: int,
    seed: int,
) -> float:
    """
    log Z of the truncated gamma prior over all biomarkers:
    sum_g log sum_m Z_m^|C_g| for the S-shaped model, K log P(gamma >= 0)
    for the monotone one.
    """
    if not group_sizes:
        return 0.0
    precision = build_prior_precision(sigma2_s, sigma2_v, window)
    n = precision.Q.shape[0]
    prior = GaussianParams(np.zeros(n), precision.covariance())
    if variant == ConstraintMode.MONOTONE_ONLY:
        return sum(group_sizes) * _log_probability(prior, orthant_constraints(n), n_mc, seed)
    log_z = np.array([
        _log_probability(prior, cone_constraints(int(m), window.M), n_mc, seed)
        for m in candidate_indices(window.M)
    ])
    return float(sum(logsumexp(size * log_z) for size in group_sizes))


def hyper_log_target(
    log_sigma2: np.ndarray,
    gammas_free: np.ndarray,
    window: WindowWeights,
    config: ModelConfig,
    group_sizes: Sequence[int],
    n_mc: int,
    seed: int,
) -> float:
    """Log conditional density of (log sigma2_s, log sigma2_v), Jacobian included."""
    sigma2_s, sigma2_v = np.exp(log_sigma2)
    if not (np.isfinite(sigma2_s) and np.isfinite(sigma2_v) and sigma2_s > 0 and sigma2_v > 0):
        return -np.inf
    scale = config.hyper_scale
    total = log_hyperprior(sigma2_s, scale) + log_hyperprior(sigma2_v, scale) + float(np.sum(log_sigma2))
    if len(gammas_free):
        precision = build_prior_precision(sigma2_s, sigma2_v, window)
        total += sum(gamma_log_density(g, precision) for g in gammas_free)
        log_z = log_normalizer(sigma2_s, sigma2_v, window, config.variant, group_sizes, n_mc, seed)
        # a zero mass estimate leaves the target undefined
        if not np.isfinite(log_z):
            return -np.inf
        total -= log_z
    return total


def step_hyperparams(
    state: ModelState,
    context: ModelContext,
    rng: np.random.Generator,
    adapt: AdaptState,
    adapting: bool,
    n_mc: int = app_config.GENZ_N_MC,
) -> bool:
    """Joint random-walk Metropolis move on (log sigma2_s, log sigma2_v)."""
    window, config = context.window, context.config
    gammas_free = state.gamma[:, window.free]
    group_sizes = [len(m) for m in context.group_members.values()] if context.dataset.K else []
    return hyper_metropolis(state, gammas_free, window, config, group_sizes, rng, adapt, adapting, n_mc)


def hyper_metropolis(state, gammas_free, window, config, group_sizes, rng, adapt, adapting, n_mc) -> bool:
    current = np.log([state.sigma2_s, state.sigma2_v])
    proposal = current + adapt.step * rng.standard_normal(2)
    seed = int(rng.integers(SEED_BOUND))
    log_u = np.log(rng.random())

    target_current = hyper_log_target(current, gammas_free, window, config, group_sizes, n_mc, seed)
    target_proposal = hyper_log_target(proposal, gammas_free, window, config, group_sizes, n_mc, seed)
    if not np.isfinite(target_current):
        logger.warning("Truncation constant estimate is zero at the current hyperparameters; rejecting move")
        accepted = False
    elif not np.isfinite(target_proposal):
        logger.warning(
            f"Hyperparameter target undefined at proposal sigma2_s={np.exp(proposal[0]):.4g}, "
            f"sigma2_v={np.exp(proposal[1]):.4g}; rejecting move"
        )
        accepted = False
    else:
        accepted = bool(log_u < target_proposal - target_current)
    if accepted:
        state.sigma2_s, state.sigma2_v = (float(v) for v in np.exp(proposal))
    adapt.record(accepted, adapting)
    return accepted


# ============================================================================
# POSTERIOR SAMPLES
# ============================================================================

@dataclass
class PosteriorSamples:
    variant: ConstraintMode
    biomarkers: List[str]
    biomarker_groups: Tuple[str, ...]
    group_names: List[str]
    covariate_names: List[str]
    chain: np.ndarray
    iteration: np.ndarray
    beta: np.ndarray          # S x K x q
    gamma: np.ndarray         # S x K x M
    omega: np.ndarray         # S x N x K
    sigma2_obs: np.ndarray
    sigma2_rnd: np.ndarray
    sigma2_s: np.ndarray
    sigma2_v: np.ndarray
    m_star: np.ndarray        # S x G
    logistic: Optional[np.ndarray] = None   # S x K x 3
    trace: pd.DataFrame = field(default_factory=pd.DataFrame)

    @property
    def n_draws(self) -> int:
        return self.iteration.shape[0]

    @property
    def K(self) -> int:
        return len(self.biomarkers)

    def state(self, i: int) -> ModelState:
        return ModelState(
            beta=self.beta[i].copy(),
            gamma=self.gamma[i].copy(),
            omega=self.omega[i].copy(),
            sigma2_obs=float(self.sigma2_obs[i]),
            sigma2_rnd=float(self.sigma2_rnd[i]),
            sigma2_s=float(self.sigma2_s[i]),
            sigma2_v=float(self.sigma2_v[i]),
            m_star={g: int(m) for g, m in zip(self.group_names, self.m_star[i])},
            biomarker_groups=self.biomarker_groups,
            logistic=None if self.logistic is None else self.logistic[i].copy(),
        )

    def m_star_of(self, k: int) -> np.ndarray:
        """Per-draw inflection index of biomarker k."""
        return self.m_star[:, self.group_names.index(self.biomarker_groups[k])]

    @classmethod
    def concatenate(cls, parts: Sequence["PosteriorSamples"]) -> "PosteriorSamples":
        first = parts[0]

        def stack(name):
            values = [getattr(p, name) for p in parts]
            return None if values[0] is None else np.concatenate(values, axis=0)

        return cls(
            variant=first.variant,
            biomarkers=first.biomarkers,
            biomarker_groups=first.biomarker_groups,
            group_names=first.group_names,
            covariate_names=first.covariate_names,
            chain=stack("chain"),
            iteration=stack("iteration"),
            beta=stack("beta"),
            gamma=stack("gamma"),
            omega=stack("omega"),
            sigma2_obs=stack("sigma2_obs"),
            sigma2_rnd=stack("sigma2_rnd"),
            sigma2_s=stack("sigma2_s"),
            sigma2_v=stack("sigma2_v"),
            m_star=stack("m_star"),
            logistic=stack("logistic"),
            trace=pd.concat([p.trace for p in parts], ignore_index=True),
        )


# ============================================================================
# CHAIN
# ============================================================================

def _run_step(iteration: int, name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SamplerStepError:
        raise
    except (ShapeSplineError, np.linalg.LinAlgError, FloatingPointError, ValueError) as e:
        raise SamplerStepError(iteration, name, e)


class GibbsSampler:
    """Runs one chain over a fixed model context."""

    def __init__(self, context: ModelContext, sampler_config: SamplerConfig, chain: int = 0):
        self.context = context
        self.config = sampler_config
        self.chain = chain

    def run(self, seed=None, state: Optional[ModelState] = None) -> PosteriorSamples:
        cfg, context = self.config, self.context
        ds, variant = context.dataset, context.config.variant
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        state = state.copy() if state is not None else initial_state(context)

        stored = list(range(cfg.burn_in, cfg.n_iter, cfg.thin))
        S = len(stored)
        groups = list(context.group_members)
        M = context.config.M
        out = {
            "beta": np.zeros((S, ds.K, ds.q)),
            "gamma": np.zeros((S, ds.K, M)),
            "omega": np.zeros((S, ds.N, ds.K)),
            "sigma2_obs": np.zeros(S),
            "sigma2_rnd": np.zeros(S),
            "sigma2_s": np.zeros(S),
            "sigma2_v": np.zeros(S),
            "m_star": np.zeros((S, len(groups)), dtype=int),
        }
        logistic_out = np.zeros((S, ds.K, 3)) if context.is_logistic else None
        trace = {name: np.zeros(cfg.n_iter) for name in
                 ("log_likelihood", "sigma2_obs", "sigma2_rnd", "sigma2_s", "sigma2_v", "hyper_step")}
        trace["hyper_accepted"] = np.zeros(cfg.n_iter, dtype=bool)
        m_trace = np.zeros((cfg.n_iter, len(groups)), dtype=int)

        hyper_adapt = AdaptState(log_step=np.log(cfg.hyper_step), target=cfg.target_accept)
        logistic_adapt = [
            AdaptState(log_step=np.log(context.config.logistic_step), target=cfg.target_accept)
            for _ in range(ds.K)
        ]
        executor = ThreadPoolExecutor(max_workers=cfg.jobs) if cfg.jobs > 1 else None
        logger.info(
            f"Chain {self.chain}: {variant.value}, {cfg.n_iter} iterations ({cfg.burn_in} burn-in, thin {cfg.thin}), "
            f"{ds.K} biomarkers, {ds.N} subjects"
        )

        slot = 0
        try:
            for it in range(cfg.n_iter):
                adapting = it < cfg.burn_in
                if variant == ConstraintMode.LOGISTIC_PARAMETRIC:
                    _run_step(it, "logistic", step_logistic, state, context, rng, logistic_adapt, adapting)
                else:
                    conditionals = _run_step(it, "conditionals", coefficient_conditionals, state, context)
                    previous = dict(state.m_star)
                    if variant == ConstraintMode.S_SHAPED:
                        state.m_star = _run_step(
                            it, "inflection_indices", step_inflection_indices,
                            state, context, rng, cfg.genz_n_mc, conditionals,
                        )
                    _run_step(
                        it, "coefficients", step_coefficients,
                        state, context, rng, cfg, conditionals, previous, executor,
                    )
                _run_step(it, "variances", step_variances, state, context, rng)
                _run_step(it, "random_effects", step_random_effects, state, context, rng)
                accepted = False
                if variant != ConstraintMode.LOGISTIC_PARAMETRIC:
                    accepted = _run_step(
                        it, "hyperparams", step_hyperparams,
                        state, context, rng, hyper_adapt, adapting, cfg.genz_n_mc,
                    )

                loglik = log_likelihood(state, ds, context.basis, context.ispline)
                trace["log_likelihood"][it] = loglik
                trace["sigma2_obs"][it] = state.sigma2_obs
                trace["sigma2_rnd"][it] = state.sigma2_rnd
                trace["sigma2_s"][it] = state.sigma2_s
                trace["sigma2_v"][it] = state.sigma2_v
                trace["hyper_step"][it] = hyper_adapt.step
                trace["hyper_accepted"][it] = accepted
                m_trace[it] = [state.m_star[g] for g in groups]

                if slot < S and it == stored[slot]:
                    out["beta"][slot] = state.beta
                    out["gamma"][slot] = state.gamma
                    out["omega"][slot] = state.omega
                    for name in ("sigma2_obs", "sigma2_rnd", "sigma2_s", "sigma2_v"):
                        out[name][slot] = getattr(state, name)
                    out["m_star"][slot] = m_trace[it]
                    if logistic_out is not None:
                        logistic_out[slot] = state.logistic
                    slot += 1

                if (it + 1) % cfg.log_every == 0:
                    logger.info(
                        f"Chain {self.chain}: iteration {it + 1}/{cfg.n_iter}, log-likelihood {loglik:.2f}, "
                        f"hyper acceptance {hyper_adapt.acceptance_rate:.2f}, m* {dict(state.m_star)}"
                    )
        finally:
            if executor:
                executor.shutdown()

        trace_frame = pd.DataFrame({"chain": self.chain, "iteration": np.arange(cfg.n_iter), **trace})
        for j, g in enumerate(groups):
            trace_frame[f"m_star[{g}]"] = m_trace[:, j]
        if context.is_logistic:
            for k in range(ds.K):
                trace_frame[f"logistic_step[{ds.biomarker_names[k]}]"] = logistic_adapt[k].step

        return PosteriorSamples(
            variant=variant,
            biomarkers=ds.biomarker_names,
            biomarker_groups=context.biomarker_groups,
            group_names=groups,
            covariate_names=list(ds.covariate_names),
            chain=np.full(S, self.chain),
            iteration=np.asarray(stored, dtype=int),
            logistic=logistic_out,
            trace=trace_frame,
            **out,
        )


def run_chain(sampler_config: SamplerConfig, context: ModelContext, seed=None, chain: int = 0) -> PosteriorSamples:
    return GibbsSampler(context, sampler_config, chain).run(seed)


def run_chains(sampler_config: SamplerConfig, context: ModelContext, n_chains: int = 1,
               parallel: bool = False) -> PosteriorSamples:
    """Independent chains seeded from SeedSequence(seed).spawn(n_chains), merged in chain order."""
    seeds = np.random.SeedSequence(sampler_config.seed).spawn(n_chains)
    if parallel and n_chains > 1:
        with ThreadPoolExecutor(max_workers=n_chains) as pool:
            parts = list(pool.map(lambda c: run_chain(sampler_config, context, seeds[c], c), range(n_chains)))
    else:
        parts = [run_chain(sampler_config, context, seeds[c], c) for c in range(n_chains)]
    return PosteriorSamples.concatenate(parts)
