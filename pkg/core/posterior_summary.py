"""
Posterior functionals of fitted progression curves: pointwise curve bands,
standardized curves, inflection points, 50% thresholds, effect tables,
temporal ordering of biomarkers and subject-level fits.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import bisect, minimize_scalar

from config import app_config
from core.data_model import LongitudinalDataset
from core.errors import ConfigError, NumericalError
from core.gibbs_sampler import PosteriorSamples
from core.hier_model import logistic_curve
from core.spline_basis import BasisSpec, eval_bspline_basis, eval_ispline_basis
from schemas.model_config import ConstraintMode, Contrast, ContrastKind

logger = logging.getLogger(__name__)

LOWER_Q = 0.025
UPPER_Q = 0.975
SCAN_POINTS = 2000
T50_XTOL = 1e-6
DEGENERATE_RISE = 1e-12


def default_grid(lo: float = app_config.AGE_MIN, hi: float = app_config.AGE_MAX,
                 step: float = app_config.GRID_STEP) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return np.linspace(lo, hi, n)


def _interval(draws: np.ndarray, axis: int = 0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (
        np.mean(draws, axis=axis),
        np.quantile(draws, LOWER_Q, axis=axis),
        np.quantile(draws, UPPER_Q, axis=axis),
    )


# ============================================================================
# CURVES
# ============================================================================

def curves_from(gamma: np.ndarray, logistic: Optional[np.ndarray], basis: BasisSpec, grid) -> np.ndarray:
    """f_k(t) for stacked draws: gamma is S x K x M, logistic S x K x 3 or None."""
    grid = np.asarray(grid, dtype=float)
    if logistic is not None:
        c, s, h = (logistic[..., j][..., None] for j in range(3))
        return logistic_curve(grid, c, s, h)
    return gamma @ eval_ispline_basis(basis, grid).T


def sample_curves(samples: PosteriorSamples, basis: BasisSpec, grid) -> np.ndarray:
    """f_k(t) for every stored draw, S x K x len(grid)."""
    return curves_from(samples.gamma, samples.logistic, basis, grid)


def standardize_curves(curves: np.ndarray, start: np.ndarray, end: np.ndarray):
    """
    (f(t) - f(start)) / (f(end) - f(start)) per draw. Returns the
    standardized curves and a mask of draws with a usable rise.
    """
    rise = end - start
    usable = rise > DEGENERATE_RISE
    safe = np.where(usable, rise, 1.0)
    return (curves - start[..., None]) / safe[..., None], usable


@dataclass
class CurveSummary:
    grid: np.ndarray
    biomarkers: List[str]
    mean: np.ndarray            # K x G
    lower: np.ndarray
    upper: np.ndarray
    std_mean: np.ndarray
    std_lower: np.ndarray
    std_upper: np.ndarray
    n_degenerate: np.ndarray    # K

    def to_frame(self) -> pd.DataFrame:
        frames = []
        for k, name in enumerate(self.biomarkers):
            frames.append(pd.DataFrame({
                "biomarker": name,
                "age": self.grid,
                "mean": self.mean[k],
                "lower": self.lower[k],
                "upper": self.upper[k],
                "std_mean": self.std_mean[k],
                "std_lower": self.std_lower[k],
                "std_upper": self.std_upper[k],
            }))
        columns = ["biomarker", "age", "mean", "lower", "upper", "std_mean", "std_lower", "std_upper"]
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)


def curve_summary(
    samples: PosteriorSamples,
    basis: BasisSpec,
    grid=None,
    domain: Tuple[float, float] = (app_config.AGE_MIN, app_config.AGE_MAX),
) -> CurveSummary:
    """Pointwise mean and 95% band of f_k and of its standardized version."""
    if samples.n_draws == 0:
        raise NumericalError("cannot summarize an empty sample set")
    grid = default_grid(*domain) if grid is None else np.asarray(grid, dtype=float)
    curves = sample_curves(samples, basis, grid)
    ends = sample_curves(samples, basis, np.asarray(domain, dtype=float))
    standardized, usable = standardize_curves(curves, ends[..., 0], ends[..., 1])

    mean, lower, upper = _interval(curves)
    K, G = curves.shape[1], grid.size
    std_mean, std_lower, std_upper = (np.full((K, G), np.nan) for _ in range(3))
    n_degenerate = (~usable).sum(axis=0)
    for k in range(K):
        if n_degenerate[k]:
            logger.warning(
                f"{samples.biomarkers[k]}: {n_degenerate[k]} of {samples.n_draws} draws have a flat curve; "
                f"excluded from the standardized summary"
            )
        kept = standardized[usable[:, k], k]
        if kept.shape[0]:
            std_mean[k], std_lower[k], std_upper[k] = _interval(kept)
    return CurveSummary(
        grid=grid,
        biomarkers=list(samples.biomarkers),
        mean=mean,
        lower=lower,
        upper=upper,
        std_mean=std_mean,
        std_lower=std_lower,
        std_upper=std_upper,
        n_degenerate=n_degenerate,
    )


# ============================================================================
# MILESTONES
# ============================================================================

@lru_cache(maxsize=8)
def _scan_grid(basis: BasisSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    grid = np.linspace(basis.L, basis.U, SCAN_POINTS)
    return grid, eval_bspline_basis(basis, grid), eval_ispline_basis(basis, grid)


def inflection_point(gamma, basis: BasisSpec) -> float:
    """
    Age of fastest progression: argmax of f'(t) = B(t) gamma over [L, U],
    from a grid scan refined by a bounded search between the neighbouring
    grid points. Ties resolve to the smallest t.
    """
    gamma = np.asarray(gamma, dtype=float)
    if not np.any(gamma > 0):
        raise NumericalError("inflection point undefined for an all-zero coefficient vector")
    grid, bsplines, _ = _scan_grid(basis)
    slope = bsplines @ gamma
    i = int(np.argmax(slope))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    result = minimize_scalar(
        lambda t: -float(eval_bspline_basis(basis, [t])[0] @ gamma),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-8},
    )
    if result.success and -result.fun > slope[i]:
        return float(result.x)
    return float(grid[i])


def half_progression_time(gamma, basis: BasisSpec) -> float:
    """Smallest t with f(t) = f(L) + (f(U) - f(L)) / 2, by bisection."""
    gamma = np.asarray(gamma, dtype=float)
    f_lo, f_hi = eval_ispline_basis(basis, [basis.L, basis.U]) @ gamma
    if f_hi - f_lo <= 0:
        raise NumericalError("50% threshold undefined: the curve does not rise over the basis range")
    target = f_lo + 0.5 * (f_hi - f_lo)

    def gap(t):
        return float(eval_ispline_basis(basis, [t])[0] @ gamma) - target

    grid, _, isplines = _scan_grid(basis)
    values = isplines @ gamma - target
    j = int(np.argmax(values >= 0))
    if values[j] == 0:
        return float(grid[j])
    return float(bisect(gap, grid[j - 1], grid[j], xtol=T50_XTOL))


def draw_milestones(samples: PosteriorSamples, basis: BasisSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Per-draw (t*, t50), each S x K; NaN where undefined."""
    S, K = samples.n_draws, samples.K
    if samples.logistic is not None:
        centers = samples.logistic[..., 0].copy()
        return centers, centers.copy()
    t_star = np.full((S, K), np.nan)
    t50 = np.full((S, K), np.nan)
    for i in range(S):
        for k in range(K):
            gamma = samples.gamma[i, k]
            try:
                t_star[i, k] = inflection_point(gamma, basis)
                t50[i, k] = half_progression_time(gamma, basis)
            except NumericalError as e:
                logger.debug(f"draw {i}, {samples.biomarkers[k]}: {e}")
    return t_star, t50


def milestone_summary(samples: PosteriorSamples, basis: BasisSpec,
                      milestones: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> pd.DataFrame:
    t_star, t50 = milestones or draw_milestones(samples, basis)
    rows = []
    for k, name in enumerate(samples.biomarkers):
        row = {"biomarker": name}
        for label, draws in (("t_star", t_star[:, k]), ("t50", t50[:, k])):
            defined = draws[np.isfinite(draws)]
            if defined.size:
                row[f"{label}_mean"], row[f"{label}_lower"], row[f"{label}_upper"] = (
                    float(v) for v in _interval(defined)
                )
            else:
                row[f"{label}_mean"] = row[f"{label}_lower"] = row[f"{label}_upper"] = np.nan
        row["n_undefined"] = int(np.sum(~np.isfinite(t50[:, k])))
        rows.append(row)
    columns = ["biomarker", "t_star_mean", "t_star_lower", "t_star_upper",
               "t50_mean", "t50_lower", "t50_upper", "n_undefined"]
    return pd.DataFrame(rows, columns=columns)


# ============================================================================
# EFFECTS AND ORDERING
# ============================================================================

def contrast_draws(samples: PosteriorSamples, contrast: Contrast, basis: BasisSpec) -> np.ndarray:
    """S x K draws of one contrast."""
    if contrast.kind == ContrastKind.AGE:
        t1, t2 = contrast.ages
        if t1 == t2:
            return np.zeros((samples.n_draws, samples.K))
        ends = sample_curves(samples, basis, [t1, t2])
        return ends[..., 1] - ends[..., 0]
    delta = np.zeros(len(samples.covariate_names))
    for name, amount in contrast.deltas.items():
        if name not in samples.covariate_names:
            raise ConfigError(f"contrast '{contrast.label}' names unknown covariate '{name}'")
        delta[samples.covariate_names.index(name)] = amount
    return samples.beta @ delta


def effect_table(samples: PosteriorSamples, contrasts: Sequence[Contrast], basis: BasisSpec) -> pd.DataFrame:
    """Posterior mean and 95% interval of each contrast for each biomarker."""
    rows = []
    for contrast in contrasts:
        draws = contrast_draws(samples, contrast, basis)
        mean, lower, upper = _interval(draws)
        for k, name in enumerate(samples.biomarkers):
            rows.append({
                "contrast": contrast.label,
                "kind": contrast.kind.value,
                "biomarker": name,
                "mean": float(mean[k]),
                "lower": float(lower[k]),
                "upper": float(upper[k]),
                "covers_zero": bool(lower[k] <= 0 <= upper[k]),
            })
    return pd.DataFrame(rows, columns=["contrast", "kind", "biomarker", "mean", "lower", "upper", "covers_zero"])


def ordering_table(samples: PosteriorSamples, basis: BasisSpec,
                   milestones: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> pd.DataFrame:
    """P(a reaches its milestone before b) for all ordered pairs (a, b)."""
    t_star, t50 = milestones or draw_milestones(samples, basis)
    rows = []
    names = samples.biomarkers
    for a in range(samples.K):
        for b in range(samples.K):
            if a == b:
                continue
            both50 = np.isfinite(t50[:, a]) & np.isfinite(t50[:, b])
            both_star = np.isfinite(t_star[:, a]) & np.isfinite(t_star[:, b])
            rows.append({
                "first": names[a],
                "second": names[b],
                "p_t50_before": float(np.mean(t50[both50, a] < t50[both50, b])) if both50.any() else np.nan,
                "p_t_star_before": (
                    float(np.mean(t_star[both_star, a] < t_star[both_star, b])) if both_star.any() else np.nan
                ),
            })
    return pd.DataFrame(rows, columns=["first", "second", "p_t50_before", "p_t_star_before"])


def subject_fit_table(samples: PosteriorSamples, ds: LongitudinalDataset, basis: BasisSpec) -> pd.DataFrame:
    """
    Posterior-mean subject-level fit f_k(t) + x'beta_k + omega_ik next to
    the observation and the population curve, one row per observed cell.
    """
    if samples.n_draws == 0:
        raise NumericalError("cannot summarize an empty sample set")
    design = ds.X[ds.subject_index]
    population = np.zeros((ds.n_visits, ds.K))
    subject = np.zeros((ds.n_visits, ds.K))
    for i in range(samples.n_draws):
        logistic = None if samples.logistic is None else samples.logistic[i:i + 1]
        curve = curves_from(samples.gamma[i:i + 1], logistic, basis, ds.ages)[0].T
        fit = curve + design @ samples.beta[i].T + samples.omega[i][ds.subject_index]
        population += (curve - population) / (i + 1)
        subject += (fit - subject) / (i + 1)

    rows, cols = np.nonzero(ds.observed)
    return pd.DataFrame({
        "subject_id": ds.subject_ids[ds.subject_index[rows]],
        "age": ds.ages[rows],
        "biomarker": np.asarray(ds.biomarker_names, dtype=object)[cols],
        "observed": ds.Y[rows, cols],
        "subject_fit": subject[rows, cols],
        "population_curve": population[rows, cols],
    })


def fit_variant_has_inflection(variant: ConstraintMode) -> bool:
    return variant != ConstraintMode.MONOTONE_ONLY
