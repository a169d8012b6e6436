"""
Synthetic-data study: two known progression curves, a longitudinal data
generator, and RMSE / coverage metrics for fitted model variants.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import app_config
from core.data_model import INTERCEPT, LongitudinalDataset
from core.errors import NumericalError, ShapeSplineError
from core.gibbs_sampler import PosteriorSamples, run_chain
from core.hier_model import ModelContext
from core.posterior_summary import (
    curve_summary,
    default_grid,
    draw_milestones,
    fit_variant_has_inflection,
    milestone_summary,
)
from core.spline_basis import BasisSpec, build_basis_from_ages
from schemas.dataset_schema import BiomarkerSpec
from schemas.model_config import ConstraintMode, ModelConfig, SamplerConfig

logger = logging.getLogger(__name__)

METRIC_RANGE = (30.0, 90.0)

REPLICATE_COLUMNS = [
    "truth", "model", "knot_range", "replicate", "status", "error",
    "curve_rmse", "curve_coverage", "t_star_error", "t_star_covered",
    "t50_error", "t50_covered", "runtime_s",
]
REPORT_COLUMNS = [
    "truth", "model", "knot_range", "n_replicates", "n_failed",
    "curve_rmse", "curve_coverage", "t_star_rmse", "t_star_coverage",
    "t50_rmse", "t50_coverage", "runtime_s",
]


# ============================================================================
# TRUTHS
# ============================================================================

class TruthTag(str, Enum):
    LOGISTIC = "LOGISTIC"
    ASYMMETRIC = "ASYMMETRIC"


def _logistic_truth(t: np.ndarray) -> np.ndarray:
    return 2.0 / (1.0 + np.exp(-(t - 70.0) / 5.0))


def _asymmetric_truth(t: np.ndarray) -> np.ndarray:
    # cubic rise on [30, 75), cubic approach to the plateau on [75, 90)
    rising = 2.0 * (t - 30.0) ** 3 / (45.0 ** 2 * 60.0)
    settling = 2.0 * (1.0 - (90.0 - t) ** 3 / (15.0 ** 2 * 60.0))
    return np.select([t < 30.0, t < 75.0, t < 90.0], [0.0, rising, settling], default=2.0)


@dataclass(frozen=True)
class SimTruth:
    tag: TruthTag
    t_star: float
    t50: float
    height: float = 2.0

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.tag == TruthTag.LOGISTIC:
            return _logistic_truth(t)
        return _asymmetric_truth(t)


LOGISTIC_TRUTH = SimTruth(TruthTag.LOGISTIC, t_star=70.0, t50=70.0)
ASYMMETRIC_TRUTH = SimTruth(TruthTag.ASYMMETRIC, t_star=75.0, t50=30.0 + 60750.0 ** (1.0 / 3.0))

TRUTHS = {TruthTag.LOGISTIC: LOGISTIC_TRUTH, TruthTag.ASYMMETRIC: ASYMMETRIC_TRUTH}


def truth_eval(truth: SimTruth, t) -> np.ndarray:
    return truth(t)


def truth_for(name: str) -> SimTruth:
    aliases = {"logit": TruthTag.LOGISTIC, "logistic": TruthTag.LOGISTIC,
               "asym": TruthTag.ASYMMETRIC, "asymmetric": TruthTag.ASYMMETRIC}
    tag = aliases.get(name.lower())
    if tag is None:
        raise ValueError(f"unknown truth '{name}' (expected one of {', '.join(sorted(aliases))})")
    return TRUTHS[tag]


# ============================================================================
# DATA GENERATOR
# ============================================================================

@dataclass(frozen=True)
class SimDesign:
    n_subjects: int = 250
    beta: Tuple[float, float, float] = (0.4, -0.5, 0.1)
    first_age: Tuple[float, float] = (50.0, 90.0)
    mean_visits: float = 10.0
    gap_base: float = 1.0
    gap_mean: float = 1.0 / 20.0
    random_effect_sd: float = 1.0
    noise: float = 0.5
    noise_is_sd: bool = False
    mask_fraction: float = 0.3
    max_age: float = app_config.AGE_MAX

    @property
    def noise_sd(self) -> float:
        return self.noise if self.noise_is_sd else float(np.sqrt(self.noise))


def simulate_dataset(truth: SimTruth, seed, design: SimDesign = SimDesign()) -> LongitudinalDataset:
    """One biomarker y = f(t) + x'beta + omega + eps for N subjects."""
    rng = np.random.default_rng(seed)
    N = design.n_subjects
    x1 = rng.binomial(1, 0.5, size=N).astype(float)
    x2 = rng.standard_normal(N)
    X = np.column_stack([np.ones(N), x1, x2])
    omega = design.random_effect_sd * rng.standard_normal(N)
    first_age = rng.uniform(*design.first_age, size=N)
    n_visits = np.maximum(rng.poisson(design.mean_visits, size=N), 1)

    ages, subject_index = [], []
    for i in range(N):
        gaps = design.gap_base + rng.exponential(design.gap_mean, size=n_visits[i] - 1)
        visit_ages = first_age[i] + np.concatenate([[0.0], np.cumsum(gaps)])
        visit_ages = visit_ages[visit_ages <= design.max_age]
        ages.append(visit_ages)
        subject_index.append(np.full(visit_ages.size, i))
    ages = np.concatenate(ages)
    subject_index = np.concatenate(subject_index)

    mean = truth(ages) + X[subject_index] @ np.asarray(design.beta) + omega[subject_index]
    y = mean + design.noise_sd * rng.standard_normal(ages.size)
    observed = rng.random(ages.size) >= design.mask_fraction
    y = np.where(observed, y, np.nan)

    return LongitudinalDataset(
        subject_ids=np.array([f"S{i + 1:04d}" for i in range(N)], dtype=object),
        covariate_names=(INTERCEPT, "x1", "x2"),
        covariate_types=("constant", "binary", "continuous"),
        X=X,
        subject_index=subject_index,
        ages=ages,
        Y=y[:, None],
        observed=observed[:, None],
        biomarkers=(BiomarkerSpec(name="y"),),
    )


# ============================================================================
# METRICS
# ============================================================================

def evaluate_fit(
    samples: PosteriorSamples,
    truth: SimTruth,
    basis: BasisSpec,
    grid=None,
    metric_range: Tuple[float, float] = METRIC_RANGE,
    grid_step: float = app_config.GRID_STEP,
) -> dict:
    """
    Curve RMSE and pointwise 95% coverage averaged over the grid, plus
    signed milestone errors and interval-coverage indicators for the first
    biomarker. Inflection metrics are blank for the monotone-only model.
    """
    if samples.n_draws == 0:
        raise NumericalError("cannot evaluate an empty sample set")
    grid = default_grid(*metric_range, step=grid_step) if grid is None else np.asarray(grid, dtype=float)
    summary = curve_summary(samples, basis, grid)
    target = truth(grid)
    mean, lower, upper = summary.mean[0], summary.lower[0], summary.upper[0]
    row = {
        "curve_rmse": float(np.sqrt(np.mean((mean - target) ** 2))),
        "curve_coverage": float(np.mean((lower <= target) & (target <= upper))),
    }

    milestones = milestone_summary(samples, basis, draw_milestones(samples, basis)).iloc[0]
    for label, value in (("t_star", truth.t_star), ("t50", truth.t50)):
        estimate = milestones[f"{label}_mean"]
        if (label == "t_star" and not fit_variant_has_inflection(samples.variant)) or not np.isfinite(estimate):
            row[f"{label}_error"], row[f"{label}_covered"] = np.nan, np.nan
            continue
        row[f"{label}_error"] = float(estimate - value)
        row[f"{label}_covered"] = float(milestones[f"{label}_lower"] <= value <= milestones[f"{label}_upper"])
    return row


def aggregate_report(replicates: pd.DataFrame) -> pd.DataFrame:
    """Table-style rows: one per (truth, model, knot range)."""
    rows = []
    if replicates.empty:
        return pd.DataFrame(columns=REPORT_COLUMNS)
    for (truth, model, knot_range), cell in replicates.groupby(["truth", "model", "knot_range"], sort=True):
        ok = cell[cell["status"] == "ok"]
        rows.append({
            "truth": truth,
            "model": model,
            "knot_range": knot_range,
            "n_replicates": len(cell),
            "n_failed": int((cell["status"] != "ok").sum()),
            "curve_rmse": ok["curve_rmse"].mean(),
            "curve_coverage": ok["curve_coverage"].mean(),
            "t_star_rmse": float(np.sqrt(np.nanmean(ok["t_star_error"] ** 2))) if ok["t_star_error"].notna().any() else np.nan,
            "t_star_coverage": ok["t_star_covered"].mean(),
            "t50_rmse": float(np.sqrt(np.nanmean(ok["t50_error"] ** 2))) if ok["t50_error"].notna().any() else np.nan,
            "t50_coverage": ok["t50_covered"].mean(),
            "runtime_s": ok["runtime_s"].mean(),
        })
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


# ============================================================================
# COMPARISON SWEEP
# ============================================================================

def format_range(knot_range: Sequence[float]) -> str:
    return f"{knot_range[0]:g}-{knot_range[1]:g}"


def fit_simulated(ds: LongitudinalDataset, model_config: ModelConfig, sampler_config: SamplerConfig,
                  seed) -> Tuple[PosteriorSamples, BasisSpec]:
    """Knots from the simulated ages, then one chain. Outcomes are used unstandardized."""
    L, U = model_config.knot_range
    basis = build_basis_from_ages(ds.ages, model_config.M, L, U, model_config.kernel_nu)
    context = ModelContext(dataset=ds, basis=basis, config=model_config)
    return run_chain(sampler_config, context, seed), basis


def _run_cell(cell, seed, model_config, sampler_config, metric_range, design):
    truth_idx, truth, variant_idx, variant, range_idx, knot_range, r = cell
    row = {
        "truth": truth.tag.value,
        "model": variant.value,
        "knot_range": format_range(knot_range),
        "replicate": r,
        "status": "ok",
        "error": "",
    }
    started = time.perf_counter()
    try:
        ds = simulate_dataset(truth, np.random.SeedSequence([seed, truth_idx, r]), design)
        config = model_config.model_copy(update={"variant": variant, "knot_range": tuple(knot_range)})
        chain_seed = np.random.SeedSequence([seed, truth_idx, r, variant_idx, range_idx])
        samples, basis = fit_simulated(ds, config, sampler_config, chain_seed)
        row.update(evaluate_fit(samples, truth, basis, metric_range=metric_range))
    except ShapeSplineError as e:
        logger.warning(f"Replicate {r} ({row['truth']}, {row['model']}, {row['knot_range']}) failed: {e.one_line()}")
        row["status"], row["error"] = "failed", e.one_line()
    row["runtime_s"] = time.perf_counter() - started
    return row


def run_comparison(
    truths: Sequence[SimTruth],
    variants: Sequence[ConstraintMode],
    n_replicates: int,
    seed: int,
    model_config: ModelConfig,
    sampler_config: SamplerConfig,
    knot_ranges: Optional[Sequence[Tuple[float, float]]] = None,
    metric_range: Tuple[float, float] = METRIC_RANGE,
    design: SimDesign = SimDesign(),
    jobs: int = 1,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Full factorial truths x variants x knot ranges x replicates. Replicate r
    of a truth uses the same simulated dataset for every variant and range.
    Returns (replicate rows, aggregated report).
    """
    knot_ranges = list(knot_ranges or [model_config.knot_range])
    cells = [
        (ti, truth, vi, variant, ki, knot_range, r)
        for ti, truth in enumerate(truths)
        for vi, variant in enumerate(variants)
        for ki, knot_range in enumerate(knot_ranges)
        for r in range(n_replicates)
    ]
    logger.info(f"Simulation sweep: {len(cells)} fits ({n_replicates} replicates per cell)")

    def work(cell):
        return _run_cell(cell, seed, model_config, sampler_config, metric_range, design)

    if jobs > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows: List[dict] = list(pool.map(work, cells))
    else:
        rows = [work(cell) for cell in cells]

    replicates = pd.DataFrame(rows, columns=REPLICATE_COLUMNS)
    return replicates, aggregate_report(replicates)
