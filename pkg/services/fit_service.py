# Fit Service
# Preprocessing -> knot placement -> Gibbs sampling -> posterior summaries for a real dataset

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from core.data_model import (
    LongitudinalDataset,
    PreprocessReport,
    load_dataset,
    onset_table,
    preprocess,
    to_frame,
)
from core.gibbs_sampler import PosteriorSamples, run_chains
from core.hier_model import ModelContext
from core.posterior_summary import (
    curve_summary,
    default_grid,
    draw_milestones,
    effect_table,
    milestone_summary,
    ordering_table,
    subject_fit_table,
)
from core.spline_basis import BasisSpec, build_basis_from_ages
from schemas.dataset_schema import DatasetSchema
from schemas.model_config import ConstraintMode, Contrast, ContrastKind, ModelConfig, SamplerConfig
from services.output_writer import OutputWriter

logger = logging.getLogger(__name__)


@dataclass
class FitResult:
    dataset: LongitudinalDataset
    report: PreprocessReport
    basis: BasisSpec
    samples: PosteriorSamples
    timings: Dict[str, float] = field(default_factory=dict)


def samples_frame(samples: PosteriorSamples) -> pd.DataFrame:
    """One row per stored draw and biomarker: m*, beta and the curve parameters."""
    S, K = samples.n_draws, samples.K
    columns = {
        "chain": np.repeat(samples.chain, K),
        "iteration": np.repeat(samples.iteration, K),
        "biomarker": np.tile(np.asarray(samples.biomarkers, dtype=object), S),
    }
    if samples.variant == ConstraintMode.S_SHAPED:
        columns["m_star"] = np.column_stack([samples.m_star_of(k) for k in range(K)]).ravel() if K else []
    for j, name in enumerate(samples.covariate_names):
        columns[f"beta[{name}]"] = samples.beta[:, :, j].ravel()
    if samples.logistic is not None:
        for j, name in enumerate(("c", "s", "h")):
            columns[name] = samples.logistic[:, :, j].ravel()
    else:
        for m in range(samples.gamma.shape[2]):
            columns[f"gamma[{m + 1}]"] = samples.gamma[:, :, m].ravel()
    return pd.DataFrame(columns)


def variance_frame(samples: PosteriorSamples) -> pd.DataFrame:
    frame = pd.DataFrame({
        "chain": samples.chain,
        "iteration": samples.iteration,
        "sigma2_obs": samples.sigma2_obs,
        "sigma2_rnd": samples.sigma2_rnd,
        "sigma2_s": samples.sigma2_s,
        "sigma2_v": samples.sigma2_v,
    })
    if samples.variant == ConstraintMode.LOGISTIC_PARAMETRIC:
        frame = frame.drop(columns=["sigma2_s", "sigma2_v"])
    return frame


def default_contrasts(schema: DatasetSchema) -> List[Contrast]:
    """Unit change of every covariate plus aging from 50 to 90."""
    contrasts = [
        Contrast(label=name, kind=ContrastKind.COVARIATE, deltas={name: 1.0})
        for name in schema.covariate_names
    ]
    contrasts.append(Contrast(label="age_50_90", kind=ContrastKind.AGE, ages=(50.0, 90.0)))
    return contrasts


def knots_frame(basis: BasisSpec) -> pd.DataFrame:
    return pd.DataFrame({"index": np.arange(1, len(basis.knots) + 1), "knot": basis.knots})


class FitService:
    """
    Fits one dataset end to end.
    Construct with resolved configuration; `run` writes every report through an OutputWriter.
    """

    def __init__(
        self,
        model_config: ModelConfig,
        sampler_config: SamplerConfig,
        contrasts: Optional[List[Contrast]] = None,
        n_chains: int = 1,
        grid_step: Optional[float] = None,
    ):
        self.model_config = model_config
        self.sampler_config = sampler_config
        self.contrasts = contrasts or []
        self.n_chains = n_chains
        self.grid_step = grid_step

    def prepare(self, data_path: Union[str, Path], schema: DatasetSchema) -> Tuple[LongitudinalDataset, PreprocessReport]:
        ds = load_dataset(data_path, schema)
        return preprocess(ds)

    def build_basis(self, ds: LongitudinalDataset) -> BasisSpec:
        L, U = self.model_config.knot_range
        basis = build_basis_from_ages(ds.ages, self.model_config.M, L, U, self.model_config.kernel_nu)
        logger.info(f"Built {basis.M} basis functions on [{L:g}, {U:g}]")
        return basis

    def fit(self, ds: LongitudinalDataset, report: PreprocessReport) -> FitResult:
        timings = {}
        started = time.perf_counter()
        basis = self.build_basis(ds)
        timings["basis"] = time.perf_counter() - started

        started = time.perf_counter()
        context = ModelContext(dataset=ds, basis=basis, config=self.model_config)
        samples = run_chains(self.sampler_config, context, self.n_chains, parallel=self.sampler_config.jobs > 1)
        timings["sampling"] = time.perf_counter() - started
        logger.info(f"Sampling finished: {samples.n_draws} stored draws in {timings['sampling']:.1f}s")
        return FitResult(dataset=ds, report=report, basis=basis, samples=samples, timings=timings)

    def summarize(self, result: FitResult) -> Dict[str, pd.DataFrame]:
        """All plot-ready tables keyed by output file name."""
        samples, basis = result.samples, result.basis
        domain = self.model_config.age_domain
        grid = default_grid(*domain, **({"step": self.grid_step} if self.grid_step else {}))
        milestones = draw_milestones(samples, basis)
        tables = {
            "curves.csv": curve_summary(samples, basis, grid, domain).to_frame(),
            "milestones.csv": milestone_summary(samples, basis, milestones),
            "effects.csv": effect_table(samples, self.contrasts, basis),
            "ordering.csv": ordering_table(samples, basis, milestones),
            "subject_fit.csv": subject_fit_table(samples, result.dataset, basis),
            "samples.csv": samples_frame(samples),
            "variances.csv": variance_frame(samples),
            "trace.csv": samples.trace,
            "preprocess_report.csv": result.report.to_frame(),
            "knots.csv": knots_frame(basis),
        }
        return tables

    def run(self, data_path: Union[str, Path], schema: DatasetSchema, writer: OutputWriter) -> FitResult:
        started = time.perf_counter()
        writer.record_input(data_path)
        ds, report = self.prepare(data_path, schema)
        writer.manifest.timings["preprocess"] = time.perf_counter() - started

        result = self.fit(ds, report)
        writer.manifest.timings.update(result.timings)

        started = time.perf_counter()
        for name, frame in self.summarize(result).items():
            writer.write_table(name, frame)
        writer.write_samples(result.samples)
        writer.manifest.timings["summaries"] = time.perf_counter() - started
        return result


class PreprocessService:
    """Preprocessing only: adjusted data, the preprocess report and, with diagnoses, onset ages."""

    def run(self, data_path: Union[str, Path], schema: DatasetSchema, writer: OutputWriter) -> LongitudinalDataset:
        writer.record_input(data_path)
        ds, report = preprocess(load_dataset(data_path, schema))
        writer.write_table("preprocessed.csv", to_frame(ds, schema.subject_column, schema.age_column))
        writer.write_table("preprocess_report.csv", report.to_frame())
        if ds.diagnosis is not None:
            writer.write_table("onset.csv", onset_table(ds))
        return ds
