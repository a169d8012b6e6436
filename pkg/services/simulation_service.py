# Simulation Service
# Runs the synthetic-data comparison and writes replicate rows, the summary report and the datasets

import logging
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.data_model import to_frame
from core.simulation import (
    METRIC_RANGE,
    SimDesign,
    SimTruth,
    run_comparison,
    simulate_dataset,
)
from schemas.model_config import ConstraintMode, ModelConfig, SamplerConfig
from services.output_writer import OutputWriter

logger = logging.getLogger(__name__)


class SimulationService:
    def __init__(
        self,
        model_config: ModelConfig,
        sampler_config: SamplerConfig,
        design: SimDesign = SimDesign(),
        metric_range: Tuple[float, float] = METRIC_RANGE,
        jobs: int = 1,
        save_datasets: bool = True,
    ):
        self.model_config = model_config
        self.sampler_config = sampler_config
        self.design = design
        self.metric_range = metric_range
        self.jobs = jobs
        self.save_datasets = save_datasets

    def run(
        self,
        truths: Sequence[SimTruth],
        variants: Sequence[ConstraintMode],
        n_replicates: int,
        writer: OutputWriter,
        knot_ranges: Optional[List[Tuple[float, float]]] = None,
    ) -> pd.DataFrame:
        seed = self.sampler_config.seed
        started = time.perf_counter()
        replicates, report = run_comparison(
            truths,
            variants,
            n_replicates,
            seed,
            self.model_config,
            self.sampler_config,
            knot_ranges=knot_ranges,
            metric_range=self.metric_range,
            design=self.design,
            jobs=self.jobs,
        )
        writer.manifest.timings["sweep"] = time.perf_counter() - started

        writer.write_table("replicates.csv", replicates)
        writer.write_table("report.csv", report)
        if self.save_datasets:
            # same seeds as the sweep, so these are the datasets that were fitted
            for ti, truth in enumerate(truths):
                for r in range(n_replicates):
                    ds = simulate_dataset(truth, np.random.SeedSequence([seed, ti, r]), self.design)
                    writer.write_table(f"datasets/{truth.tag.value.lower()}_r{r:03d}.csv", to_frame(ds))
        failed = int((replicates["status"] != "ok").sum()) if not replicates.empty else 0
        logger.info(f"Simulation sweep done: {len(replicates)} fits, {failed} failed")
        return report
