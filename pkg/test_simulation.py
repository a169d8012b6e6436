import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

import core.simulation as simulation
from conftest import make_samples, uniform_basis
from core.errors import NumericalError
from core.simulation import (
    ASYMMETRIC_TRUTH,
    LOGISTIC_TRUTH,
    REPLICATE_COLUMNS,
    REPORT_COLUMNS,
    SimDesign,
    aggregate_report,
    evaluate_fit,
    format_range,
    run_comparison,
    simulate_dataset,
    truth_for,
)
from schemas import ConstraintMode, ModelConfig, SamplerConfig


# ===== TRUTHS =====

def test_logistic_truth_values():
    assert LOGISTIC_TRUTH(70.0) == pytest.approx(1.0)
    assert LOGISTIC_TRUTH(0.0) == pytest.approx(0.0, abs=1e-5)
    assert LOGISTIC_TRUTH.t_star == LOGISTIC_TRUTH.t50 == 70.0


def test_asymmetric_truth_values():
    assert_allclose(ASYMMETRIC_TRUTH([0.0, 30.0, 75.0, 90.0, 120.0]), [0.0, 0.0, 1.5, 2.0, 2.0], atol=1e-12)
    assert ASYMMETRIC_TRUTH(ASYMMETRIC_TRUTH.t50) == pytest.approx(1.0)
    assert ASYMMETRIC_TRUTH.t_star == 75.0


def test_asymmetric_truth_has_steepest_slope_at_75():
    t = np.linspace(30, 90, 60001)
    slope = np.gradient(ASYMMETRIC_TRUTH(t), t)
    assert t[np.argmax(slope)] == pytest.approx(75.0, abs=0.01)
    assert np.all(np.diff(ASYMMETRIC_TRUTH(t)) >= 0)


def test_truth_aliases():
    assert truth_for("logit") is LOGISTIC_TRUTH
    assert truth_for("Asymmetric") is ASYMMETRIC_TRUTH
    with pytest.raises(ValueError):
        truth_for("gompertz")


def test_noise_level_is_a_variance_by_default():
    assert SimDesign().noise_sd == pytest.approx(np.sqrt(0.5))
    assert SimDesign(noise_is_sd=True).noise_sd == 0.5


# ===== GENERATOR =====

def test_simulated_dataset_design():
    ds = simulate_dataset(LOGISTIC_TRUTH, seed=1)
    assert ds.N == 250 and ds.K == 1
    assert ds.covariate_names == ("intercept", "x1", "x2")
    assert set(np.unique(ds.X[:, 1])) <= {0.0, 1.0}
    assert ds.ages.max() <= 120.0
    first = ds.ages[ds.first_row]
    assert first.min() >= 50.0 and first.max() <= 90.0
    assert (~ds.observed).mean() == pytest.approx(0.3, abs=0.03)
    gaps = np.diff(ds.ages)[np.diff(ds.subject_index) == 0]
    assert gaps.min() >= 1.0
    assert gaps.mean() == pytest.approx(1.05, abs=0.01)
    assert ds.visits_per_subject.mean() == pytest.approx(10.0, abs=0.8)


def test_simulated_dataset_is_seeded():
    a = simulate_dataset(ASYMMETRIC_TRUTH, np.random.SeedSequence([3, 1, 0]), SimDesign(n_subjects=20))
    b = simulate_dataset(ASYMMETRIC_TRUTH, np.random.SeedSequence([3, 1, 0]), SimDesign(n_subjects=20))
    c = simulate_dataset(ASYMMETRIC_TRUTH, np.random.SeedSequence([3, 1, 1]), SimDesign(n_subjects=20))
    assert_allclose(a.ages, b.ages)
    assert_allclose(a.Y, b.Y)
    assert a.ages.shape != c.ages.shape or not np.allclose(a.ages, c.ages)


def test_visits_past_max_age_dropped():
    ds = simulate_dataset(LOGISTIC_TRUTH, seed=4, design=SimDesign(n_subjects=30, first_age=(85.0, 90.0), max_age=95.0))
    assert ds.ages.max() <= 95.0
    assert np.all(ds.visits_per_subject >= 1)


# ===== METRICS =====

def test_evaluate_fit_of_near_truth_logistic():
    logistic = np.array([[[70.0, 5.0, 1.99]], [[70.0, 5.0, 2.01]]])
    samples = make_samples(np.zeros((2, 1, 10)), logistic=logistic)
    row = evaluate_fit(samples, LOGISTIC_TRUTH, uniform_basis(10))
    assert row["curve_rmse"] < 0.01
    assert row["curve_coverage"] == 1.0
    assert row["t_star_error"] == 0.0 and row["t_star_covered"] == 1.0
    assert row["t50_error"] == 0.0 and row["t50_covered"] == 1.0


def test_monotone_fit_has_no_inflection_metrics():
    samples = make_samples(np.ones((2, 1, 10)))
    samples.variant = ConstraintMode.MONOTONE_ONLY
    row = evaluate_fit(samples, LOGISTIC_TRUTH, uniform_basis(10))
    assert np.isnan(row["t_star_error"]) and np.isnan(row["t_star_covered"])
    assert np.isfinite(row["t50_error"])


def test_evaluate_fit_needs_draws():
    with pytest.raises(NumericalError):
        evaluate_fit(make_samples(np.zeros((0, 1, 10))), LOGISTIC_TRUTH, uniform_basis(10))


def test_aggregate_report():
    replicates = pd.DataFrame([
        {"truth": "LOGISTIC", "model": "S_SHAPED", "knot_range": "30-90", "replicate": 0, "status": "ok",
         "error": "", "curve_rmse": 0.1, "curve_coverage": 0.9, "t_star_error": 1.0, "t_star_covered": 1.0,
         "t50_error": -2.0, "t50_covered": 0.0, "runtime_s": 1.0},
        {"truth": "LOGISTIC", "model": "S_SHAPED", "knot_range": "30-90", "replicate": 1, "status": "ok",
         "error": "", "curve_rmse": 0.3, "curve_coverage": 0.7, "t_star_error": -3.0, "t_star_covered": 0.0,
         "t50_error": 2.0, "t50_covered": 1.0, "runtime_s": 3.0},
        {"truth": "LOGISTIC", "model": "S_SHAPED", "knot_range": "30-90", "replicate": 2, "status": "failed",
         "error": "ERROR NUMERICAL: x", "runtime_s": 0.5},
    ], columns=REPLICATE_COLUMNS)
    report = aggregate_report(replicates)
    assert list(report.columns) == REPORT_COLUMNS
    row = report.iloc[0]
    assert (row["n_replicates"], row["n_failed"]) == (3, 1)
    assert row["curve_rmse"] == pytest.approx(0.2)
    assert row["t_star_rmse"] == pytest.approx(np.sqrt(5.0))
    assert row["t50_rmse"] == pytest.approx(2.0)
    assert row["t50_coverage"] == pytest.approx(0.5)
    assert row["runtime_s"] == pytest.approx(2.0)


def test_aggregate_report_of_nothing():
    report = aggregate_report(pd.DataFrame(columns=REPLICATE_COLUMNS))
    assert report.empty and list(report.columns) == REPORT_COLUMNS


def test_format_range():
    assert format_range((30.0, 90.0)) == "30-90"
    assert format_range((0, 120)) == "0-120"


# ===== SWEEP =====

SMALL_DESIGN = SimDesign(n_subjects=25)


def sweep(**kwargs):
    model = ModelConfig(M=10)
    sampler = SamplerConfig(n_iter=6, burn_in=2, genz_n_mc=64, seed=3)
    return run_comparison(
        truths=[LOGISTIC_TRUTH],
        variants=[ConstraintMode.MONOTONE_ONLY, ConstraintMode.LOGISTIC_PARAMETRIC],
        n_replicates=1,
        seed=3,
        model_config=model,
        sampler_config=sampler,
        design=SMALL_DESIGN,
        **kwargs,
    )


def test_run_comparison_shapes():
    replicates, report = sweep(knot_ranges=[(30.0, 90.0), (0.0, 120.0)])
    assert list(replicates.columns) == REPLICATE_COLUMNS
    assert len(replicates) == 4
    assert set(replicates["knot_range"]) == {"30-90", "0-120"}
    assert len(report) == 4
    assert (replicates["status"] == "ok").all()
    monotone = replicates[replicates["model"] == "MONOTONE_ONLY"]
    assert monotone["t_star_error"].isna().all()


def test_run_comparison_is_deterministic_and_thread_safe():
    first, _ = sweep()
    second, _ = sweep(jobs=2)
    metrics = ["curve_rmse", "curve_coverage", "t50_error"]
    pd.testing.assert_frame_equal(first[metrics], second[metrics])


def test_failed_fit_is_recorded(monkeypatch):
    def broken(*args, **kwargs):
        raise NumericalError("boom")

    monkeypatch.setattr(simulation, "fit_simulated", broken)
    replicates, report = sweep()
    assert (replicates["status"] == "failed").all()
    assert replicates["error"].str.startswith("ERROR NUMERICAL").all()
    assert (report["n_failed"] == 1).all()
