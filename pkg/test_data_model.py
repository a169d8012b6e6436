from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import make_dataset
from config.settings_file import read_settings
from core.data_model import (
    adjust_learning_effect,
    load_dataset,
    onset_table,
    orient,
    preprocess,
    standardize,
    to_frame,
)
from core.errors import DataParseError, DataValidationError
from schemas import BiomarkerSpec, load_dataset_schema


def schema_for(biomarkers="y", covariates="", **extra):
    settings = {"biomarkers": biomarkers, "covariates": covariates, **extra}
    return load_dataset_schema(settings)


def write_csv(tmp_path, text):
    path = tmp_path / "data.csv"
    path.write_text(text)
    return path


def test_load_toy_dataset(toy_csv):
    data, schema_path = toy_csv
    ds = load_dataset(data, load_dataset_schema(read_settings(schema_path)))
    assert (ds.N, ds.n_visits, ds.K, ds.q) == (5, 20, 2, 2)
    assert ds.covariate_names == ("intercept", "female")
    assert ds.groups == ["COG", "CSF"]
    assert int((~ds.observed[:, 1]).sum()) == 4
    assert np.all(np.isnan(ds.Y[~ds.observed]))
    assert_allclose(ds.X[:, 0], 1.0)
    assert_allclose(ds.visits_per_subject, 4)
    assert_allclose(ds.observed_counts().sum(axis=0), [20, 16])


def test_rows_grouped_by_subject_in_first_appearance_order(tmp_path):
    path = write_csv(tmp_path, "subject_id,age,y\nB,60,1\nA,50,2\nB,61,3\nA,52,4\n")
    ds = load_dataset(path, schema_for())
    assert list(ds.subject_ids) == ["B", "A"]
    assert_allclose(ds.ages, [60, 61, 50, 52])
    assert_allclose(ds.Y[:, 0], [1, 3, 2, 4])
    assert_allclose(ds.elapsed, [0, 1, 0, 2])


def test_non_numeric_value_reports_line(tmp_path):
    path = write_csv(tmp_path, "subject_id,age,y\nA,60,1\nA,sixty-one,2\n")
    with pytest.raises(DataParseError, match="line 3"):
        load_dataset(path, schema_for())


def test_missing_required_column(tmp_path):
    path = write_csv(tmp_path, "subject_id,y\nA,1\n")
    with pytest.raises(DataParseError):
        load_dataset(path, schema_for())


def test_missing_file(tmp_path):
    with pytest.raises(DataParseError):
        load_dataset(tmp_path / "absent.csv", schema_for())


def test_unknown_column_rejected(tmp_path):
    path = write_csv(tmp_path, "subject_id,age,y,z\nA,60,1,2\n")
    with pytest.raises(DataValidationError, match="unknown"):
        load_dataset(path, schema_for())


def test_duplicate_age_rejected(tmp_path):
    path = write_csv(tmp_path, "subject_id,age,y\nA,60,1\nA,60,2\n")
    with pytest.raises(DataValidationError, match="duplicate"):
        load_dataset(path, schema_for())


def test_decreasing_age_rejected(tmp_path):
    path = write_csv(tmp_path, "subject_id,age,y\nA,62,1\nA,60,2\n")
    with pytest.raises(DataValidationError):
        load_dataset(path, schema_for())


def test_age_outside_range_rejected(tmp_path):
    path = write_csv(tmp_path, "subject_id,age,y\nA,130,1\n")
    with pytest.raises(DataValidationError):
        load_dataset(path, schema_for())


def test_binary_covariate_checked(tmp_path):
    path = write_csv(tmp_path, "subject_id,age,sex,y\nA,60,2,1\n")
    with pytest.raises(DataValidationError, match="binary"):
        load_dataset(path, schema_for(covariates="sex:binary"))


def test_biomarker_without_observations_rejected(tmp_path):
    path = write_csv(tmp_path, "subject_id,age,y,w\nA,60,1,\nA,61,2,\n")
    with pytest.raises(DataValidationError):
        load_dataset(path, schema_for(biomarkers="y, w"))


def test_min_baseline_age_excludes_subjects(tmp_path):
    path = write_csv(tmp_path, "subject_id,age,y\nA,40,1\nA,45,2\nB,60,1\nB,62,2\n")
    ds = load_dataset(path, schema_for(min_baseline_age="50"))
    assert list(ds.subject_ids) == ["B"]
    assert_allclose(ds.subject_index, [0, 0])


def test_dataset_checks_age_order():
    with pytest.raises(DataValidationError):
        make_dataset([[60.0, 59.0]])


def test_orient_flips_sign_once():
    ds = make_dataset([[60, 61]], Y=[[1.0], [2.0]], biomarkers=(BiomarkerSpec(name="y", sign=-1),))
    once = orient(ds)
    assert_allclose(once.Y[:, 0], [-1, -2])
    assert_allclose(orient(once).Y, once.Y)


def test_standardize_uses_observed_values():
    Y = np.array([[1.0], [np.nan], [3.0], [5.0]])
    ds = make_dataset([[60, 61], [62, 63]], Y=Y)
    out, report = standardize(ds)
    values = out.Y[out.observed[:, 0], 0]
    assert values.mean() == pytest.approx(0.0, abs=1e-12)
    assert values.std() == pytest.approx(1.0)
    assert report.means["y"] == pytest.approx(3.0)
    assert np.isnan(out.Y[1, 0])


def test_standardize_continuous_covariates_only():
    X = np.array([[1.0, 0.0, 10.0], [1.0, 1.0, 20.0], [1.0, 1.0, 30.0]])
    ds = make_dataset([[60, 61], [62, 63], [64, 65]], Y=np.arange(6.0), X=X,
                      covariate_types=("constant", "binary", "continuous"))
    out, report = standardize(ds)
    assert_allclose(out.X[:, :2], X[:, :2])
    assert out.X[:, 2].mean() == pytest.approx(0.0, abs=1e-12)
    assert "x2" in report.covariate_scales and "x1" not in report.covariate_scales


def test_zero_variance_biomarker_rejected():
    ds = make_dataset([[60, 61, 62]], Y=[[1.0], [1.0], [1.0]])
    with pytest.raises(DataValidationError):
        standardize(ds)


def test_learning_effect_slope_and_adjustment():
    ages = [60.0, 61.0, 62.0, 63.0, 65.0]
    Y = 0.5 * (np.array(ages) - 60.0)
    ds = make_dataset([ages], Y=Y, biomarkers=(BiomarkerSpec(name="y", cognitive=True),))
    out, report = adjust_learning_effect(ds)
    assert report.learning_slopes["y"] == pytest.approx(0.5)
    # the gain is capped after three years of follow-up
    assert_allclose(out.Y[:, 0], [0, 0, 0, 0, 1.0], atol=1e-12)


def test_learning_effect_skips_non_cognitive():
    ds = make_dataset([[60, 61]], Y=[[0.0], [1.0]])
    out, report = adjust_learning_effect(ds)
    assert_allclose(out.Y, ds.Y)
    assert report.learning_slopes["y"] == 0.0


def test_learning_effect_needs_pairs():
    ds = make_dataset([[60, 70]], Y=[[0.0], [1.0]], biomarkers=(BiomarkerSpec(name="y", cognitive=True),))
    with pytest.raises(DataValidationError):
        adjust_learning_effect(ds)


def test_preprocess_report_composes_passes():
    ages = [[60.0, 61.0, 62.0, 70.0], [55.0, 56.5, 58.0, 66.0]]
    rng = np.random.default_rng(1)
    Y = rng.normal(size=8)
    spec = BiomarkerSpec(name="y", sign=-1, cognitive=True)
    ds = make_dataset(ages, Y=Y, biomarkers=(spec,))
    out, report = preprocess(ds)
    slope = report.learning_slopes["y"]
    elapsed = np.minimum(ds.elapsed, 3.0)
    expected = (-Y - slope * elapsed - report.means["y"]) / report.scales["y"]
    assert_allclose(out.Y[:, 0], expected, atol=1e-10)
    frame = report.to_frame()
    assert list(frame["biomarker"]) == ["y"]
    assert frame.loc[0, "sign"] == -1


def pipeline_dataset():
    ages = [[60.0, 61.0, 62.0, 70.0], [55.0, 56.5, 58.0, 66.0], [64.0, 65.0, 67.5]]
    rng = np.random.default_rng(3)
    Y = rng.normal(size=(11, 2))
    observed = np.ones((11, 2), dtype=bool)
    observed[[2, 4, 9], 0] = False
    observed[[0, 7], 1] = False
    biomarkers = (BiomarkerSpec(name="memory", sign=-1, cognitive=True), BiomarkerSpec(name="csf"))
    return make_dataset(ages, Y=Y, observed=observed, biomarkers=biomarkers)


def test_preprocess_is_idempotent():
    once, _ = preprocess(pipeline_dataset())
    twice, report = preprocess(once)
    assert_allclose(twice.Y, once.Y, atol=1e-12)
    assert report.learning_slopes["memory"] == pytest.approx(0.0, abs=1e-12)
    assert report.means["csf"] == pytest.approx(0.0, abs=1e-12)
    assert report.scales["csf"] == pytest.approx(1.0, abs=1e-12)


def test_masked_cells_do_not_reach_preprocessing():
    ds = pipeline_dataset()
    perturbed = replace(ds, Y=np.where(ds.observed, ds.Y, 1e6))
    clean, clean_report = preprocess(ds)
    noisy, noisy_report = preprocess(perturbed)
    np.testing.assert_array_equal(noisy.Y[ds.observed], clean.Y[ds.observed])
    assert noisy_report.learning_slopes == clean_report.learning_slopes
    assert noisy_report.scales == clean_report.scales

def test_onset_table():
    diagnosis = np.array(["CN", "CN", "MCI", "normal", "normal"], dtype=object)
    ds = make_dataset([[60, 62, 64], [70, 72]], Y=np.arange(5.0), diagnosis=diagnosis)
    table = onset_table(ds)
    assert list(table.columns) == ["subject_id", "baseline_age", "onset_age", "onset_diagnosis"]
    assert table.loc[0, "onset_age"] == 64.0 and table.loc[0, "onset_diagnosis"] == "MCI"
    assert np.isnan(table.loc[1, "onset_age"])


def test_onset_table_needs_diagnosis():
    with pytest.raises(DataValidationError):
        onset_table(make_dataset([[60, 61]]))


def test_to_frame_layout(toy_csv):
    data, schema_path = toy_csv
    ds = load_dataset(data, load_dataset_schema(read_settings(schema_path)))
    frame = to_frame(ds)
    assert list(frame.columns) == ["subject_id", "age", "female", "memory", "csf"]
    assert frame["csf"].isna().sum() == 4
