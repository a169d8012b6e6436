import pytest

from config.settings_file import parse_pair, read_settings, split_list
from core.errors import ConfigError
from schemas import (
    ConstraintMode,
    ContrastKind,
    CovariateType,
    load_dataset_schema,
    load_model_settings,
    parse_contrast,
)


def write(tmp_path, text, name="model.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_read_settings_skips_comments(tmp_path):
    path = write(tmp_path, "# a comment\nM = 12\nvariant = MONOTONE_ONLY  # trailing\nknot_range = 30,90\n")
    settings = read_settings(path)
    assert settings == {"M": "12", "variant": "MONOTONE_ONLY", "knot_range": "30,90"}


def test_read_settings_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        read_settings(tmp_path / "nope.cfg")


def test_split_and_pair_helpers():
    assert split_list(" a, b ,,c ") == ["a", "b", "c"]
    assert split_list("") == []
    assert parse_pair("30, 90", "range") == (30.0, 90.0)
    with pytest.raises(ConfigError):
        parse_pair("30", "range")
    with pytest.raises(ConfigError):
        parse_pair("a,b", "range")


def test_dataset_schema_from_settings(toy_csv):
    _, schema_path = toy_csv
    schema = load_dataset_schema(read_settings(schema_path))
    assert schema.covariate_names == ["female"]
    assert schema.covariates[0].kind == CovariateType.BINARY
    assert schema.biomarker_names == ["memory", "csf"]
    memory, csf = schema.biomarkers
    assert memory.group == "COG" and memory.cognitive and memory.sign == 1
    assert csf.group == "CSF" and csf.sign == -1 and not csf.cognitive
    assert schema.age_range == (0.0, 120.0)


@pytest.mark.parametrize("settings", [
    {"biomarkers": "a", "colour": "red"},
    {"covariates": "x:binary"},
    {"biomarkers": "a", "group.b": "G"},
    {"biomarkers": "a", "sign.a": "2"},
    {"biomarkers": "a", "covariates": "x:ordinal"},
    {"biomarkers": "a, a"},
    {"biomarkers": "a", "age_range": "90,30"},
    {"biomarkers": "intercept"},
])
def test_dataset_schema_rejects_bad_settings(settings):
    with pytest.raises(ConfigError):
        load_dataset_schema(settings)


def test_model_settings_defaults():
    model, sampler, contrasts = load_model_settings({})
    assert model.variant == ConstraintMode.S_SHAPED
    assert model.M == 24
    assert model.hyper_scale == pytest.approx(1 / 20)
    assert sampler.burn_in < sampler.n_iter
    assert contrasts == []


def test_model_settings_parsed(tmp_path):
    path = write(tmp_path, (
        "variant = MONOTONE_ONLY\n"
        "M = 12\n"
        "knot_range = 30,90\n"
        "rnd_shape_exact = true\n"
        "n_iter = 200\n"
        "burn_in = 50\n"
        "genz_n_mc = 256\n"
        "contrast.female_effect = female:1\n"
        "contrast.late = age:60:80\n"
    ))
    model, sampler, contrasts = load_model_settings(read_settings(path))
    assert model.variant == ConstraintMode.MONOTONE_ONLY
    assert model.M == 12 and model.knot_range == (30.0, 90.0)
    assert model.rnd_shape_exact
    assert model.hyper_scale == 0.01
    assert (sampler.n_iter, sampler.burn_in, sampler.genz_n_mc) == (200, 50, 256)
    by_label = {c.label: c for c in contrasts}
    assert by_label["female_effect"].kind == ContrastKind.COVARIATE
    assert by_label["female_effect"].deltas == {"female": 1.0}
    assert by_label["late"].ages == (60.0, 80.0)


@pytest.mark.parametrize("settings", [
    {"bogus": "1"},
    {"M": "6"},
    {"variant": "WIGGLY"},
    {"n_iter": "100", "burn_in": "100"},
    {"knot_range": "90,30"},
    {"target_accept": "1.5"},
])
def test_model_settings_reject_bad_values(settings):
    with pytest.raises(ConfigError):
        load_model_settings(settings)


def test_parse_contrast_grammar():
    c = parse_contrast("mix", "female:1, education:0.5")
    assert c.deltas == {"female": 1.0, "education": 0.5}
    assert parse_contrast("bare", "female").deltas == {"female": 1.0}
    with pytest.raises(ConfigError):
        parse_contrast("bad", "age:50")
    with pytest.raises(ConfigError):
        parse_contrast("bad", "age:fifty:90")
    with pytest.raises(ConfigError):
        parse_contrast("bad", "female:lots")
