"""
Long-format longitudinal biomarker data: loading, validation and the fixed
preprocessing pipeline (sign orientation -> learning-effect adjustment ->
standardization).
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.errors import DataParseError, DataValidationError
from schemas.dataset_schema import BiomarkerSpec, CovariateType, DatasetSchema

logger = logging.getLogger(__name__)

INTERCEPT = "intercept"
LEARNING_WINDOW_YEARS = 3.0
NORMAL_DIAGNOSES = ("normal", "cn", "nc", "control", "healthy")


# ============================================================================
# DATASET
# ============================================================================

@dataclass(frozen=True)
class LongitudinalDataset:
    """
    Visits are stored flat: row r belongs to subject `subject_index[r]`.
    Rows of one subject are contiguous and sorted by age. `Y` holds NaN
    wherever `observed` is False.
    """

    subject_ids: np.ndarray
    covariate_names: Tuple[str, ...]
    covariate_types: Tuple[str, ...]
    X: np.ndarray
    subject_index: np.ndarray
    ages: np.ndarray
    Y: np.ndarray
    observed: np.ndarray
    biomarkers: Tuple[BiomarkerSpec, ...]
    diagnosis: Optional[np.ndarray] = None
    oriented: bool = False

    def __post_init__(self):
        R, K = self.Y.shape
        if self.observed.shape != (R, K):
            raise DataValidationError("outcome and mask shapes differ")
        if self.ages.shape != (R,) or self.subject_index.shape != (R,):
            raise DataValidationError("ages and subject index must have one entry per visit")
        if len(self.biomarkers) != K:
            raise DataValidationError(f"{K} outcome columns but {len(self.biomarkers)} biomarker specs")
        if self.X.shape != (len(self.subject_ids), len(self.covariate_names)):
            raise DataValidationError("covariate matrix does not match subjects x covariates")
        if len(self.covariate_names) < 1:
            raise DataValidationError("at least one covariate column (the intercept) is required")
        if R and np.any(np.diff(self.subject_index) < 0):
            raise DataValidationError("visits must be grouped by subject")
        same = np.diff(self.subject_index) == 0
        if np.any(np.diff(self.ages)[same] <= 0):
            r = int(np.flatnonzero(same & (np.diff(self.ages) <= 0))[0])
            raise DataValidationError(
                f"ages must be strictly increasing within subject {self.subject_ids[self.subject_index[r]]}"
            )

    @property
    def N(self) -> int:
        return len(self.subject_ids)

    @property
    def K(self) -> int:
        return self.Y.shape[1]

    @property
    def q(self) -> int:
        return self.X.shape[1]

    @property
    def n_visits(self) -> int:
        return self.Y.shape[0]

    @property
    def visits_per_subject(self) -> np.ndarray:
        return np.bincount(self.subject_index, minlength=self.N)

    @property
    def biomarker_names(self) -> List[str]:
        return [b.name for b in self.biomarkers]

    @property
    def groups(self) -> List[str]:
        """Group labels in order of first appearance."""
        return list(dict.fromkeys(b.group for b in self.biomarkers))

    def group_members(self) -> Dict[str, List[int]]:
        members = {g: [] for g in self.groups}
        for k, b in enumerate(self.biomarkers):
            members[b.group].append(k)
        return members

    @property
    def first_row(self) -> np.ndarray:
        """Row of each subject's first visit."""
        counts = self.visits_per_subject
        return np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)

    @property
    def elapsed(self) -> np.ndarray:
        """Years since the subject's first visit, per row."""
        return self.ages - self.ages[self.first_row][self.subject_index]

    def outcomes_filled(self) -> np.ndarray:
        """Y with masked cells set to 0."""
        return np.where(self.observed, self.Y, 0.0)

    def observed_counts(self) -> np.ndarray:
        """J_ik: observed visits per subject and biomarker (N x K)."""
        counts = np.zeros((self.N, self.K))
        np.add.at(counts, self.subject_index, self.observed.astype(float))
        return counts


# ============================================================================
# PREPROCESS REPORT
# ============================================================================

@dataclass
class PreprocessReport:
    biomarkers: List[str]
    groups: List[str]
    signs: Dict[str, int] = field(default_factory=dict)
    means: Dict[str, float] = field(default_factory=dict)
    scales: Dict[str, float] = field(default_factory=dict)
    learning_slopes: Dict[str, float] = field(default_factory=dict)
    n_observed: Dict[str, int] = field(default_factory=dict)
    n_missing: Dict[str, int] = field(default_factory=dict)
    covariate_means: Dict[str, float] = field(default_factory=dict)
    covariate_scales: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def empty(cls, ds: LongitudinalDataset) -> "PreprocessReport":
        names = ds.biomarker_names
        return cls(
            biomarkers=names,
            groups=[b.group for b in ds.biomarkers],
            signs={b.name: b.sign for b in ds.biomarkers},
            means={n: 0.0 for n in names},
            scales={n: 1.0 for n in names},
            learning_slopes={n: 0.0 for n in names},
            n_observed={n: int(ds.observed[:, k].sum()) for k, n in enumerate(names)},
            n_missing={n: int((~ds.observed[:, k]).sum()) for k, n in enumerate(names)},
        )

    def merge(self, other: "PreprocessReport") -> "PreprocessReport":
        """Compose two passes applied in sequence (self first)."""
        merged = PreprocessReport(biomarkers=self.biomarkers, groups=self.groups)
        for name in self.biomarkers:
            merged.signs[name] = self.signs.get(name, 1)
            # y_final = ((y - m1) / s1 - m2) / s2
            s1, m1 = self.scales.get(name, 1.0), self.means.get(name, 0.0)
            s2, m2 = other.scales.get(name, 1.0), other.means.get(name, 0.0)
            merged.means[name] = m1 + s1 * m2
            merged.scales[name] = s1 * s2
            merged.learning_slopes[name] = self.learning_slopes.get(name, 0.0) + s1 * other.learning_slopes.get(name, 0.0)
            merged.n_observed[name] = other.n_observed.get(name, self.n_observed.get(name, 0))
            merged.n_missing[name] = other.n_missing.get(name, self.n_missing.get(name, 0))
        merged.covariate_means = {**self.covariate_means, **other.covariate_means}
        merged.covariate_scales = {**self.covariate_scales, **other.covariate_scales}
        return merged

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for name, group in zip(self.biomarkers, self.groups):
            rows.append({
                "biomarker": name,
                "group": group,
                "sign": self.signs.get(name, 1),
                "mean": self.means.get(name, 0.0),
                "scale": self.scales.get(name, 1.0),
                "learning_slope": self.learning_slopes.get(name, 0.0),
                "learning_slope_std": self.learning_slopes.get(name, 0.0) / self.scales.get(name, 1.0),
                "n_observed": self.n_observed.get(name, 0),
                "n_missing": self.n_missing.get(name, 0),
            })
        return pd.DataFrame(rows, columns=[
            "biomarker", "group", "sign", "mean", "scale", "learning_slope", "learning_slope_std",
            "n_observed", "n_missing",
        ])


# ============================================================================
# LOADING
# ============================================================================

def _numeric_column(frame: pd.DataFrame, column: str) -> pd.Series:
    raw = frame[column]
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna() & raw.notna() & (raw.astype(str).str.strip() != "")
    if bad.any():
        line = int(bad.idxmax()) + 2
        raise DataParseError(f"line {line}: column '{column}' has non-numeric value '{raw[bad.idxmax()]}'")
    return values


def load_dataset(path: Union[str, Path], schema: DatasetSchema) -> LongitudinalDataset:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, keep_default_na=False, na_values=[""])
    except FileNotFoundError:
        raise DataParseError(f"data file not found: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataParseError(f"cannot parse {path.name}: {e}")
    frame.columns = [c.strip() for c in frame.columns]

    required = [schema.subject_column, schema.age_column] + schema.covariate_names
    missing_cols = [c for c in required if c not in frame.columns]
    if missing_cols:
        raise DataParseError(f"missing required columns: {', '.join(missing_cols)}")
    declared = set(required) | set(schema.biomarker_names)
    if schema.diagnosis_column:
        if schema.diagnosis_column not in frame.columns:
            raise DataParseError(f"missing diagnosis column '{schema.diagnosis_column}'")
        declared.add(schema.diagnosis_column)
    unknown = [c for c in frame.columns if c not in declared]
    if unknown:
        raise DataValidationError(f"unknown biomarker columns: {', '.join(unknown)}")
    absent = [b for b in schema.biomarker_names if b not in frame.columns]
    if absent:
        raise DataValidationError(f"declared biomarkers missing from file: {', '.join(absent)}")
    if frame.empty:
        raise DataParseError(f"{path.name} has no data rows")

    if frame[schema.subject_column].isna().any():
        line = int(frame[schema.subject_column].isna().idxmax()) + 2
        raise DataParseError(f"line {line}: missing subject id")
    ages = _numeric_column(frame, schema.age_column)
    if ages.isna().any():
        raise DataParseError(f"line {int(ages.isna().idxmax()) + 2}: missing age")
    numeric = {c: _numeric_column(frame, c) for c in schema.covariate_names + schema.biomarker_names}

    lo, hi = schema.age_range
    if ages.min() < lo or ages.max() > hi:
        raise DataValidationError(f"ages must lie in [{lo:g}, {hi:g}]")

    data = pd.DataFrame({"subject": frame[schema.subject_column].str.strip(), "age": ages, **numeric})
    if schema.diagnosis_column:
        data["diagnosis"] = frame[schema.diagnosis_column].fillna("").str.strip()

    if schema.covariate_names:
        incomplete = data[schema.covariate_names].isna().any(axis=1)
        if incomplete.any():
            logger.warning(f"Dropping {int(incomplete.sum())} rows with missing covariates")
            data = data[~incomplete]

    order = {s: i for i, s in enumerate(dict.fromkeys(data["subject"]))}
    data = data.assign(_order=data["subject"].map(order), _row=np.arange(len(data)))
    data = data.sort_values(["_order", "_row"], kind="stable").reset_index(drop=True)

    for subject, ages_s in data.groupby("_order", sort=False)["age"]:
        steps = np.diff(ages_s.to_numpy())
        if np.any(steps == 0):
            raise DataValidationError(f"duplicate age within subject {data.loc[ages_s.index[0], 'subject']}")
        if np.any(steps < 0):
            raise DataValidationError(f"ages not increasing within subject {data.loc[ages_s.index[0], 'subject']}")

    if schema.min_baseline_age is not None:
        baseline = data.groupby("_order", sort=False)["age"].transform("first")
        early = baseline < schema.min_baseline_age
        if early.any():
            n_subjects = data.loc[early, "subject"].nunique()
            logger.warning(f"Excluding {n_subjects} subjects enrolled before age {schema.min_baseline_age:g}")
            data = data[~early].reset_index(drop=True)
            data["_order"] = data["_order"].rank(method="dense").astype(int) - 1

    if data.empty:
        raise DataValidationError("no usable rows after exclusions")

    first = data.groupby("_order", sort=False).head(1)
    for spec in schema.covariates:
        if spec.kind == CovariateType.BINARY and not data[spec.name].isin([0, 1]).all():
            raise DataValidationError(f"binary covariate '{spec.name}' must be 0 or 1")
        varying = data.groupby("_order", sort=False)[spec.name].nunique() > 1
        if varying.any():
            logger.warning(f"Covariate '{spec.name}' varies within {int(varying.sum())} subjects; using baseline values")

    Y = data[schema.biomarker_names].to_numpy(dtype=float)
    observed = ~np.isnan(Y)
    for k, name in enumerate(schema.biomarker_names):
        if not observed[:, k].any():
            raise DataValidationError(f"biomarker '{name}' has no observed values")

    X = np.column_stack([np.ones(len(first))] + [first[c].to_numpy(dtype=float) for c in schema.covariate_names])
    ds = LongitudinalDataset(
        subject_ids=first["subject"].to_numpy(dtype=object),
        covariate_names=(INTERCEPT, *schema.covariate_names),
        covariate_types=("constant", *[c.kind.value for c in schema.covariates]),
        X=X,
        subject_index=data["_order"].to_numpy(dtype=int),
        ages=data["age"].to_numpy(dtype=float),
        Y=Y,
        observed=observed,
        biomarkers=tuple(schema.biomarkers),
        diagnosis=data["diagnosis"].to_numpy(dtype=object) if schema.diagnosis_column else None,
    )
    logger.info(
        f"Loaded {ds.N} subjects, {ds.n_visits} visits, {ds.K} biomarkers "
        f"({int((~observed).sum())} missing measurements)"
    )
    return ds


def to_frame(ds: LongitudinalDataset, subject_column: str = "subject_id", age_column: str = "age") -> pd.DataFrame:
    """Long-format table in the input layout (blank = missing)."""
    frame = pd.DataFrame({
        subject_column: ds.subject_ids[ds.subject_index],
        age_column: ds.ages,
    })
    for j, name in enumerate(ds.covariate_names[1:], start=1):
        frame[name] = ds.X[ds.subject_index, j]
    for k, name in enumerate(ds.biomarker_names):
        frame[name] = np.where(ds.observed[:, k], ds.Y[:, k], np.nan)
    if ds.diagnosis is not None:
        frame["diagnosis"] = ds.diagnosis
    return frame


# ============================================================================
# PREPROCESSING
# ============================================================================

def orient(ds: LongitudinalDataset) -> LongitudinalDataset:
    """Apply biomarker signs so that larger means more abnormal. No-op once applied."""
    if ds.oriented:
        return ds
    signs = np.array([b.sign for b in ds.biomarkers], dtype=float)
    return replace(ds, Y=ds.Y * signs, oriented=True)


def standardize(ds: LongitudinalDataset) -> Tuple[LongitudinalDataset, PreprocessReport]:
    """Z-score each oriented biomarker (population sd) and each continuous covariate."""
    ds = orient(ds)
    report = PreprocessReport.empty(ds)
    Y = ds.Y.copy()
    for k, name in enumerate(ds.biomarker_names):
        values = ds.Y[ds.observed[:, k], k]
        if values.size < 2:
            raise DataValidationError(f"biomarker '{name}' needs at least 2 observed values to standardize")
        mean, scale = float(values.mean()), float(values.std())
        if not scale > 1e-12:
            raise DataValidationError(f"biomarker '{name}' has zero variance")
        Y[:, k] = (ds.Y[:, k] - mean) / scale
        report.means[name], report.scales[name] = mean, scale

    X = ds.X.copy()
    for j, (name, kind) in enumerate(zip(ds.covariate_names, ds.covariate_types)):
        if kind != CovariateType.CONTINUOUS.value:
            continue
        mean, scale = float(X[:, j].mean()), float(X[:, j].std())
        if not scale > 1e-12:
            raise DataValidationError(f"continuous covariate '{name}' has zero variance")
        X[:, j] = (X[:, j] - mean) / scale
        report.covariate_means[name], report.covariate_scales[name] = mean, scale

    logger.debug(f"Standardized {ds.K} biomarkers")
    return replace(ds, Y=Y, X=X), report


def adjust_learning_effect(ds: LongitudinalDataset) -> Tuple[LongitudinalDataset, PreprocessReport]:
    """
    For cognitive biomarkers, fit y(t_j) - y(t_1) = alpha * (t_j - t_1) without
    intercept on visits within three years of the first one, then subtract
    alpha * min(elapsed, 3).
    """
    report = PreprocessReport.empty(ds)
    elapsed = ds.elapsed
    first = ds.first_row[ds.subject_index]
    Y = ds.Y.copy()
    for k, spec in enumerate(ds.biomarkers):
        if not spec.cognitive:
            continue
        eligible = (
            ds.observed[:, k] & ds.observed[first, k]
            & (elapsed > 0) & (elapsed <= LEARNING_WINDOW_YEARS)
        )
        if not eligible.any():
            raise DataValidationError(f"no visit pairs within {LEARNING_WINDOW_YEARS:g} years for cognitive biomarker '{spec.name}'")
        dt = elapsed[eligible]
        dy = ds.Y[eligible, k] - ds.Y[first[eligible], k]
        slope = float(dt @ dy / (dt @ dt))
        Y[:, k] = ds.Y[:, k] - slope * np.minimum(elapsed, LEARNING_WINDOW_YEARS)
        report.learning_slopes[spec.name] = slope
        logger.info(f"Learning-effect slope for '{spec.name}': {slope:.4f} per year ({int(eligible.sum())} pairs)")
    return replace(ds, Y=Y), report


def preprocess(ds: LongitudinalDataset) -> Tuple[LongitudinalDataset, PreprocessReport]:
    """orient -> learning-effect adjustment -> standardize."""
    ds = orient(ds)
    ds, learning = adjust_learning_effect(ds)
    ds, scaling = standardize(ds)
    return ds, learning.merge(scaling)


def onset_table(ds: LongitudinalDataset, normal_labels: Sequence[str] = NORMAL_DIAGNOSES) -> pd.DataFrame:
    """Per subject: baseline age and age at the first non-normal diagnosis (blank if none)."""
    if ds.diagnosis is None:
        raise DataValidationError("dataset has no diagnosis column")
    normal = {label.lower() for label in normal_labels} | {""}
    rows = []
    for i, subject in enumerate(ds.subject_ids):
        visits = np.flatnonzero(ds.subject_index == i)
        labels = [str(ds.diagnosis[r]) for r in visits]
        abnormal = [r for r, label in zip(visits, labels) if label.lower() not in normal]
        rows.append({
            "subject_id": subject,
            "baseline_age": float(ds.ages[visits[0]]),
            "onset_age": float(ds.ages[abnormal[0]]) if abnormal else np.nan,
            "onset_diagnosis": str(ds.diagnosis[abnormal[0]]) if abnormal else "",
        })
    return pd.DataFrame(rows, columns=["subject_id", "baseline_age", "onset_age", "onset_diagnosis"])
