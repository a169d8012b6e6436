# Pydantic Schemas describing a long-format biomarker CSV

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from config import app_config
from config.settings_file import optional_float, parse_pair, prefixed, split_list
from core.errors import ConfigError


class CovariateType(str, Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


class CovariateSpec(BaseModel):
    name: str
    kind: CovariateType = CovariateType.CONTINUOUS


class BiomarkerSpec(BaseModel):
    name: str
    group: str = "ALL"
    sign: int = 1
    cognitive: bool = False

    @field_validator("sign")
    @classmethod
    def validate_sign(cls, v):
        if v not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {v}")
        return v


class DatasetSchema(BaseModel):
    covariates: List[CovariateSpec] = Field(default_factory=list)
    biomarkers: List[BiomarkerSpec]
    age_range: Tuple[float, float] = (app_config.AGE_MIN, app_config.AGE_MAX)
    subject_column: str = "subject_id"
    age_column: str = "age"
    diagnosis_column: Optional[str] = None
    min_baseline_age: Optional[float] = None

    @model_validator(mode="after")
    def validate_names(self):
        names = [c.name for c in self.covariates] + [b.name for b in self.biomarkers]
        if len(set(names)) != len(names):
            raise ValueError("covariate and biomarker names must be unique")
        if not self.biomarkers:
            raise ValueError("at least one biomarker is required")
        if "intercept" in names:
            raise ValueError("'intercept' is reserved")
        if not self.age_range[0] < self.age_range[1]:
            raise ValueError(f"age_range must satisfy lo < hi, got {self.age_range}")
        return self

    @property
    def biomarker_names(self) -> List[str]:
        return [b.name for b in self.biomarkers]

    @property
    def covariate_names(self) -> List[str]:
        return [c.name for c in self.covariates]


SCHEMA_KEYS = {
    "covariates", "biomarkers", "cognitive", "age_range", "subject_column",
    "age_column", "diagnosis_column", "min_baseline_age",
}


def load_dataset_schema(settings: Dict[str, str]) -> DatasetSchema:
    """
    Build a DatasetSchema from flat settings, e.g.

        covariates = apoe4:binary, female:binary, education:continuous
        biomarkers = ptau, abeta_ratio, hippo, dsst
        group.ptau = CSF
        sign.abeta_ratio = -1
        cognitive = dsst
        age_range = 0,120
    """
    for key in settings:
        if key in SCHEMA_KEYS or key.startswith("group.") or key.startswith("sign."):
            continue
        raise ConfigError(f"unknown schema config key '{key}'")

    if "biomarkers" not in settings:
        raise ConfigError("schema config must declare 'biomarkers'")

    covariates = []
    for item in split_list(settings.get("covariates", "")):
        name, _, kind = item.partition(":")
        try:
            covariates.append(CovariateSpec(name=name.strip(), kind=(kind.strip() or "continuous")))
        except ValueError:
            raise ConfigError(f"bad covariate declaration '{item}' (use name:binary or name:continuous)")

    names = split_list(settings["biomarkers"])
    groups = prefixed(settings, "group")
    signs = prefixed(settings, "sign")
    cognitive = set(split_list(settings.get("cognitive", "")))
    for name in list(groups) + list(signs) + list(cognitive):
        if name not in names:
            raise ConfigError(f"schema refers to undeclared biomarker '{name}'")

    biomarkers = []
    for name in names:
        try:
            sign = int(float(signs.get(name, "1")))
            biomarkers.append(BiomarkerSpec(
                name=name,
                group=groups.get(name, "ALL"),
                sign=sign,
                cognitive=name in cognitive,
            ))
        except ValueError as e:
            raise ConfigError(f"biomarker '{name}': {e}")

    values = {"covariates": covariates, "biomarkers": biomarkers}
    if settings.get("age_range"):
        values["age_range"] = parse_pair(settings["age_range"], "age_range")
    for key in ("subject_column", "age_column", "diagnosis_column"):
        if settings.get(key):
            values[key] = settings[key]
    min_age = optional_float(settings, "min_baseline_age")
    if min_age is not None:
        values["min_baseline_age"] = min_age
    try:
        return DatasetSchema(**values)
    except ValueError as e:
        raise ConfigError(f"invalid schema config: {e}")
