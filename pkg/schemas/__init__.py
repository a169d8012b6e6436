# Schemas module
# Organizes the pydantic configuration schemas

from schemas.model_config import (
    ConstraintMode,
    ContrastKind,
    ModelConfig,
    SamplerConfig,
    Contrast,
    load_model_settings,
    parse_contrast,
)
from schemas.dataset_schema import (
    CovariateType,
    CovariateSpec,
    BiomarkerSpec,
    DatasetSchema,
    load_dataset_schema,
)
from schemas.manifest import RunManifest

__all__ = [
    "ConstraintMode",
    "ContrastKind",
    "ModelConfig",
    "SamplerConfig",
    "Contrast",
    "load_model_settings",
    "parse_contrast",
    "CovariateType",
    "CovariateSpec",
    "BiomarkerSpec",
    "DatasetSchema",
    "load_dataset_schema",
    "RunManifest",
]
