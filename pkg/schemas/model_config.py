# Pydantic Schemas for model, sampler and contrast configuration

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from config import app_config
from config.settings_file import parse_pair, prefixed, split_list
from core.errors import ConfigError


# ============================================================================
# ENUMS
# ============================================================================

class ConstraintMode(str, Enum):
    S_SHAPED = "S_SHAPED"
    MONOTONE_ONLY = "MONOTONE_ONLY"
    LOGISTIC_PARAMETRIC = "LOGISTIC_PARAMETRIC"


class ContrastKind(str, Enum):
    COVARIATE = "covariate"
    AGE = "age"


# ============================================================================
# MODEL CONFIG
# ============================================================================

class ModelConfig(BaseModel):
    variant: ConstraintMode = ConstraintMode.S_SHAPED
    M: int = Field(app_config.BASIS_SIZE, ge=6, description="Number of spline basis functions")
    beta_prior_sd: float = Field(100.0, gt=0)
    variance_prior_shape: float = Field(3.0, gt=0)
    variance_prior_scale: float = Field(0.5, gt=0)
    hyper_prior_scale: Optional[float] = Field(None, gt=0, description="Defaults to 1/(M-4) or 0.01")
    kernel_nu: float = Field(app_config.KERNEL_NU, gt=0)
    knot_range: Tuple[float, float] = (app_config.AGE_MIN, app_config.AGE_MAX)
    age_domain: Tuple[float, float] = (app_config.AGE_MIN, app_config.AGE_MAX)
    rnd_shape_exact: bool = False
    share_inflection: bool = True
    # truncated-normal priors (mean, sd) of the logistic comparator
    logistic_prior_h: Tuple[float, float] = (2.0, 1.0)
    logistic_prior_c: Tuple[float, float] = (70.0, 30.0)
    logistic_prior_s: Tuple[float, float] = (5.0, 1.0)
    logistic_step: float = Field(0.05, gt=0)

    @field_validator("knot_range", "age_domain")
    @classmethod
    def validate_range(cls, v):
        if not v[0] < v[1]:
            raise ValueError(f"range must satisfy lo < hi, got {v}")
        return v

    @model_validator(mode="after")
    def validate_shape_mode(self):
        if self.variant == ConstraintMode.S_SHAPED and self.M < 8:
            raise ValueError("S_SHAPED variant needs M >= 8")
        return self

    @property
    def hyper_scale(self) -> float:
        """Scale of the exponential-in-variance hyperprior on sigma_s^2, sigma_v^2."""
        if self.hyper_prior_scale is not None:
            return self.hyper_prior_scale
        if self.variant == ConstraintMode.MONOTONE_ONLY:
            return 0.01
        return 1.0 / (self.M - 4)


class SamplerConfig(BaseModel):
    n_iter: int = Field(app_config.N_ITER, ge=1)
    burn_in: int = Field(app_config.BURN_IN, ge=0)
    thin: int = Field(app_config.THIN, ge=1)
    seed: int = app_config.DEFAULT_SEED
    hyper_step: float = Field(app_config.HYPER_STEP, gt=0, description="Initial log-scale proposal sd")
    target_accept: float = Field(app_config.TARGET_ACCEPT, gt=0, lt=1)
    genz_n_mc: int = Field(app_config.GENZ_N_MC, ge=16)
    hmc_warmup_on_switch: int = Field(app_config.HMC_WARMUP_ON_SWITCH, ge=0)
    log_every: int = Field(app_config.LOG_EVERY, ge=1)
    jobs: int = Field(1, ge=1, description="Threads for per-biomarker work inside one iteration")

    @model_validator(mode="after")
    def validate_burn_in(self):
        if self.burn_in >= self.n_iter:
            raise ValueError(f"burn_in ({self.burn_in}) must be < n_iter ({self.n_iter})")
        return self


class Contrast(BaseModel):
    label: str
    kind: ContrastKind
    deltas: Dict[str, float] = Field(default_factory=dict)
    ages: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def validate_kind(self):
        if self.kind == ContrastKind.AGE and self.ages is None:
            raise ValueError(f"age contrast '{self.label}' needs two ages")
        return self


# ============================================================================
# LOADING FROM KEY-VALUE SETTINGS
# ============================================================================

MODEL_KEYS = {
    "variant", "M", "beta_prior_sd", "variance_prior_shape", "variance_prior_scale",
    "hyper_prior_scale", "kernel_nu", "knot_range", "age_domain", "rnd_shape_exact",
    "share_inflection", "logistic_prior_h", "logistic_prior_c", "logistic_prior_s",
    "logistic_step",
}
SAMPLER_KEYS = {
    "n_iter", "burn_in", "thin", "seed", "hyper_step", "target_accept", "genz_n_mc",
    "hmc_warmup_on_switch", "log_every", "jobs",
}
PAIR_KEYS = {"knot_range", "age_domain", "logistic_prior_h", "logistic_prior_c", "logistic_prior_s"}


def parse_contrast(label: str, value: str) -> Contrast:
    """
    Contrast grammar:
      age:50:90                   -> f_k(90) - f_k(50)
      female:1, education:0.5     -> 1*beta_female + 0.5*beta_education
    """
    value = value.strip()
    if value.startswith("age:"):
        parts = value.split(":")
        if len(parts) != 3:
            raise ConfigError(f"contrast '{label}': expected age:<t1>:<t2>, got '{value}'")
        try:
            return Contrast(label=label, kind=ContrastKind.AGE, ages=(float(parts[1]), float(parts[2])))
        except ValueError:
            raise ConfigError(f"contrast '{label}': ages must be numeric, got '{value}'")
    deltas = {}
    for item in split_list(value):
        name, _, amount = item.partition(":")
        try:
            deltas[name.strip()] = float(amount) if amount else 1.0
        except ValueError:
            raise ConfigError(f"contrast '{label}': bad delta '{item}'")
    return Contrast(label=label, kind=ContrastKind.COVARIATE, deltas=deltas)


def load_model_settings(settings: Dict[str, str]) -> Tuple[ModelConfig, SamplerConfig, List[Contrast]]:
    """Split a flat settings dict into model, sampler and contrast configuration."""
    model_values, sampler_values = {}, {}
    contrasts = [parse_contrast(label, value) for label, value in prefixed(settings, "contrast").items()]
    for key, value in settings.items():
        if key.startswith("contrast."):
            continue
        if key in PAIR_KEYS:
            model_values[key] = parse_pair(value, key)
        elif key in MODEL_KEYS:
            if value != "":
                model_values[key] = value
        elif key in SAMPLER_KEYS:
            sampler_values[key] = value
        else:
            raise ConfigError(f"unknown model config key '{key}'")
    try:
        return ModelConfig(**model_values), SamplerConfig(**sampler_values), contrasts
    except ValueError as e:
        raise ConfigError(f"invalid model config: {e}")
