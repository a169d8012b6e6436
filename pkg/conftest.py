import numpy as np
import pytest

from config import app_config
from core.data_model import INTERCEPT, LongitudinalDataset
from core.gibbs_sampler import PosteriorSamples
from core.spline_basis import BasisSpec
from schemas.dataset_schema import BiomarkerSpec
from schemas.model_config import ConstraintMode


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow desk-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow") or app_config.RUN_SLOW_TESTS:
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow or SSR_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def uniform_basis(M: int = 10, L: float = 0.0, U: float = 120.0) -> BasisSpec:
    return BasisSpec(M=M, knots=tuple(np.linspace(L, U, M - 1)))


def make_dataset(ages_per_subject, Y=None, X=None, biomarkers=None, observed=None,
                 covariate_types=None, diagnosis=None) -> LongitudinalDataset:
    """Small in-memory dataset; ages_per_subject is a list of age lists."""
    N = len(ages_per_subject)
    ages = np.concatenate([np.asarray(a, dtype=float) for a in ages_per_subject])
    subject_index = np.concatenate([np.full(len(a), i) for i, a in enumerate(ages_per_subject)])
    biomarkers = biomarkers or (BiomarkerSpec(name="y"),)
    K = len(biomarkers)
    if Y is None:
        Y = np.zeros((ages.size, K))
    Y = np.asarray(Y, dtype=float).reshape(ages.size, K)
    if observed is None:
        observed = ~np.isnan(Y)
    if X is None:
        X = np.ones((N, 1))
    X = np.asarray(X, dtype=float)
    names = (INTERCEPT,) + tuple(f"x{j}" for j in range(1, X.shape[1]))
    types = covariate_types or ("constant",) + ("continuous",) * (X.shape[1] - 1)
    return LongitudinalDataset(
        subject_ids=np.array([f"S{i}" for i in range(N)], dtype=object),
        covariate_names=names,
        covariate_types=tuple(types),
        X=X,
        subject_index=subject_index.astype(int),
        ages=ages,
        Y=np.where(observed, Y, np.nan),
        observed=np.asarray(observed, dtype=bool),
        biomarkers=tuple(biomarkers),
        diagnosis=diagnosis,
    )


def make_samples(gamma, beta=None, omega=None, logistic=None, covariates=("intercept", "x1"),
                 n_subjects: int = 2) -> PosteriorSamples:
    """Hand-built posterior draws with one inflection group; gamma is S x K x M."""
    gamma = np.asarray(gamma, dtype=float)
    S, K, _ = gamma.shape
    variant = ConstraintMode.LOGISTIC_PARAMETRIC if logistic is not None else ConstraintMode.S_SHAPED
    return PosteriorSamples(
        variant=variant,
        biomarkers=[f"b{k}" for k in range(K)],
        biomarker_groups=("G",) * K,
        group_names=["G"],
        covariate_names=list(covariates),
        chain=np.zeros(S, dtype=int),
        iteration=np.arange(S),
        beta=np.zeros((S, K, len(covariates))) if beta is None else np.asarray(beta, dtype=float),
        gamma=gamma,
        omega=np.zeros((S, n_subjects, K)) if omega is None else np.asarray(omega, dtype=float),
        sigma2_obs=np.ones(S),
        sigma2_rnd=np.ones(S),
        sigma2_s=np.ones(S),
        sigma2_v=np.ones(S),
        m_star=np.full((S, 1), 5),
        logistic=logistic,
    )


@pytest.fixture
def basis10():
    return uniform_basis(10)


@pytest.fixture
def toy_csv(tmp_path):
    """Five subjects, two biomarkers in two groups, one binary covariate."""
    rows = ["subject_id,age,female,memory,csf"]
    rng = np.random.default_rng(7)
    for i in range(5):
        base = 55.0 + 6 * i
        for j in range(4):
            age = base + 1.5 * j
            memory = 1.0 / (1.0 + np.exp(-(age - 70) / 5)) + 0.1 * rng.standard_normal()
            csf = "" if (i + j) % 5 == 0 else f"{-(0.02 * age) + 0.1 * rng.standard_normal():.4f}"
            rows.append(f"S{i:02d},{age:.2f},{i % 2},{memory:.4f},{csf}")
    data = tmp_path / "toy.csv"
    data.write_text("\n".join(rows) + "\n")
    schema = tmp_path / "schema.cfg"
    schema.write_text(
        "covariates = female:binary\n"
        "biomarkers = memory, csf\n"
        "group.memory = COG\n"
        "group.csf = CSF\n"
        "sign.csf = -1\n"
        "cognitive = memory\n"
    )
    return data, schema
