import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats
from scipy.special import ndtr

from core.constrained_gaussian import (
    GaussianParams,
    LinearConstraints,
    region_probability,
    sample_constrained,
)
from core.errors import InfeasibleRegionError, NumericalError


def test_from_precision_recovers_moments():
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    shift = np.array([1.0, -1.0])
    p = GaussianParams.from_precision(P, shift)
    assert_allclose(p.cov, np.linalg.inv(P), atol=1e-12)
    assert_allclose(p.mean, np.linalg.solve(P, shift), atol=1e-12)


def test_non_spd_covariance_raises():
    with pytest.raises(NumericalError):
        GaussianParams(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_empty_interior_is_rejected():
    with pytest.raises(InfeasibleRegionError):
        LinearConstraints([[1.0], [-1.0]], [1.0, -0.5])


def test_bad_witness_is_rejected():
    with pytest.raises(InfeasibleRegionError):
        LinearConstraints(np.eye(2), np.zeros(2), witness=np.array([-1.0, 1.0]))


def test_chebyshev_center_is_inside():
    c = LinearConstraints([[1.0, 1.0], [1.0, -1.0]], [1.0, 0.0])
    assert np.all(c.slack(c.chebyshev_center) > 0)


def test_region_probability_one_dimension_is_exact():
    p = GaussianParams([0.3], [[2.0]])
    c = LinearConstraints([[1.0]], [1.0])
    estimate, std_error = region_probability(p, c, n_mc=100, seed=0)
    assert estimate == pytest.approx(ndtr((0.3 - 1.0) / np.sqrt(2.0)), rel=1e-10)
    assert std_error == pytest.approx(0.0, abs=1e-12)


def test_positive_orthant_with_correlation():
    # P(x > 0, y > 0) = 1/4 + arcsin(rho) / (2 pi) = 1/3 at rho = 0.5
    p = GaussianParams(np.zeros(2), [[1.0, 0.5], [0.5, 1.0]])
    c = LinearConstraints(np.eye(2), np.zeros(2))
    estimate, std_error = region_probability(p, c, n_mc=2 ** 16, seed=11)
    assert 0 < std_error < 0.005
    assert estimate == pytest.approx(1.0 / 3.0, abs=3 * std_error)


def test_redundant_constraints_do_not_change_probability():
    p = GaussianParams(np.zeros(2), np.eye(2))
    c = LinearConstraints([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], np.zeros(3))
    estimate, _ = region_probability(p, c, n_mc=20000, seed=5)
    assert estimate == pytest.approx(0.25, abs=0.01)


def test_region_probability_is_deterministic_given_seed():
    p = GaussianParams([0.1, -0.2, 0.3], np.eye(3) + 0.2)
    c = LinearConstraints(np.eye(3), np.zeros(3))
    assert region_probability(p, c, n_mc=512, seed=42) == region_probability(p, c, n_mc=512, seed=42)


def test_region_probability_checks_arguments():
    p = GaussianParams(np.zeros(2), np.eye(2))
    with pytest.raises(NumericalError):
        region_probability(p, LinearConstraints([[1.0]], [0.0]), n_mc=100)
    with pytest.raises(NumericalError):
        region_probability(p, LinearConstraints(np.eye(2), np.zeros(2)), n_mc=1)


def test_hmc_half_normal_mean():
    p = GaussianParams([0.0], [[1.0]])
    c = LinearConstraints([[1.0]], [0.0])
    draws = sample_constrained(p, c, 100_000, seed=3)
    assert draws.min() >= -1e-12
    assert draws.mean() == pytest.approx(np.sqrt(2 / np.pi), abs=0.01)


def test_hmc_matches_rejection_with_strong_correlation():
    p = GaussianParams([0.2, -0.1], [[1.0, 0.8], [0.8, 1.0]])
    c = LinearConstraints(np.eye(2), np.zeros(2))
    draws = sample_constrained(p, c, 20_000, seed=6)
    candidates = np.random.default_rng(7).multivariate_normal(p.mean, p.cov, size=400_000)
    accepted = candidates[np.all(candidates >= 0, axis=1)]
    for j in range(2):
        assert stats.ks_2samp(draws[:, j], accepted[:, j]).statistic < 0.03


def test_hmc_draws_respect_constraints():
    p = GaussianParams([-1.0, 0.5], [[1.0, 0.3], [0.3, 2.0]])
    c = LinearConstraints([[1.0, 1.0], [1.0, 0.0]], [1.0, 0.0])
    draws = sample_constrained(p, c, 500, seed=8, warmup=10)
    assert draws.shape == (500, 2)
    assert np.all(draws @ c.F.T - c.g >= -1e-10)


def test_hmc_is_deterministic_given_seed():
    p = GaussianParams(np.zeros(3), np.eye(3))
    c = LinearConstraints(np.eye(3), np.zeros(3))
    assert_allclose(sample_constrained(p, c, 50, seed=1), sample_constrained(p, c, 50, seed=1))


def test_hmc_starts_from_boundary_point():
    p = GaussianParams(np.zeros(2), np.eye(2))
    c = LinearConstraints(np.eye(2), np.zeros(2))
    draws = sample_constrained(p, c, 20, seed=2, init=np.zeros(2))
    assert np.all(draws >= 0)


def test_hmc_rejects_infeasible_start():
    p = GaussianParams(np.zeros(2), np.eye(2))
    c = LinearConstraints(np.eye(2), np.zeros(2))
    with pytest.raises(InfeasibleRegionError):
        sample_constrained(p, c, 5, seed=0, init=np.array([-1.0, 1.0]))
