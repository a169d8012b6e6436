from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats
from scipy.integrate import trapezoid

from conftest import uniform_basis
from core.errors import BasisError, KnotPlacementError
from core.spline_basis import (
    BasisSpec,
    build_basis_from_ages,
    build_knots,
    eval_bspline_basis,
    eval_curve,
    eval_ispline_basis,
    smoothed_age_density,
)


def test_bsplines_sum_to_one(basis10):
    t = np.linspace(basis10.L, basis10.U, 1001)[:-1]
    assert_allclose(eval_bspline_basis(basis10, t).sum(axis=1), 1.0, atol=1e-12)


def test_bsplines_nonnegative_and_local(basis10):
    t = np.linspace(0, 120, 2001)
    values = eval_bspline_basis(basis10, t)
    assert values.min() >= 0
    for m in range(1, basis10.M + 1):
        lo, hi = basis10.support(m)
        outside = (t < lo) | (t > hi)
        assert np.all(values[outside, m - 1] == 0)


def test_ispline_derivative_matches_bspline():
    basis = BasisSpec(M=12, knots=tuple(np.sort(np.r_[0, 120, np.linspace(20, 100, 9)])))
    t = np.linspace(1, 119, 300)
    h = 1e-4
    numeric = (eval_ispline_basis(basis, t + h) - eval_ispline_basis(basis, t - h)) / (2 * h)
    assert_allclose(numeric, eval_bspline_basis(basis, t), atol=1e-6)


def test_ispline_boundary_values(basis10):
    assert np.all(eval_ispline_basis(basis10, basis10.L) == 0.0)
    assert_allclose(eval_ispline_basis(basis10, basis10.U), basis10.ispline_totals, rtol=0, atol=0)
    # held constant outside the range
    assert_allclose(eval_ispline_basis(basis10, 150.0), basis10.ispline_totals)
    assert np.all(eval_ispline_basis(basis10, -5.0) == 0.0)


def test_ispline_totals_are_bspline_integrals(basis10):
    t = np.linspace(basis10.L, basis10.U, 20001)
    integrals = trapezoid(eval_bspline_basis(basis10, t), t, axis=0)
    assert_allclose(integrals, basis10.ispline_totals, rtol=1e-6)


def test_eval_outside_range_raises():
    basis = uniform_basis(10, 30, 90)
    with pytest.raises(BasisError):
        eval_bspline_basis(basis, [29.0])
    with pytest.raises(BasisError):
        eval_bspline_basis(basis, [np.nan])


def test_eval_curve_checks_length(basis10):
    with pytest.raises(BasisError):
        eval_curve(basis10, np.ones(9), 50.0)
    value, slope = eval_curve(basis10, np.ones(10), np.array([0.0, 120.0]))
    assert value[0] == 0.0
    assert_allclose(value[1], basis10.ispline_totals.sum())
    assert np.all(slope >= 0)


def test_basis_spec_validation():
    with pytest.raises(BasisError):
        BasisSpec(M=5, knots=(0, 30, 60, 120))
    with pytest.raises(BasisError):
        BasisSpec(M=6, knots=(0, 30, 30, 60, 120))
    with pytest.raises(BasisError):
        BasisSpec(M=6, knots=(0, 30, 60, 120))


def test_inflection_interval_indexing(basis10):
    # central interval of B_{m*}: [zeta_{m*-1}, zeta_{m*}]
    assert basis10.inflection_interval(5) == (basis10.knot(4), basis10.knot(5))
    lo, hi = basis10.support(5)
    assert (lo, hi) == (basis10.knot(3), basis10.knot(6))


def test_uniform_density_gives_equally_spaced_knots():
    spec = build_knots(stats.uniform(loc=0, scale=120), 24, 0.0, 120.0)
    assert_allclose(spec.knots, np.linspace(0, 120, 23), atol=1e-6)


def test_knots_use_renormalized_cdf_on_subrange():
    spec = build_knots(stats.uniform(loc=0, scale=120), 10, 30.0, 90.0)
    assert_allclose(spec.knots, np.linspace(30, 90, 9), atol=1e-6)


class PointMass:
    def cdf(self, x):
        return (np.asarray(x, dtype=float) >= 60.0).astype(float)


def test_collapsed_density_reports_knot_collision():
    with pytest.raises(KnotPlacementError) as info:
        build_knots(PointMass(), 10, 0.0, 120.0)
    assert 0 < info.value.level < 1
    assert info.value.error_class == "BASIS"


def test_smoothed_density_is_a_density():
    density = smoothed_age_density([55.0, 60.0, 72.5, 80.0], nu=10)
    t = np.linspace(0, 120, 24001)
    assert_allclose(trapezoid(density.pdf(t), t), 1.0, atol=1e-4)
    assert_allclose(density.cdf(120.0), 1.0)
    assert density.cdf(0.0) == pytest.approx(0.0)
    assert np.all(np.diff(density.cdf(t)) >= -1e-15)


def test_smoothed_density_kernel_mode_at_point():
    density = smoothed_age_density([60.0], nu=200)
    t = np.linspace(0, 120, 12001)
    assert t[np.argmax(density.pdf(t))] == pytest.approx(60.0, abs=0.05)


def test_smoothed_density_rejects_bad_points():
    with pytest.raises(BasisError):
        smoothed_age_density([], nu=10)
    with pytest.raises(BasisError):
        smoothed_age_density([130.0], nu=10)
    with pytest.raises(BasisError):
        smoothed_age_density([50.0], nu=0)


def test_knots_follow_age_density():
    rng = np.random.default_rng(3)
    ages = rng.uniform(60, 80, size=500)
    spec = build_basis_from_ages(ages, 24, 0.0, 120.0, nu=10)
    interior = np.asarray(spec.knots[1:-1])
    # kernel smoothing spreads mass, but most interior knots sit near the data
    assert np.median(interior) == pytest.approx(70.0, abs=5.0)
    assert spec.knots[0] == 0.0 and spec.knots[-1] == 120.0


def test_basis_shared_across_threads():
    t = np.linspace(0.0, 120.0, 241)
    expected = eval_ispline_basis(uniform_basis(12), t)
    shared = uniform_basis(12)
    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(lambda _: eval_ispline_basis(shared, t), range(32)))
    for values in results:
        np.testing.assert_array_equal(values, expected)
