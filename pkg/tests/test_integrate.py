import math

import numpy as np
import pytest
from scipy.stats import chi2, norm

from engine.errors import BudgetTooSmallError, NodeBudgetError
from engine.fields import constant, coordinate, polynomial
from engine.gaussian_core import GaussianModel
from engine.integrate import (
    Estimator, apply_rule, compare_estimates, doubling_stability, gauss_hermite_rule, half_space_rule,
    integrate_mu, integrate_nu, max_nodes_per_dim, monte_carlo, polar_rule, restrict, sphere_rule,
)
from engine.weights import gaussian_type_moment, gaussian_type_weight, unit_weight
from models.schemas import IntegralEstimate, Method, TraceReport

MODEL = GaussianModel((1.0, 0.5, 0.25))


def _est(value, stderr=0.0, dropped=0):
    return IntegralEstimate(value=value, stderr=stderr, method=Method.MC, n_eval=100, dropped=dropped)


def test_gauss_hermite_polynomial_moments():
    rule = gauss_hermite_rule(2, nodes=10)
    one, fourth, mixed = apply_rule(rule, [constant(1.0), lambda Y: Y[:, 0] ** 4,
                                           lambda Y: Y[:, 0] ** 2 * Y[:, 1] ** 2])
    assert one.value == pytest.approx(1.0, abs=1e-13)
    assert fourth.value == pytest.approx(3.0, abs=1e-12)
    assert mixed.value == pytest.approx(1.0, abs=1e-12)
    assert one.stderr == 0.0 and one.method == Method.GAUSS_HERMITE


def test_gauss_hermite_caps():
    with pytest.raises(NodeBudgetError):
        gauss_hermite_rule(9)
    with pytest.raises(NodeBudgetError):
        gauss_hermite_rule(2, nodes=21)
    with pytest.raises(NodeBudgetError):
        gauss_hermite_rule(6, nodes=20)


@pytest.mark.parametrize("dim,expected", [(1, 20), (4, 20), (5, 20), (6, 12), (8, 6)])
def test_max_nodes_per_dim(dim, expected):
    assert max_nodes_per_dim(dim) == expected
    assert max_nodes_per_dim(dim) ** dim <= 4_000_000


def test_gaussian_type_mass_by_gauss_hermite():
    w = gaussian_type_weight(MODEL, 0.05)
    est = integrate_mu(MODEL, w.value, method="gh")
    assert est.value == pytest.approx(gaussian_type_moment(MODEL, 0.05), rel=1e-12)


@pytest.mark.parametrize("offset", [-1.0, 0.0, 0.5, 2.0])
def test_half_space_mass(offset):
    rule = half_space_rule(2, [1.0, 0.0], offset)
    assert rule.weights.sum() == pytest.approx(norm.cdf(offset), abs=1e-10)
    assert np.all(rule.points[:, 0] <= offset)


def test_half_space_oblique_normal():
    rule = half_space_rule(3, [1.0, 1.0, 0.0], 1.0)
    (est,) = apply_rule(rule, [constant(1.0)])
    assert est.value == pytest.approx(norm.cdf(1.0 / math.sqrt(2.0)), abs=1e-10)


@pytest.mark.parametrize("n,area", [(2, 2.0 * math.pi), (3, 4.0 * math.pi), (4, 2.0 * math.pi ** 2)])
def test_sphere_rule_area(n, area):
    U, w = sphere_rule(n)
    assert w.sum() == pytest.approx(area, rel=1e-10)
    assert np.allclose(np.linalg.norm(U, axis=1), 1.0)


@pytest.mark.parametrize("dim,radius", [(2, 1.0), (3, 1.5)])
def test_polar_rule_ball_mass(dim, radius):
    model = GaussianModel((1.0,) * dim)
    rule = polar_rule(model, radius)
    assert rule.weights.sum() == pytest.approx(chi2.cdf(radius ** 2, dim), abs=1e-9)


def test_polar_rule_dimension_cap():
    with pytest.raises(NodeBudgetError):
        polar_rule(GaussianModel((1.0,) * 6), 1.0)


def test_restrict_zeroes_outside_region():
    fn = restrict(lambda Y: 1.0 / Y[:, 0], coordinate(1))
    Y = np.array([[-2.0, 0.0], [0.0, 1.0], [3.0, 1.0]])
    assert np.array_equal(fn(Y), [-0.5, 0.0, 0.0])


def test_monte_carlo_independent_of_worker_count():
    f = polynomial(0.0, [1.0], [[1.0]])
    one = monte_carlo(MODEL, [f], 200_000, seed=9, stream=(1,), workers=1)[0]
    four = monte_carlo(MODEL, [f], 200_000, seed=9, stream=(1,), workers=4)[0]
    assert one.value == four.value
    assert one.stderr == four.stderr


def test_monte_carlo_unbiased():
    est = integrate_mu(MODEL, lambda Y: Y[:, 0] ** 2, budget=100_000, seed=3)
    assert abs(est.value - 1.0) < 4.0 * est.stderr
    assert est.n_eval == 100_000


def test_budget_floor():
    with pytest.raises(BudgetTooSmallError):
        monte_carlo(MODEL, [constant(1.0)], 10, seed=1)


def test_dropped_samples_are_counted():
    est = integrate_mu(MODEL, lambda Y: np.where(Y[:, 0] > 3.0, np.nan, 1.0), budget=100_000, seed=2)
    assert est.dropped > 0
    assert est.value == 1.0
    assert any("dropped" in w for w in est.warnings)


def test_integrate_nu_with_unit_weight_is_mu():
    f = polynomial(0.5, [0.0, 1.0], [[0.0, 0.0], [0.0, 1.0]])
    a = integrate_nu(MODEL, unit_weight(), f, budget=50_000, seed=4)
    b = integrate_mu(MODEL, f, budget=50_000, seed=4)
    assert a.value == pytest.approx(b.value, rel=1e-14)


def test_compare_estimates():
    assert compare_estimates(_est(1.0, 0.1), _est(1.25, 0.1)).passed
    assert not compare_estimates(_est(1.0, 0.1), _est(1.5, 0.1)).passed
    assert compare_estimates(_est(1.0), _est(1.0 + 1e-10)).passed
    assert not compare_estimates(_est(1.0, 0.1), _est(1.0, 0.1, dropped=1)).passed
    cmp = compare_estimates(_est(0.0, 0.3), _est(0.0, 0.4), sigmas=2.0)
    assert cmp.tolerance == pytest.approx(1.0)


def test_doubling_stability_finite_moment():
    m = doubling_stability(MODEL, lambda Y: Y[:, 0] ** 2, 20_000, seed=5, stream=(7,), exact=1.0)
    assert not m.diverging
    assert m.first.n_eval == 20_000 and m.doubled.n_eval == 40_000


def test_doubling_stability_flags_infinite_moment():
    m = doubling_stability(MODEL, lambda Y: np.exp(0.9 * Y[:, 0] ** 2), 20_000, seed=5, stream=(7,))
    assert m.diverging
    assert m.reason


def test_estimator_report_records_method():
    est = Estimator.make("gh")
    lhs, rhs = est.run(MODEL, [constant(2.0), lambda Y: 2.0 + Y[:, 0]])
    report = est.report("demo", lhs, rhs, {"k": 1})
    assert report.passed
    assert report.config["method"] == "gauss_hermite"
    assert report.config["k"] == 1


def test_trace_report_verdict_follows_delta():
    ok = TraceReport(identity_id="demo", lhs=_est(1.0), rhs=_est(1.1), abs_delta=0.1, tolerance=0.2, passed=False)
    assert ok.passed
    bad = TraceReport(identity_id="demo", lhs=_est(1.0), rhs=_est(2.0), abs_delta=1.0, tolerance=0.2, passed=True)
    assert not bad.passed


def test_trace_report_nan_and_dropped_fail():
    nan = TraceReport(identity_id="demo", lhs=_est(math.nan), rhs=_est(0.0), abs_delta=math.nan, tolerance=1.0)
    assert nan.abs_delta == math.inf and not nan.passed
    dropped = TraceReport(identity_id="demo", lhs=_est(1.0, dropped=3), rhs=_est(1.0), abs_delta=0.0, tolerance=1.0)
    assert dropped.abs_delta == math.inf and not dropped.passed
    assert any("dropped" in w for w in dropped.warnings)


def test_doubling_stability_marks_dominated_sum():
    def spike(Y):
        out = np.zeros(len(Y))
        out[0] = 1.0
        return out

    m = doubling_stability(MODEL, spike, 1000, seed=5, stream=(7,))
    assert m.dominated and m.diverging
