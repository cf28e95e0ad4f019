import numpy as np
import pytest

from engine.divergence import (
    adjointness_check, bilinear_identity_check, condition_41_screen, cone_value, div_mu, div_nu,
    energy_identity_check, exact_condition_constant, l2_bound_check,
)
from engine.errors import DimensionMismatchError, IndexOutOfRangeError, MissingDerivativeError
from engine.fields import (
    ScalarField, basis_vector, coordinate, gaussian_bump, normalized_gradient_field, polynomial, polynomial_vector,
)
from engine.gaussian_core import GaussianModel, sample, spectrum_4_pow
from engine.integrate import Estimator
from engine.weights import (
    Weight, gaussian_type_weight, lq_norm_weight, square_norm_weight, unit_weight,
)

MODEL = GaussianModel((1.0, 0.5, 0.25, 0.125))
SMALL = GaussianModel((1.0, 0.5, 0.25))
W_LAMBDA = gaussian_type_weight(MODEL, 0.05)
GH = Estimator.make("gh")
F = polynomial(0.5, [1.0, 0.3], [[0.2]])
G = coordinate(2)


def _phi(dim):
    return polynomial_vector(np.eye(dim)[0], 0.5 * np.eye(dim), [[0.0] * (dim - 1) + [0.25]], dim=dim)


def test_div_mu_of_basis_vector():
    Y = sample(MODEL, 20, seed=1)
    for k in range(1, 5):
        assert np.allclose(div_mu(MODEL, basis_vector(k, 4)).value(Y), -Y[:, k - 1])


def test_div_nu_decomposition():
    Y = sample(MODEL, 20, seed=1)
    result = div_nu(MODEL, W_LAMBDA, basis_vector(2, 4))
    total, mu_part, drift = result.evaluate(Y)
    assert np.allclose(mu_part, -Y[:, 1])
    assert np.allclose(drift, 2.0 * 0.05 * 0.5 * Y[:, 1])
    assert np.allclose(total, result.div_nu.value(Y))
    assert set(result.decomposition) == {"div_mu", "drift_term"}


def test_div_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        div_mu(MODEL, basis_vector(1, 3))


@pytest.mark.parametrize("h,k", [(1, 1), (1, 2), (2, 3), (4, 4)])
def test_bilinear_identity_gauss_hermite(h, k):
    report = bilinear_identity_check(MODEL, W_LAMBDA, F, G, h, k, estimator=GH)
    assert report.passed, (report.lhs.value, report.rhs.value)
    assert report.tolerance == pytest.approx(1e-9)
    assert report.config["h"] == h


def test_bilinear_identity_monte_carlo():
    report = bilinear_identity_check(SMALL, gaussian_type_weight(SMALL, 0.05), gaussian_bump((0.25,), 1.2), G,
                                     1, 2, budget=100_000, seed=3)
    assert report.passed
    assert report.lhs.stderr > 0.0


def test_bilinear_index_checked():
    with pytest.raises(IndexOutOfRangeError):
        bilinear_identity_check(MODEL, W_LAMBDA, F, G, 0, 1, estimator=GH)


def test_bilinear_needs_hessian():
    w = Weight(ScalarField(lambda Y: 0.1 * Y[:, 0], lambda Y: np.broadcast_to(0.1 * np.eye(Y.shape[1])[0], Y.shape)))
    with pytest.raises(MissingDerivativeError):
        bilinear_identity_check(MODEL, w, F, G, 1, 1, estimator=GH)


def test_energy_identity_square_norm_exact():
    report = energy_identity_check(SMALL, square_norm_weight(SMALL), _phi(3), estimator=GH)
    assert report.passed, (report.lhs.value, report.rhs.value)
    assert report.lhs.dropped == 0


def test_energy_identity_gaussian_type():
    report = energy_identity_check(MODEL, W_LAMBDA, _phi(4), estimator=GH)
    assert report.passed


@pytest.mark.parametrize("weight", [W_LAMBDA, unit_weight()])
def test_adjointness_gauss_hermite(weight):
    report = adjointness_check(MODEL, weight, F, _phi(4), estimator=GH)
    assert report.passed


def test_adjointness_square_norm():
    report = adjointness_check(SMALL, square_norm_weight(SMALL), F, _phi(3), estimator=GH)
    assert report.passed


def test_adjointness_lq_weight_monte_carlo():
    weight = lq_norm_weight(SMALL, 1.5, scale=0.5)
    report = adjointness_check(SMALL, weight, gaussian_bump((0.25,), 1.2), _phi(3), budget=200_000, seed=5)
    assert report.passed


def test_l2_bound_with_exact_constant():
    C = exact_condition_constant(MODEL, W_LAMBDA)
    report = l2_bound_check(MODEL, W_LAMBDA, _phi(4), C, estimator=GH)
    assert report.passed
    assert report.lhs.value <= report.rhs.value


def test_exact_condition_constant():
    assert exact_condition_constant(MODEL, unit_weight()) == 1.0
    assert exact_condition_constant(MODEL, W_LAMBDA) == pytest.approx(1.0 - 0.1 * 0.125)
    assert exact_condition_constant(MODEL, square_norm_weight(MODEL)) is None


def test_cone_value_on_first_axis():
    model = GaussianModel(tuple(spectrum_4_pow(6)))
    e1 = np.eye(6)[:1]
    assert cone_value(model, e1)[0] == pytest.approx(-4.0 * model.lambdas[0])


def test_square_norm_violations_outside_stated_region():
    model = GaussianModel(tuple(spectrum_4_pow(6)))
    report = condition_41_screen(model, square_norm_weight(model), sample_budget=5000, seed=2)
    assert [v.candidate_c for v in report.violations] == [1.5, 2.0, 5.0, 10.0]
    for v in report.violations:
        assert v.form_slack < 0.0
        assert v.in_search_region
        assert not v.in_stated_region
    assert report.c_exact is None


def test_gaussian_type_constant_matches_closed_form():
    report = condition_41_screen(MODEL, W_LAMBDA, sample_budget=2000, seed=2)
    assert abs(report.c_max_estimate - report.c_exact) <= 1e-12
    assert report.violations == []
    assert report.untested == [1.5, 2.0, 5.0, 10.0]
    assert not report.warnings


def test_div_nu_inherits_field_singular_set():
    model = GaussianModel((1.0, 0.5))
    Phi = normalized_gradient_field(polynomial(0.0, [], [[1.0, 0.0], [0.0, 1.0]]), 2)
    result = div_nu(model, unit_weight(), Phi)
    assert result.div_nu.singular(np.zeros((1, 2)))[0]
    assert not result.div_nu.singular(np.ones((1, 2)))[0]
    assert result.div_mu.singular(np.zeros((1, 2)))[0]
