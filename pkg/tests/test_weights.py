import math

import numpy as np
import pytest

from config.settings import CheckConfig
from engine.errors import InvalidExponentsError, MissingDerivativeError, NoAdmissibleTauError
from engine.fields import ScalarField, abs_field, constant, coordinate, fd_gradient_check, gaussian_bump, lq_norm
from engine.gaussian_core import GaussianModel, sample, spectrum_2_pow, spectrum_brownian_kl
from engine.weights import (
    Weight, abs_normal_moment, check_embedding_conditions, check_hypothesis1, fernique_alpha,
    fernique_integral_check, gaussian_type_moment, gaussian_type_weight, lq_moment_check,
    lq_moment_partial_sums, lq_norm_weight, square_norm_weight, sup_norm_kl_weight, unit_weight,
)

MODEL = GaussianModel((1.0, 0.5, 0.25))
POINTS = sample(MODEL, 500, seed=8, stream=(98,))


def test_exponents_are_validated():
    with pytest.raises(InvalidExponentsError):
        unit_weight(s=1.0)
    with pytest.raises(InvalidExponentsError):
        unit_weight(s=2.0, t=2.0)
    w = unit_weight(s=2.0, t=3.0)
    assert w.s_conj == 2.0
    assert w.p_min == 3.0


def test_log_weight_needs_gradient():
    with pytest.raises(MissingDerivativeError):
        Weight(ScalarField(lambda Y: Y[:, 0]))


def test_exponent_warnings():
    w = unit_weight(s=2.0, t=3.0)
    notes = w.exponent_warnings(p=2.0)
    assert any("p_min" in n for n in notes)
    assert any("2s'" in n for n in notes)
    assert unit_weight(s=2.0, t=4.0).exponent_warnings(p=3.0) == []


def test_gaussian_type_log_derivatives():
    w = gaussian_type_weight(MODEL, 0.1)
    y = np.array([1.0, -2.0, 0.5])
    assert np.allclose(w.grad_log(y), 2.0 * 0.1 * MODEL.lambdas * y)
    assert np.allclose(w.hess_log(y), np.diag(2.0 * 0.1 * MODEL.lambdas))
    assert w.value(y) == pytest.approx(math.exp(0.1 * MODEL.ambient_norm_sq(y)))


@pytest.mark.parametrize("weight", [
    gaussian_type_weight(MODEL, 0.1),
    lq_norm_weight(MODEL, 1.5),
    square_norm_weight(MODEL),
])
def test_weight_field_gradient(weight):
    assert fd_gradient_check(weight.w, POINTS, tol=1e-5).passed


def test_square_norm_weight_is_singular_at_origin():
    w = square_norm_weight(MODEL)
    origin = np.zeros((1, 3))
    assert w.singular(origin)[0]
    assert w.value(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)
    assert w.value(np.array([0.0, 2.0, 0.0])) == pytest.approx(4.0)


def test_gaussian_type_moment_closed_form():
    assert gaussian_type_moment(MODEL, 0.1) == pytest.approx(np.prod((1.0 - 0.2 * MODEL.lambdas) ** -0.5))
    assert math.isinf(gaussian_type_moment(MODEL, 0.5))


def test_hypothesis1_passes_below_threshold():
    model = GaussianModel((1.0,))
    report = check_hypothesis1(gaussian_type_weight(model, 0.05), model, budget=50_000, seed=11)
    assert report.passed
    assert report.closed_form_ws == pytest.approx(gaussian_type_moment(model, 0.1))
    assert report.threshold == pytest.approx(0.25)
    assert len(report.moments) == 4


def test_hypothesis1_fails_past_threshold():
    model = GaussianModel((1.0,))
    report = check_hypothesis1(gaussian_type_weight(model, 0.4), model, budget=50_000, seed=11)
    assert not report.passed
    assert math.isinf(report.closed_form_ws)
    assert report.moments[0].diverging


def test_embedding_bounds_hold():
    w = gaussian_type_weight(MODEL, 0.05)
    report = check_embedding_conditions(MODEL, w, gaussian_bump((0.3,), width=1.1), p=3.0, r=0.5,
                                        budget=20_000, seed=3)
    assert report.p_at_least_p_min
    assert all(b.holds for b in report.mu_to_nu + report.nu_to_mu)
    assert len(report.mu_to_nu) == 2


def test_embedding_rejects_bad_r():
    with pytest.raises(ValueError):
        check_embedding_conditions(MODEL, unit_weight(), constant(1.0), p=2.0, r=1.0, budget=2000)


def test_fernique_alpha_for_absolute_coordinate():
    model = GaussianModel((1.0,))
    result = fernique_alpha(abs_field(coordinate(1)), 1.0, model, budget=200_000, seed=5)
    assert result.alpha == pytest.approx(0.0647, abs=0.003)
    assert result.c > 0.55
    assert not result.clamped
    integral = fernique_integral_check(abs_field(coordinate(1)), result.alpha, model, budget=50_000, seed=5)
    assert not integral.diverging


def test_fernique_alpha_clamps_for_constant():
    result = fernique_alpha(constant(2.0), 1.0, MODEL, budget=10_000, seed=5)
    assert result.clamped
    assert result.alpha == 10.0


def test_fernique_rejects_bad_homogeneity():
    with pytest.raises(ValueError):
        fernique_alpha(constant(1.0), 1.5, MODEL, budget=10_000)


@pytest.mark.parametrize("q,expected", [(1.0, math.sqrt(2.0 / math.pi)), (2.0, 1.0), (4.0, 3.0)])
def test_abs_normal_moment(q, expected):
    assert abs_normal_moment(q) == pytest.approx(expected, rel=1e-12)


def test_lq_partial_sums_below_geometric_bound():
    model = GaussianModel(tuple(spectrum_2_pow(6)))
    partial, c_q, bound = lq_moment_partial_sums(model, 2.0)
    assert c_q == pytest.approx(1.0)
    assert bound == pytest.approx(1.0)
    assert np.all(np.diff(partial) > 0)
    assert partial[-1] < bound
    assert lq_moment_partial_sums(GaussianModel((1.0, 0.3)), 2.0)[2] is None


def test_lq_moment_monte_carlo():
    model = GaussianModel(tuple(spectrum_2_pow(6)))
    report = lq_moment_check(model, 1.5, budget=200_000, seed=6)
    assert report.passed
    assert report.identity_id == "lq_moments"
    assert not report.warnings


def test_fernique_steps_tau_past_the_positive_alpha_floor(monkeypatch):
    monkeypatch.setattr(CheckConfig, "FERNIQUE_MIN_C", 0.5)
    monkeypatch.setattr(CheckConfig, "FERNIQUE_TAU_QUANTILE", 0.51)
    result = fernique_alpha(abs_field(coordinate(1)), 1.0, GaussianModel((1.0,)), budget=50_000, seed=5)
    assert result.c > 1.0 / (1.0 + math.exp(-CheckConfig.FERNIQUE_MARGIN))
    assert result.quantile > 0.51
    assert result.alpha > 0.0


def test_fernique_raises_when_no_quantile_gives_positive_alpha(monkeypatch):
    monkeypatch.setattr(CheckConfig, "FERNIQUE_MIN_C", 0.5)
    monkeypatch.setattr(CheckConfig, "FERNIQUE_MARGIN", 5.0)
    with pytest.raises(NoAdmissibleTauError):
        fernique_alpha(abs_field(coordinate(1)), 1.0, GaussianModel((1.0,)), budget=50_000, seed=5)


@pytest.mark.slow
def test_fernique_alpha_for_lq_norm_on_2_pow_spectrum():
    model = GaussianModel(tuple(spectrum_2_pow(6)))
    g = lq_norm(model, 1.5)
    result = fernique_alpha(g, 1.0, model, budget=200_000, seed=5)
    assert result.alpha > 0.0
    assert not result.clamped
    integral = fernique_integral_check(g, result.alpha, model, budget=200_000, seed=5)
    assert not integral.diverging, integral.reason


@pytest.mark.slow
def test_hypothesis1_passes_for_square_norm_weight():
    model = GaussianModel((1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3))
    weight = square_norm_weight(model, s=2.0, t=3.0)
    report = check_hypothesis1(weight, model, budget=200_000, seed=11)
    assert report.passed, [m.reason for m in report.moments if m.diverging]


def test_sup_norm_kl_log_weight_gradient_by_finite_differences():
    model = GaussianModel(tuple(spectrum_brownian_kl(3)))
    weight = sup_norm_kl_weight(model, grid_size=512)
    Y = sample(model, 200, seed=8, stream=(99,))
    report = fd_gradient_check(weight.logw, Y, tol=1e-3, exclusion=1e-3)
    assert report.passed, report.max_rel_error
