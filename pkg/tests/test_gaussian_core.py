import math

import numpy as np
import pytest
from hypothesis import given, seed
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from engine.errors import DimensionMismatchError, IndexOutOfRangeError
from engine.gaussian_core import (
    GaussianModel, block_points, e_hat, e_hat_ambient, from_spec, gaussian_type_threshold, sample,
    spectrum_2_pow, spectrum_4_pow, spectrum_brownian_kl, unwhiten, whiten,
)
from models.schemas import GaussianModelSpec

SPECTRUM = (1.0, 0.5, 0.25, 0.125)


def test_spectrum_families():
    assert np.allclose(spectrum_4_pow(3), [0.25, 0.0625, 0.015625])
    assert np.allclose(spectrum_2_pow(3), [0.5, 0.25, 0.125])
    assert math.isclose(spectrum_brownian_kl(2)[1], 4.0 / (9.0 * math.pi ** 2))


def test_from_spec_family_and_list():
    model = from_spec(GaussianModelSpec(spectrum={"family": "2^-n", "n": 5}))
    assert model.dim == 5
    assert model.label == "2^-n (n=5)"
    assert from_spec(GaussianModelSpec(dim=4, spectrum=list(SPECTRUM))).spectrum == SPECTRUM


def test_spec_rejects_dim_mismatch():
    with pytest.raises(ValueError):
        GaussianModelSpec(dim=3, spectrum=[1.0, 0.5])


def test_model_rejects_bad_spectra():
    with pytest.raises(DimensionMismatchError):
        GaussianModel(())
    with pytest.raises(ValueError):
        GaussianModel((1.0, -0.5))


def test_e_hat_agrees_with_ambient_path():
    model = GaussianModel(SPECTRUM)
    Y = sample(model, 50, seed=3)
    X = unwhiten(model, Y)
    for k in range(1, model.dim + 1):
        assert np.allclose(e_hat(model, k, Y), e_hat_ambient(model, k, X), atol=1e-14)


def test_e_hat_index_checks():
    model = GaussianModel(SPECTRUM)
    with pytest.raises(IndexOutOfRangeError):
        model.e_hat(0, np.zeros(4))
    with pytest.raises(IndexOutOfRangeError):
        model.e_hat(5, np.zeros(4))


def test_point_dimension_checked():
    with pytest.raises(DimensionMismatchError):
        whiten(GaussianModel(SPECTRUM), np.zeros(3))


def test_ambient_norm_and_threshold():
    model = GaussianModel(SPECTRUM)
    y = np.array([1.0, 2.0, 0.0, -2.0])
    assert math.isclose(model.ambient_norm_sq(y), 1.0 + 2.0 + 0.5)
    assert math.isclose(gaussian_type_threshold(model), 0.5)


@seed(1)
@given(y=arrays(np.float64, (4,), elements=st.floats(min_value=-50.0, max_value=50.0)))
def test_whiten_inverts_unwhiten(y):
    model = GaussianModel(SPECTRUM)
    assert np.allclose(whiten(model, unwhiten(model, y)), y, rtol=1e-12, atol=1e-12)


def test_sampling_is_deterministic_per_stream():
    model = GaussianModel(SPECTRUM)
    a = sample(model, 1000, seed=7, stream=(1,))
    b = sample(model, 1000, seed=7, stream=(1,))
    c = sample(model, 1000, seed=7, stream=(2,))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_is_concatenation_of_blocks():
    model = GaussianModel((1.0, 1.0))
    first = block_points(model, 11, 0, 10, stream=(4,))
    assert np.array_equal(sample(model, 10, 11, stream=(4,)), first)


def test_sample_moments():
    model = GaussianModel((1.0, 1.0, 1.0))
    Y = sample(model, 200_000, seed=5)
    assert np.all(np.abs(Y.mean(axis=0)) < 0.01)
    assert np.all(np.abs(Y.var(axis=0) - 1.0) < 0.02)
