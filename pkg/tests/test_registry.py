import numpy as np
import pytest

from engine.errors import DimensionMismatchError, IndexOutOfRangeError
from engine.registry import build_field, build_model, build_surface, build_vector_field, build_weight
from models.schemas import FieldSpec, GaussianModelSpec, SurfaceSpec, VectorFieldSpec, WeightSpec

MODEL = build_model(GaussianModelSpec(spectrum={"family": "4^-n", "n": 3}))


def test_model_from_family():
    assert MODEL.dim == 3
    assert MODEL.spectrum[0] == pytest.approx(0.25)


@pytest.mark.parametrize("spec,kind", [
    ({"kind": "unit"}, "unit"),
    ({"kind": "gaussian_type", "lambda": 0.5}, "gaussian_type"),
    ({"kind": "lq_norm", "q": 1.5}, "lq_norm"),
    ({"kind": "sup_norm_kl", "grid": 128}, "sup_norm_kl"),
    ({"kind": "square_norm"}, "square_norm"),
])
def test_build_weight(spec, kind):
    weight = build_weight(WeightSpec.model_validate(spec), MODEL)
    assert weight.kind == kind
    assert np.all(np.isfinite(weight.value(np.ones((2, 3)))))


def test_weight_spec_carries_exponents():
    weight = build_weight(WeightSpec.model_validate({"kind": "unit", "s": 3.0, "t": 2.0}), MODEL)
    assert weight.s_conj == pytest.approx(1.5)
    assert weight.p_min == pytest.approx(4.0)


@pytest.mark.parametrize("name,label", [
    ("coordinate:2", "y2"),
    ("norm_q:1.5", "||x||_1.5"),
    ("l2_norm", "||x||"),
    ("sup_norm_kl:64", "sup|KL path| (grid=64)"),
    ("constant:2", "const(2)"),
])
def test_named_fields(name, label):
    assert build_field(FieldSpec(name=name), MODEL).label == label


def test_unknown_field_name():
    with pytest.raises(KeyError):
        build_field(FieldSpec(name="nope"), MODEL)


def test_coordinate_field_index_checked():
    with pytest.raises(IndexOutOfRangeError):
        build_field(FieldSpec(name="coordinate:4"), MODEL)
    with pytest.raises(IndexOutOfRangeError):
        build_field(FieldSpec(kind="coordinate", k=7), MODEL)


def test_field_spec_needs_name_or_kind():
    with pytest.raises(ValueError):
        FieldSpec()
    with pytest.raises(ValueError):
        FieldSpec(name="l2_norm", kind="bump")


def test_polynomial_field_spec():
    f = build_field(FieldSpec(kind="polynomial", constant=1.0, linear=[0.0, 2.0], quadratic=[[1.0]]), MODEL)
    assert f(np.array([2.0, 1.0, 5.0])) == pytest.approx(1.0 + 2.0 + 4.0)


def test_bump_center_too_long():
    with pytest.raises(DimensionMismatchError):
        build_field(FieldSpec(kind="bump", center=[0.0] * 4), MODEL)


def test_vector_field_specs():
    Y = np.ones((2, 3))
    assert build_vector_field(VectorFieldSpec(kind="basis", k=2), MODEL).values(Y)[0].tolist() == [0.0, 1.0, 0.0]
    assert np.all(build_vector_field(VectorFieldSpec(kind="zero"), MODEL).values(Y) == 0.0)
    grad = build_vector_field(VectorFieldSpec(kind="gradient_of", field=FieldSpec(name="coordinate:3")), MODEL)
    assert grad.values(Y)[0].tolist() == [0.0, 0.0, 1.0]
    with pytest.raises(ValueError):
        build_vector_field(VectorFieldSpec(kind="normalized_gradient_of"), MODEL)
    with pytest.raises(DimensionMismatchError):
        build_vector_field(VectorFieldSpec(kind="constant", vector=[1.0]), MODEL)


def test_hyperplane_defaults_to_first_axis():
    surface = build_surface(SurfaceSpec(kind="hyperplane", offset=0.5), MODEL)
    assert surface.normal == (1.0, 0.0, 0.0)
    assert surface.offset == 0.5
    with pytest.raises(DimensionMismatchError):
        build_surface(SurfaceSpec(kind="hyperplane", normal=[1.0, 0.0]), MODEL)


def test_sphere_and_custom_surfaces():
    assert build_surface(SurfaceSpec(kind="sphere", radius=0.5), MODEL).radius == 0.5
    assert build_surface(SurfaceSpec(kind="l2_path_sphere"), MODEL).has_exact_param
    custom = build_surface(SurfaceSpec(kind="custom", field=FieldSpec(name="coordinate:1")), MODEL)
    assert not custom.has_exact_param
    with pytest.raises(ValueError):
        build_surface(SurfaceSpec(kind="custom"), MODEL)
