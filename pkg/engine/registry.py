"""Build engine objects from the pydantic specs of a run configuration."""

from __future__ import annotations

from engine import fields as F
from engine import surfaces as S
from engine import weights as W
from engine.errors import DimensionMismatchError
from engine.gaussian_core import GaussianModel, from_spec
from models.schemas import FieldSpec, GaussianModelSpec, SurfaceSpec, VectorFieldSpec, WeightSpec


def build_model(spec: GaussianModelSpec) -> GaussianModel:
    return from_spec(spec)


def build_weight(spec: WeightSpec, model: GaussianModel) -> W.Weight:
    if spec.kind == "unit":
        return W.unit_weight(spec.s, spec.t)
    if spec.kind == "gaussian_type":
        return W.gaussian_type_weight(model, spec.lam, spec.s, spec.t)
    if spec.kind == "lq_norm":
        return W.lq_norm_weight(model, spec.q, spec.scale, spec.s, spec.t)
    if spec.kind == "sup_norm_kl":
        return W.sup_norm_kl_weight(model, spec.grid, spec.s, spec.t)
    return W.square_norm_weight(model, spec.s, spec.t)


def _named_field(name: str, model: GaussianModel) -> F.ScalarField:
    head, _, arg = name.partition(":")
    if head == "coordinate":
        k = int(arg or 1)
        model.check_index(k)
        return F.coordinate(k)
    if head == "norm_q":
        return F.lq_norm(model, float(arg or 2))
    if head == "sup_norm_kl":
        return F.sup_norm_kl(model, int(arg or 512))
    if head == "l2_norm":
        return F.l2_norm(model)
    if head == "ambient_quadratic":
        return F.ambient_quadratic(model)
    if head == "constant":
        return F.constant(float(arg or 1))
    if head == "bump":
        return F.gaussian_bump(width=float(arg or 1))
    raise KeyError(f"unknown field name {name!r}")


def build_field(spec: FieldSpec, model: GaussianModel) -> F.ScalarField:
    if spec.name is not None:
        return _named_field(spec.name, model)
    if spec.kind == "constant":
        return F.constant(spec.constant)
    if spec.kind == "coordinate":
        model.check_index(spec.k)
        return F.coordinate(spec.k)
    if spec.kind == "linear":
        return F.linear(spec.linear, spec.constant)
    if spec.kind == "bump":
        if len(spec.center) > model.dim:
            raise DimensionMismatchError(f"bump center has {len(spec.center)} entries on a {model.dim}-dim model")
        return F.gaussian_bump(spec.center, spec.width, spec.amplitude)
    return F.polynomial(spec.constant, spec.linear, spec.quadratic)


def build_vector_field(spec: VectorFieldSpec, model: GaussianModel) -> F.VectorField:
    n = model.dim
    if spec.kind == "constant":
        if len(spec.vector) != n:
            raise DimensionMismatchError(f"constant vector has {len(spec.vector)} entries on a {n}-dim model")
        return F.constant_vector(spec.vector)
    if spec.kind == "basis":
        return F.basis_vector(spec.k, n)
    if spec.kind == "zero":
        return F.zero_vector(n)
    if spec.kind in ("gradient_of", "normalized_gradient_of"):
        if spec.field is None:
            raise ValueError(f"vector field kind {spec.kind!r} needs a 'field'")
        G = build_field(spec.field, model)
        return F.gradient_field(G, n) if spec.kind == "gradient_of" else F.normalized_gradient_field(G, n)
    return F.polynomial_vector(spec.offset, spec.linear, spec.square, n)


def build_surface(spec: SurfaceSpec, model: GaussianModel) -> S.LevelSetSurface:
    if spec.kind == "hyperplane":
        normal = spec.normal or [1.0] + [0.0] * (model.dim - 1)
        if len(normal) != model.dim:
            raise DimensionMismatchError(f"normal has {len(normal)} entries on a {model.dim}-dim model")
        return S.hyperplane(normal, spec.offset, spec.delta)
    if spec.kind == "sphere":
        return S.sphere(model, spec.radius, spec.delta)
    if spec.kind == "l2_path_sphere":
        return S.l2_path_sphere(model, spec.delta)
    if spec.field is None:
        raise ValueError("custom surface needs a 'field'")
    return S.custom(build_field(spec.field, model), spec.delta)
