"""
Traces on level sets and the weighted Gauss-Green identities.

The trace of a field on G^{-1}(0) is the restriction of its continuous
representative. Every identity here compares a volume integral over
{G < 0} with a surface integral against rho:

    int_{G<0} (d_k phi + phi d_k log w - phi y_k) dnu = int Tr(phi d_k G) w / |grad G| drho
    int_{G<0} div_nu Phi dnu                          = int <Tr Phi, Tr grad G> w / |grad G| drho

Volume sides run on the region rule of the surface (half-space, polar) when
the method is deterministic, otherwise on Monte Carlo with the indicator of
{G < 0}. Surface sides use the exact parametrization when there is one and
the shell estimator otherwise, always on a stream independent of the volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from config.settings import CheckConfig
from engine.divergence import div_nu
from engine.errors import GradientUnderflowError, NodeBudgetError, NoParametrizationError
from engine.fields import ScalarField, VectorField, gradient_field, normalized_gradient_field, product
from engine.gaussian_core import GaussianModel
from engine.integrate import Estimator, Integrand, apply_rule, resolve_method, restrict
from engine.surfaces import LevelSetSurface, surface_integral_exact, surface_integral_shell
from engine.weights import Weight
from models.schemas import (
    IntegralEstimate, Method, TraceBoundReport, TraceNormReport, TraceProductReport, TraceReport,
)


# ============================================================
# Traces
# ============================================================

@dataclass(frozen=True)
class SurfaceTrace:
    """Tr phi: phi evaluated within |G| <= band of the surface, NaN elsewhere."""
    surface: LevelSetSurface
    field: ScalarField
    band: float

    @property
    def label(self) -> str:
        return f"Tr {self.field.label}"

    def on_surface(self, Y: np.ndarray) -> np.ndarray:
        return np.abs(self.surface.G.value(Y)) <= self.band

    def value(self, points) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(Y), np.nan)
        near = self.on_surface(Y)
        if near.any():
            out[near] = self.field.value(Y[near])
        return out

    def __call__(self, points) -> np.ndarray:
        return self.value(points)


def trace(surface: LevelSetSurface, field: ScalarField, band: float | None = None) -> SurfaceTrace:
    return SurfaceTrace(surface, field, surface.delta if band is None else band)


def _signed_power(v: np.ndarray, q: float) -> np.ndarray:
    """phi |phi|^{q-2}; for q < 2 the value at phi = 0 is undefined and flagged NaN."""
    if q == 2.0:
        return v
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sign(v) * np.abs(v) ** (q - 1.0)
    if q < 2.0:
        out = np.where(v == 0.0, np.nan, out)
    return out


# ============================================================
# Volume and surface sides
# ============================================================

def _volume_side(model: GaussianModel, surface: LevelSetSurface, integrands: Sequence[Integrand],
                 est: Estimator, stream: Sequence[int]) -> list[IntegralEstimate]:
    if resolve_method(model, est.method) != Method.MC.value:
        try:
            rule = surface.region_rule(model, est.nodes)
        except (NoParametrizationError, NodeBudgetError):
            rule = None
        if rule is not None:
            return apply_rule(rule, integrands)
    mc = replace(est, method=Method.MC.value)
    return mc.run(model, [restrict(f, surface.G) for f in integrands], stream)


def _surface_method(model: GaussianModel, surface: LevelSetSurface, method: str) -> str:
    if method in ("exact", "shell"):
        return method
    if not surface.has_exact_param:
        return "shell"
    try:
        surface.exact_rule(model, 2)
    except NodeBudgetError:
        return "shell"
    return "exact"


def _surface_side(model: GaussianModel, surface: LevelSetSurface, integrand: Integrand, est: Estimator,
                  method: str, stream: Sequence[int]) -> IntegralEstimate:
    if _surface_method(model, surface, method) == "exact":
        rule = surface.exact_rule(model, est.nodes)
        small = surface.grad_norm(rule.points) < CheckConfig.GRADIENT_UNDERFLOW
        if small.any():
            raise GradientUnderflowError(f"|grad G| vanishes at {int(small.sum())} nodes of {surface.label}")
        return surface_integral_exact(model, surface, integrand, rule=rule)
    return surface_integral_shell(model, surface, integrand, budget=est.budget, seed=est.seed,
                                  stream=stream, workers=est.workers)


def _compare(est: Estimator, identity_id: str, lhs: IntegralEstimate, rhs: IntegralEstimate,
             config: dict, warnings: Sequence[str]) -> TraceReport:
    if lhs.stderr == 0.0 and rhs.stderr == 0.0:
        est = replace(est, floor=max(est.floor, CheckConfig.SURFACE_FLOOR))
    return est.report(identity_id, lhs, rhs, config, warnings)


def _hypothesis_notes(weight: Weight, surface: LevelSetSurface) -> list[str]:
    notes = weight.exponent_warnings()
    if surface.kind != "hyperplane" or weight.kind not in ("unit", "gaussian_type"):
        notes.append("weight and level-set hypotheses not verified in this run (see hypothesis1/hypothesis2)")
    return notes


# ============================================================
# Gauss-Green identities
# ============================================================

def check_gauss_green(model: GaussianModel, weight: Weight, surface: LevelSetSurface, phi: ScalarField, k: int,
                      budget: int | None = None, seed: int | None = None, method: str = "auto",
                      surface_method: str = "auto", estimator: Estimator | None = None) -> TraceReport:
    model.check_index(k)
    est = Estimator.make(method, budget, seed, estimator)
    i = k - 1
    tr_phi = trace(surface, phi)

    def volume(Y):
        return (phi.grad(Y)[:, i] + phi.value(Y) * (weight.grad_log(Y)[:, i] - Y[:, i])) * weight.value(Y)

    def boundary(Y):
        g = surface.G.grad(Y)
        return tr_phi(Y) * g[:, i] * weight.value(Y) / np.linalg.norm(g, axis=1)

    lhs = _volume_side(model, surface, [volume], est, stream=(31, k))[0]
    rhs = _surface_side(model, surface, boundary, est, surface_method, stream=(32, k))
    config = {"surface": surface.label, "phi": phi.label, "k": k, "weight": weight.label,
              "surface_method": rhs.method.value}
    return _compare(est, "gauss_green", lhs, rhs, config, _hypothesis_notes(weight, surface))


def check_vector_gauss_green(model: GaussianModel, weight: Weight, surface: LevelSetSurface, Phi: VectorField,
                             budget: int | None = None, seed: int | None = None, method: str = "auto",
                             surface_method: str = "auto", estimator: Estimator | None = None) -> TraceReport:
    est = Estimator.make(method, budget, seed, estimator)
    div = div_nu(model, weight, Phi)

    def volume(Y):
        return div.div_nu.value(Y) * weight.value(Y)

    def boundary(Y):
        g = surface.G.grad(Y)
        return np.sum(Phi.values(Y) * g, axis=1) * weight.value(Y) / np.linalg.norm(g, axis=1)

    lhs = _volume_side(model, surface, [volume], est, stream=(33,))[0]
    rhs = _surface_side(model, surface, boundary, est, surface_method, stream=(34,))
    config = {"surface": surface.label, "Phi": Phi.label, "weight": weight.label,
              "surface_method": rhs.method.value}
    return _compare(est, "vector_gauss_green", lhs, rhs, config, _hypothesis_notes(weight, surface))


def check_trace_q_identities(model: GaussianModel, weight: Weight, surface: LevelSetSurface, phi: ScalarField,
                             q: float, budget: int | None = None, seed: int | None = None, method: str = "auto",
                             surface_method: str = "auto",
                             estimator: Estimator | None = None) -> tuple[TraceReport, TraceReport]:
    """The two q-identities, with grad G and with the unit normal grad G / |grad G|.

        int_{G<0} (q phi|phi|^{q-2} <grad phi, grad G> + |phi|^q div_nu grad G) dnu = int |phi|^q |grad G| w drho
        int_{G<0} (q phi|phi|^{q-2} <grad phi, N> + |phi|^q div_nu N) dnu          = int |phi|^q w drho
    """
    if q < 1.0:
        raise ValueError(f"q must be >= 1, got {q}")
    est = Estimator.make(method, budget, seed, estimator)
    n = model.dim
    div_grad = div_nu(model, weight, gradient_field(surface.G, n)).div_nu
    div_normal = div_nu(model, weight, normalized_gradient_field(surface.G, n)).div_nu
    tr_phi = trace(surface, phi)

    def first(Y):
        v = phi.value(Y)
        g = surface.G.grad(Y)
        flux = np.sum(phi.grad(Y) * g, axis=1)
        return (q * _signed_power(v, q) * flux + np.abs(v) ** q * div_grad.value(Y)) * weight.value(Y)

    def second(Y):
        v = phi.value(Y)
        g = surface.G.grad(Y)
        flux = np.sum(phi.grad(Y) * g, axis=1) / np.linalg.norm(g, axis=1)
        return (q * _signed_power(v, q) * flux + np.abs(v) ** q * div_normal.value(Y)) * weight.value(Y)

    def first_boundary(Y):
        return np.abs(tr_phi(Y)) ** q * surface.grad_norm(Y) * weight.value(Y)

    def second_boundary(Y):
        return np.abs(tr_phi(Y)) ** q * weight.value(Y)

    lhs1, lhs2 = _volume_side(model, surface, [first, second], est, stream=(35,))
    rhs1 = _surface_side(model, surface, first_boundary, est, surface_method, stream=(36, 1))
    rhs2 = _surface_side(model, surface, second_boundary, est, surface_method, stream=(36, 2))
    notes = _hypothesis_notes(weight, surface)
    base = {"surface": surface.label, "phi": phi.label, "q": q, "weight": weight.label,
            "surface_method": rhs1.method.value}
    return (_compare(est, "trace_q_grad", lhs1, rhs1, {**base, "normal": "grad G"}, notes),
            _compare(est, "trace_q_normal", lhs2, rhs2, {**base, "normal": "grad G/|grad G|"}, notes))


# ============================================================
# Trace properties and norms
# ============================================================

def trace_product_check(model: GaussianModel, surface: LevelSetSurface, phi: ScalarField, psi: ScalarField,
                        nodes: int | None = None, tol: float = 1e-12) -> TraceProductReport:
    """Tr(phi psi) = Tr(phi) Tr(psi) on the nodes of the exact parametrization."""
    Y = surface.exact_rule(model, nodes).points
    joint = trace(surface, product(phi, psi))(Y)
    split = trace(surface, phi)(Y) * trace(surface, psi)(Y)
    ok = np.isfinite(joint) & np.isfinite(split)
    scale = np.maximum(1.0, np.abs(split[ok]))
    # a non-finite node counts as an unbounded error
    err = float(np.max(np.abs(joint[ok] - split[ok]) / scale)) if ok.all() else math.inf
    return TraceProductReport(surface=surface.label, fields=[phi.label, psi.label], max_abs_error=err,
                              points_checked=int(ok.sum()), passed=bool(err <= tol))


def _root(e: IntegralEstimate, power: float) -> IntegralEstimate:
    """e^(1/power) with a delta-method standard error."""
    v = max(e.value, 0.0)
    root = v ** (1.0 / power)
    se = root * e.stderr / (power * v) if v > 0 else 0.0
    return IntegralEstimate(value=root, stderr=se, method=e.method, n_eval=e.n_eval, dropped=e.dropped,
                            warnings=list(e.warnings))


def trace_lq_norms(model: GaussianModel, surface: LevelSetSurface, phi: ScalarField,
                   q_ladder: Sequence[float] = (1.0, 2.0, 4.0, 8.0), weight: Weight | None = None,
                   budget: int | None = None, seed: int | None = None, surface_method: str = "auto",
                   estimator: Estimator | None = None) -> list[TraceNormReport]:
    """Empirical ||Tr phi||_{L^q(w rho)} along a ladder of q; reported, no embedding claim."""
    est = Estimator.make("mc", budget, seed, estimator)
    tr_phi = trace(surface, phi)
    w = weight.value if weight is not None else (lambda Y: np.ones(len(Y)))
    out = []
    for j, q in enumerate(q_ladder):
        def integrand(Y, q=q):
            return np.abs(tr_phi(Y)) ** q * w(Y)

        raw = _surface_side(model, surface, integrand, est, surface_method, stream=(37, j))
        out.append(TraceNormReport(surface=surface.label, q=q, norm=_root(raw, q)))
    return out


def trace_continuity_bound(model: GaussianModel, weight: Weight, surface: LevelSetSurface, phi: ScalarField,
                           q: float, p: float, budget: int | None = None, seed: int | None = None,
                           method: str = "auto", surface_method: str = "auto",
                           estimator: Estimator | None = None) -> TraceBoundReport:
    est = Estimator.make(method, budget, seed, estimator)

    def sobolev(Y):
        return (np.abs(phi.value(Y)) ** p + np.linalg.norm(phi.grad(Y), axis=1) ** p) * weight.value(Y)

    trace_norm = trace_lq_norms(model, surface, phi, (q,), weight, surface_method=surface_method,
                                estimator=est)[0].norm
    sobolev_norm = _root(est.run(model, [sobolev], stream=(38,))[0], p)
    warnings = weight.exponent_warnings(p)
    q_max = p * (weight.t - weight.s_conj) / weight.t
    if q > q_max:
        warnings.append(f"q = {q:g} exceeds p(t-s')/t = {q_max:.4g}; no trace bound is expected")
    ratio = trace_norm.value / sobolev_norm.value if sobolev_norm.value > 0 else math.inf
    return TraceBoundReport(surface=surface.label, field=phi.label, q=q, p=p, trace_norm=trace_norm,
                            sobolev_norm=sobolev_norm, ratio=ratio, warnings=warnings)

