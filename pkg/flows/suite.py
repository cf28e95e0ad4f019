"""
Weighted Gaussian Sobolev Calculus - Check Suites

Suites are data: a RunConfig lists check ids, each id maps to one identity
or screen in the registry below. Every check produces TraceReport rows for
the CSV ledger plus a JSON detail file with the full pydantic reports.

Exit codes: 0 all passed, 1 a check failed, 2 configuration error,
3 infrastructure error inside a check.
"""

import json
import math
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from config.settings import CheckConfig, OutputConfig
from engine import fields as F
from engine import surfaces as S
from engine.divergence import (
    adjointness_check, bilinear_identity_check, condition_41_screen, energy_identity_check,
    exact_condition_constant, l2_bound_check,
)
from engine.errors import EngineError
from engine.gaussian_core import GaussianModel, sample
from engine.integrate import Estimator
from engine.registry import build_field, build_model, build_surface, build_vector_field, build_weight
from engine.traces import (
    check_gauss_green, check_trace_q_identities, check_vector_gauss_green, trace, trace_continuity_bound,
    trace_lq_norms, trace_product_check,
)
from engine.weights import (
    Weight, check_embedding_conditions, check_hypothesis1, fernique_alpha, fernique_integral_check,
    lq_moment_check,
)
from flows.run_log import RunLogger
from models.schemas import (
    DerivativeCheckReport, FieldSpec, IntegralEstimate, LedgerRow, Method, MomentEstimate, RunConfig,
    TraceReport,
)

console = Console()

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_INFRA = 0, 1, 2, 3


# ============================================================
# Weighted integration by parts
# ============================================================

def check_ibp(model: GaussianModel, weight: Weight, f: F.ScalarField, h: int, budget: int | None = None,
              seed: int | None = None, method: str = "auto", estimator: Estimator | None = None) -> TraceReport:
    """int d_h f dnu = int f (y_h - d_h log w) dnu on one shared point set."""
    model.check_index(h)
    est = Estimator.make(method, budget, seed, estimator)
    i = h - 1

    def lhs(Y):
        return f.grad(Y)[:, i] * weight.value(Y)

    def rhs(Y):
        return f.value(Y) * (Y[:, i] - weight.grad_log(Y)[:, i]) * weight.value(Y)

    left, right = est.run(model, [lhs, rhs], stream=(10, h))
    return est.report("ibp", left, right, {"h": h, "f": f.label, "weight": weight.label})


# ============================================================
# Run context
# ============================================================

@dataclass
class SuiteContext:
    config: RunConfig
    model: GaussianModel
    weight: Weight
    estimator: Estimator
    surface: Optional[S.LevelSetSurface] = None
    fields: dict = dc_field(default_factory=dict)
    vector_fields: dict = dc_field(default_factory=dict)

    @classmethod
    def build(cls, config: RunConfig) -> "SuiteContext":
        model = build_model(config.model)
        est = Estimator(method=config.method, budget=config.budget, seed=config.seed, workers=config.workers,
                        sigmas=config.tolerance.sigmas, floor=config.tolerance.floor)
        return cls(
            config=config,
            model=model,
            weight=build_weight(config.weight, model),
            estimator=est,
            surface=build_surface(config.surface, model) if config.surface else None,
            fields={k: build_field(v, model) for k, v in config.fields.items()},
            vector_fields={k: build_vector_field(v, model) for k, v in config.vector_fields.items()},
        )

    def params(self, check_id: str) -> dict:
        return self.config.params.get(check_id, {})

    def field(self, name: str) -> F.ScalarField:
        if name in self.fields:
            return self.fields[name]
        if name == "one":
            return F.constant(1.0).relabel("1")
        if name == "f":
            return F.gaussian_bump(center=(0.25,), width=1.2).relabel("bump")
        return build_field(FieldSpec(name=name), self.model)

    def vector_field(self, name: str) -> F.VectorField:
        if name in self.vector_fields:
            return self.vector_fields[name]
        n = self.model.dim
        offset = np.zeros(n)
        offset[0] = 1.0
        square = np.zeros((n, n))
        square[0, -1] = 0.25
        return replace(F.polynomial_vector(offset, 0.5 * np.eye(n), square, n), label="Phi")

    def indices(self, values) -> list[int]:
        return list(values) if values else list(range(1, self.model.dim + 1))

    def hyperplane(self) -> S.LevelSetSurface:
        if self.surface is not None and self.surface.kind == "hyperplane":
            return self.surface
        return S.coordinate_hyperplane(self.model, 1, 0.0)

    def sphere(self, radius: float) -> S.LevelSetSurface:
        if self.surface is not None and self.surface.kind == "sphere":
            return self.surface
        return S.sphere(self.model, radius)

    def any_surface(self) -> S.LevelSetSurface:
        return self.surface if self.surface is not None else self.hyperplane()


# ============================================================
# Row helpers for screens that are not two-sided identities
# ============================================================

def _closed(value: float) -> IntegralEstimate:
    return IntegralEstimate(value=value, stderr=0.0, method=Method.CLOSED_FORM, n_eval=0)


def _row(identity_id: str, lhs: IntegralEstimate, rhs: IntegralEstimate, tolerance: float,
         config: dict | None = None, warnings: list[str] | None = None) -> TraceReport:
    delta = abs(lhs.value - rhs.value)
    return TraceReport(identity_id=identity_id, lhs=lhs, rhs=rhs, abs_delta=delta if math.isfinite(delta) else math.inf,
                       tolerance=tolerance, config=config or {}, warnings=warnings or [])


def _bound_row(identity_id: str, lhs: IntegralEstimate, rhs: IntegralEstimate, slack: float,
               config: dict | None = None, warnings: list[str] | None = None, strict: bool = False) -> TraceReport:
    """One-sided row: delta is the excess of lhs over rhs, so pass iff lhs <= rhs + slack (lhs < rhs if strict)."""
    excess = lhs.value - rhs.value
    if math.isnan(excess):
        delta = math.inf
    elif strict:
        delta = 0.0 if excess < 0.0 else max(excess, math.ulp(0.0))
    else:
        delta = max(0.0, excess)
    return TraceReport(identity_id=identity_id, lhs=lhs, rhs=rhs, abs_delta=delta, tolerance=slack,
                       config={"relation": "<" if strict else "<=", **(config or {})}, warnings=warnings or [])


def _moment_row(identity_id: str, m: MomentEstimate, config: dict) -> TraceReport:
    tol = CheckConfig.DOUBLING_SIGMAS * math.hypot(m.first.stderr, m.doubled.stderr)
    notes = [m.reason] if m.reason else []
    # one sample carrying the sum fails the row even when both budgets agree
    delta = math.inf if m.dominated else abs(m.doubled.value - m.first.value)
    return TraceReport(identity_id=identity_id, lhs=m.first, rhs=m.doubled, abs_delta=delta, tolerance=tol,
                       config={"moment": m.name, **config}, warnings=notes)


def _derivative_row(r: DerivativeCheckReport) -> TraceReport:
    return _row(f"gradient_calculus:{r.kind}", _closed(r.max_rel_error), _closed(0.0), r.tolerance,
                {"field": r.label, "points_checked": r.points_checked, "points_skipped": r.points_skipped})


# ============================================================
# Check runners
# ============================================================

def run_ibp(ctx: SuiteContext) -> tuple[list[TraceReport], list[BaseModel]]:
    p = ctx.params("ibp")
    f = ctx.field(p.get("field", "f"))
    rows = [check_ibp(ctx.model, ctx.weight, f, h, estimator=ctx.estimator) for h in ctx.indices(p.get("directions"))]
    return rows, rows


def run_bilinear(ctx: SuiteContext):
    p = ctx.params("bilinear")
    f = ctx.field(p.get("f", "coordinate:1"))
    g = ctx.field(p.get("g", "coordinate:1"))
    pairs = p.get("pairs") or ([[1, 1], [1, 2]] if ctx.model.dim > 1 else [[1, 1]])
    rows = [bilinear_identity_check(ctx.model, ctx.weight, f, g, h, k, estimator=ctx.estimator) for h, k in pairs]
    return rows, rows


def run_energy(ctx: SuiteContext):
    Phi = ctx.vector_field(ctx.params("energy").get("Phi", "Phi"))
    row = energy_identity_check(ctx.model, ctx.weight, Phi, estimator=ctx.estimator)
    return [row], [row]


def run_adjointness(ctx: SuiteContext):
    p = ctx.params("adjointness")
    row = adjointness_check(ctx.model, ctx.weight, ctx.field(p.get("field", "f")),
                            ctx.vector_field(p.get("Phi", "Phi")), estimator=ctx.estimator)
    return [row], [row]


def run_l2_bound(ctx: SuiteContext):
    p = ctx.params("l2_bound")
    C = p.get("C", exact_condition_constant(ctx.model, ctx.weight))
    warnings = []
    if C is None:
        C = condition_41_screen(ctx.model, ctx.weight, seed=ctx.config.seed).c_max_estimate
        warnings.append(f"no closed-form constant for {ctx.weight.label}; using the sampled sup {C:.6g}")
    row = l2_bound_check(ctx.model, ctx.weight, ctx.vector_field(p.get("Phi", "Phi")), C, estimator=ctx.estimator)
    row = row.model_copy(update={"warnings": row.warnings + warnings})
    return [row], [row]


def run_condition_41(ctx: SuiteContext):
    p = ctx.params("condition_41")
    report = condition_41_screen(ctx.model, ctx.weight, p.get("sample_budget", 20_000), ctx.config.seed,
                                 p.get("candidates", (1.5, 2.0, 5.0, 10.0)))
    rows = []
    if ctx.weight.kind == "square_norm":
        for v in report.violations:
            rows.append(_bound_row("condition_41", _closed(v.form_slack), _closed(0.0), 0.0,
                                   {"C": v.candidate_c, "ambient_norm": v.ambient_norm, "stated_bound": v.stated_bound,
                                    "in_search_region": v.in_search_region}, strict=True))
        for C in report.untested:
            rows.append(_bound_row("condition_41", _closed(math.nan), _closed(0.0), 0.0, {"C": C},
                                   ["no violating point found"], strict=True))
    else:
        exact = report.c_exact
        rhs = _closed(exact if exact is not None else report.c_max_estimate)
        rows.append(_row("condition_41", _closed(report.c_max_estimate), rhs, 1e-12,
                         {"weight": report.weight}, list(report.warnings)))
    return rows, [report]


def run_gauss_green(ctx: SuiteContext, check_id: str, surface: S.LevelSetSurface):
    p = ctx.params(check_id)
    rows = []
    for name in p.get("fields", ["one", "f"]):
        phi = ctx.field(name)
        for k in ctx.indices(p.get("directions")):
            r = check_gauss_green(ctx.model, ctx.weight, surface, phi, k,
                                  surface_method=p.get("surface_method", "auto"), estimator=ctx.estimator)
            rows.append(r.model_copy(update={"identity_id": check_id}))
    return rows, rows


def run_gauss_green_hyperplane(ctx: SuiteContext):
    return run_gauss_green(ctx, "gauss_green_hyperplane", ctx.hyperplane())


def run_gauss_green_sphere(ctx: SuiteContext):
    return run_gauss_green(ctx, "gauss_green_sphere", ctx.sphere(ctx.params("gauss_green_sphere").get("radius", 1.0)))


def run_vector_gauss_green(ctx: SuiteContext):
    p = ctx.params("vector_gauss_green")
    row = check_vector_gauss_green(ctx.model, ctx.weight, ctx.any_surface(), ctx.vector_field(p.get("Phi", "Phi")),
                                   surface_method=p.get("surface_method", "auto"), estimator=ctx.estimator)
    return [row], [row]


def run_trace_q_identities(ctx: SuiteContext):
    p = ctx.params("trace_q_identities")
    phi = ctx.field(p.get("field", "f"))
    rows = []
    for q in p.get("q", [1.0, 2.0]):
        rows += check_trace_q_identities(ctx.model, ctx.weight, ctx.any_surface(), phi, q,
                                         surface_method=p.get("surface_method", "auto"), estimator=ctx.estimator)
    return rows, rows


def run_surface_measure_hyperplane(ctx: SuiteContext):
    p = ctx.params("surface_measure_hyperplane")
    rows = []
    one = lambda Y: np.ones(len(Y))
    for c in p.get("offsets", [0.0, 0.5, 1.0]):
        plane = S.coordinate_hyperplane(ctx.model, 1, c)
        exact = S.surface_integral_exact(ctx.model, plane, one)
        closed = _closed(math.exp(-0.5 * c * c) / math.sqrt(2.0 * math.pi))
        rows.append(_row("surface_measure_hyperplane", exact, closed, 1e-8, {"offset": c, "path": "exact"}))
        if p.get("shell", True):
            shell = S.surface_integral_shell(ctx.model, plane, one, budget=ctx.config.budget, seed=ctx.config.seed,
                                             stream=(25, len(rows)))
            tol = ctx.estimator.sigmas * shell.stderr
            rows.append(_row("surface_measure_hyperplane", shell, closed, tol, {"offset": c, "path": "shell"},
                             shell.warnings))
    return rows, rows


def run_shell_vs_exact(ctx: SuiteContext):
    p = ctx.params("shell_vs_exact")
    surface = ctx.any_surface() if ctx.any_surface().has_exact_param else ctx.hyperplane()
    tr = trace(surface, ctx.field(p.get("field", "f")))
    shell = S.surface_integral_shell(ctx.model, surface, tr, budget=ctx.config.budget, seed=ctx.config.seed,
                                     stream=(26,))
    exact = S.surface_integral_exact(ctx.model, surface, tr)
    row = ctx.estimator.report("shell_vs_exact", shell, exact, {"surface": surface.label, "field": tr.label})
    return [row], [row, shell]


def _nested_instances(n: int) -> list[tuple[list[int], list[int]]]:
    chain = list(range(1, n + 1))
    out = [(chain[:i], chain[:i + 1]) for i in range(1, n)]
    out += [([i], chain) for i in chain[1:]]
    return out[:5]


def run_rho_monotonicity(ctx: SuiteContext):
    p = ctx.params("rho_monotonicity")
    surface = ctx.surface or ctx.sphere(p.get("radius", 1.0))
    instances = p.get("instances") or _nested_instances(ctx.model.dim)
    rows, reports = [], []
    for small, large in instances:
        r = S.rho_monotonicity_check(ctx.model, surface, small, large, ctx.config.budget, ctx.config.seed,
                                     sigmas=ctx.estimator.sigmas)
        slack = ctx.estimator.sigmas * math.hypot(r.rho_small.stderr, r.rho_large.stderr)
        rows.append(_bound_row("rho_monotonicity", r.rho_small, r.rho_large, slack,
                               {"surface": r.surface, "F_small": r.coords_small, "F_large": r.coords_large}))
        reports.append(r)
    return rows, reports


def run_hypothesis1(ctx: SuiteContext):
    report = check_hypothesis1(ctx.weight, ctx.model, ctx.config.budget, ctx.config.seed)
    rows = [_moment_row("hypothesis1", m, {"weight": report.weight}) for m in report.moments]
    return rows, [report]


def run_hypothesis2(ctx: SuiteContext):
    p = ctx.params("hypothesis2")
    surface = ctx.any_surface()
    report = S.check_hypothesis2(ctx.model, surface, p.get("q", (2.0, 4.0, 8.0)), ctx.config.budget, ctx.config.seed)
    neg = report.negative_side
    rows = [_bound_row("hypothesis2", _closed(0.0), neg, 0.0, {"surface": report.surface, "moment": "mu(G<0)"},
                      strict=True)]
    rows += [_moment_row("hypothesis2", m, {"surface": report.surface}) for m in report.moments]
    return rows, [report]


_FD_TOLERANCES = {
    # kind: (gradient tol, Hessian tol, exclusion radius around the singular set)
    "lq_norm": (1e-5, 1e-3, 1e-2),
    "sup_norm_kl": (1e-3, 1e-3, 1e-3),
}


def run_gradient_calculus(ctx: SuiteContext):
    p = ctx.params("gradient_calculus")
    Y = sample(ctx.model, p.get("points", 1000), ctx.config.seed, stream=(51,))
    f = ctx.field(p.get("field", "f"))
    subjects = [(ctx.weight.logw, ctx.weight.kind), (f, "field")]
    if ctx.surface is not None:
        subjects.append((ctx.surface.G, ctx.surface.kind))
    reports = []
    for subject, kind in subjects:
        grad_tol, hess_tol, excl = _FD_TOLERANCES.get(kind, (1e-5, 1e-5, 1e-3))
        reports.append(F.fd_gradient_check(subject, Y, grad_tol, excl))
        if subject.has_hess:
            reports.append(F.fd_hessian_check(subject, Y, hess_tol, excl))
            reports.append(F.hessian_symmetry_check(subject, Y))
    reports.append(F.chain_rule_check(np.sin, np.cos, f, Y))
    reports.append(F.modulus_rule_check(F.linear([1.0, -0.5][: ctx.model.dim]), Y))
    reports.append(F.product_rule_check(f, F.coordinate(1), Y))
    return [_derivative_row(r) for r in reports], reports


def run_fernique(ctx: SuiteContext):
    p = ctx.params("fernique")
    g = F.lq_norm(ctx.model, p.get("q", 1.5))
    result = fernique_alpha(g, p.get("p_hom", 1.0), ctx.model, ctx.config.budget, ctx.config.seed)
    moment = fernique_integral_check(g, result.alpha, ctx.model, ctx.config.budget, ctx.config.seed)
    return [_moment_row("fernique", moment, {"alpha": result.alpha, "tau": result.tau, "c": result.c})], \
        [result, moment]


def run_lq_moments(ctx: SuiteContext):
    rows = [lq_moment_check(ctx.model, q, ctx.config.budget, ctx.config.seed)
            for q in ctx.params("lq_moments").get("q", [1.5])]
    return rows, rows


def run_embedding(ctx: SuiteContext):
    p = ctx.params("embedding")
    report = check_embedding_conditions(ctx.model, ctx.weight, ctx.field(p.get("field", "f")), p.get("p", 2.0),
                                        p.get("r", 0.5), ctx.config.budget, ctx.config.seed)
    rows = [_bound_row(f"embedding:{direction}", _closed(b.bound_lhs), _closed(b.bound_rhs),
                       abs(b.bound_rhs) * 1e-12, {"field": b.field, "p": b.p}, report.warnings)
            for direction, bounds in (("mu_to_nu", report.mu_to_nu), ("nu_to_mu", report.nu_to_mu))
            for b in bounds]
    return rows, [report]


def run_trace_norms(ctx: SuiteContext):
    p = ctx.params("trace_norms")
    surface = ctx.any_surface()
    phi = ctx.field(p.get("field", "f"))
    product = trace_product_check(ctx.model, surface, phi, ctx.field(p.get("other", "coordinate:1")))
    norms = trace_lq_norms(ctx.model, surface, phi, p.get("q", (1.0, 2.0, 4.0, 8.0)), ctx.weight,
                           estimator=ctx.estimator)
    bound = trace_continuity_bound(ctx.model, ctx.weight, surface, phi, p.get("trace_q", 2.0), p.get("p", 4.0),
                                   estimator=ctx.estimator)
    rows = [_row("trace_product", _closed(product.max_abs_error), _closed(0.0), 1e-12,
                 {"surface": product.surface, "fields": product.fields})]
    # the ratio only has to be finite
    rows.append(_bound_row("trace_bound", _closed(bound.ratio), _closed(math.inf), 0.0,
                           {"q": bound.q, "p": bound.p, "trace_norm": bound.trace_norm.value,
                            "sobolev_norm": bound.sobolev_norm.value}, bound.warnings, strict=True))
    return rows, [product, *norms, bound]


# ============================================================
# Registry
# ============================================================

@dataclass(frozen=True)
class CheckSpec:
    check_id: str
    anchor: str
    formula: str
    runner: Callable[[SuiteContext], tuple]


CHECKS: dict[str, CheckSpec] = {c.check_id: c for c in [
    CheckSpec("ibp", "weighted integration by parts",
              "int d_h f dnu = int f (y_h - d_h log w) dnu", run_ibp),
    CheckSpec("bilinear", "bilinear identity for the weighted divergence",
              "int (f y_h - f d_h log w - d_h f)(g y_k - g d_k log w - d_k g) dnu = "
              "delta_hk int fg dnu - int fg d_h d_k log w dnu + int d_k f d_h g dnu", run_bilinear),
    CheckSpec("energy", "energy identity for div_nu",
              "int (div_nu Phi)^2 dnu = int (I - hess log w)[Phi, Phi] dnu + int tr((grad Phi)^2) dnu", run_energy),
    CheckSpec("adjointness", "div_nu as minus the adjoint of the H-gradient",
              "int <grad f, Phi> dnu = - int f div_nu Phi dnu", run_adjointness),
    CheckSpec("l2_bound", "L^2 bound for the weighted divergence",
              "||div_nu Phi||_{L^2(nu)} <= max(sqrt C, 1) ||Phi||_{W^{1,2}(nu)}", run_l2_bound),
    CheckSpec("condition_41", "lower bound on the Hessian of log w and its falsifier",
              "<(I - hess log w) xi, xi> <= C |xi|^2 for all x; square-norm weight violates every C", run_condition_41),
    CheckSpec("gauss_green_hyperplane", "weighted Gauss-Green formula with traces (hyperplane)",
              "int_{G<0} (d_k phi + phi d_k log w - phi y_k) dnu = int Tr(phi d_k G) w / |grad G| drho",
              run_gauss_green_hyperplane),
    CheckSpec("gauss_green_sphere", "weighted Gauss-Green formula with traces (sphere)",
              "int_{G<0} (d_k phi + phi d_k log w - phi y_k) dnu = int Tr(phi d_k G) w / |grad G| drho",
              run_gauss_green_sphere),
    CheckSpec("vector_gauss_green", "weighted divergence theorem for vector fields",
              "int_{G<0} div_nu Phi dnu = int <Tr Phi, Tr grad G> w / |grad G| drho", run_vector_gauss_green),
    CheckSpec("trace_q_identities", "trace identities for |phi|^q",
              "int_{G<0} (q phi|phi|^{q-2} <grad phi, N> + |phi|^q div_nu N) dnu = int |phi|^q <N, grad G> w / |grad G| drho "
              "for N = grad G and N = grad G / |grad G|", run_trace_q_identities),
    CheckSpec("surface_measure_hyperplane", "Gaussian surface measure of a hyperplane",
              "rho({y_1 = c}) = exp(-c^2/2) / sqrt(2 pi)", run_surface_measure_hyperplane),
    CheckSpec("shell_vs_exact", "co-area shell estimator against the exact parametrization",
              "lim (1/2eps) int_{|G|<eps} Tr phi |grad G| dmu = int Tr phi drho", run_shell_vs_exact),
    CheckSpec("rho_monotonicity", "monotonicity of the surface measure in the projection subspace",
              "rho^{F1}(A) <= rho^{F2}(A) for F1 in F2", run_rho_monotonicity),
    CheckSpec("hypothesis1", "Sobolev integrability of the weight",
              "int w^s, int |grad w|^s, int |log w|^t, int |grad log w|^t finite", run_hypothesis1),
    CheckSpec("hypothesis2", "level-set hypotheses",
              "mu(G < 0) > 0 and int_{|G|<delta} |grad G|^{-q} dmu finite", run_hypothesis2),
    CheckSpec("gradient_calculus", "H-gradient calculus: analytic vs finite differences",
              "grad, hess, chain rule, modulus rule, product rule", run_gradient_calculus),
    CheckSpec("fernique", "exponential square integrability of a measurable seminorm",
              "int exp(alpha g^2) dmu < inf with alpha from the tail-doubling constant", run_fernique),
    CheckSpec("lq_moments", "l_q moments of the coordinates",
              "E sum |(x, v_i)|^q = c_q sum lambda_i^{q/2}", run_lq_moments),
    CheckSpec("embedding", "Hoelder embeddings between W^{1,p}(mu) and W^{1,p}(nu)",
              "int |f|^p dnu <= (int |f|^{ps'} dmu)^{1/s'} (int w^s dmu)^{1/s}", run_embedding),
    CheckSpec("trace_norms", "trace product rule and empirical trace norms",
              "Tr(phi psi) = Tr phi Tr psi; ||Tr phi||_{L^q(w rho)} / ||phi||_{W^{1,p}(nu)}", run_trace_norms),
]}


# ============================================================
# Ledger and details
# ============================================================

def ledger_row(report: TraceReport) -> LedgerRow:
    return LedgerRow(identity_id=report.identity_id, anchor=report.anchor, lhs=report.lhs.value,
                     lhs_se=report.lhs.stderr, rhs=report.rhs.value, rhs_se=report.rhs.stderr,
                     delta=report.abs_delta, tol=report.tolerance, passed=report.passed)


def write_ledger(rows: list[TraceReport], path: Path, append: bool = False) -> pd.DataFrame:
    """CSV with repr-exact floats so identical runs give identical bytes."""
    records = [ledger_row(r).model_dump(by_alias=True) for r in rows]
    df = pd.DataFrame.from_records(records, columns=list(OutputConfig.LEDGER_COLUMNS))
    for col in ("lhs", "lhs_se", "rhs", "rhs_se", "delta", "tol"):
        df[col] = df[col].map(repr)
    if append and path.exists():
        df.to_csv(path, mode="a", header=False, index=False)
    else:
        df.to_csv(path, index=False)
    return df


def write_detail(spec: CheckSpec, reports: list[BaseModel], path: Path):
    payload = {"check_id": spec.check_id, "anchor": spec.anchor, "formula": spec.formula,
               "reports": [r.model_dump(mode="json") for r in reports]}
    path.write_text(json.dumps(payload, indent=2, default=str))


# ============================================================
# Runner
# ============================================================

def _summary_table(rows: list[TraceReport]) -> Table:
    table = Table(title="Identity ledger", show_lines=False)
    for col in ("check", "anchor", "lhs", "rhs", "|delta|", "tol", ""):
        table.add_column(col, justify="right" if col in ("lhs", "rhs", "|delta|", "tol") else "left")
    for r in rows:
        mark = "[green]✓[/green]" if r.passed else "[red]✗[/red]"
        table.add_row(r.identity_id, r.anchor, f"{r.lhs.value:.8g}", f"{r.rhs.value:.8g}",
                      f"{r.abs_delta:.3g}", f"{r.tolerance:.3g}", mark)
    return table


def run_suite(config: RunConfig, out_dir: Path | None = None, echo: bool = True, append: bool = False) -> int:
    out = Path(out_dir or config.output)
    unknown = [c for c in config.suite if c not in CHECKS]
    if unknown:
        console.print(f"[red]Unknown check ids: {unknown}. Run list-checks.[/red]")
        return EXIT_CONFIG
    try:
        ctx = SuiteContext.build(config)
    except (EngineError, ValueError, KeyError) as e:
        console.print(f"[red]Configuration error: {e}[/red]")
        return EXIT_CONFIG

    console.print(Panel(
        f"[bold]Model:[/bold]  {ctx.model.label or ctx.model.dim}  (n = {ctx.model.dim})\n"
        f"[bold]Weight:[/bold] {ctx.weight.label}\n"
        f"[bold]Surface:[/bold] {ctx.surface.label if ctx.surface else '-'}\n"
        f"[bold]Suite:[/bold]  {', '.join(config.suite)}\n"
        f"[bold]Method:[/bold] {config.method}  budget={config.budget}  seed={config.seed}",
        title="Weighted Gaussian Sobolev Calculus", border_style="cyan",
    ))

    all_rows: list[TraceReport] = []
    status = EXIT_OK
    with RunLogger(out, echo=echo) as logger:
        for check_id in config.suite:
            spec = CHECKS[check_id]
            logger.log(f"▶ {check_id}: {spec.anchor}")
            try:
                rows, reports = spec.runner(ctx)
            except Exception as e:
                logger.log(f"❌ {check_id} raised {type(e).__name__}: {e}")
                write_ledger(all_rows, out / OutputConfig.LEDGER_NAME, append)
                logger.log(f"Partial ledger ({len(all_rows)} rows): {out / OutputConfig.LEDGER_NAME}")
                return EXIT_INFRA
            rows = [r if r.anchor else r.model_copy(update={"anchor": spec.anchor}) for r in rows]
            for r in rows:
                logger.warn(check_id, r.warnings)
            ok = all(r.passed for r in rows)
            logger.log(f"{'✅' if ok else '❌'} {check_id}: {sum(r.passed for r in rows)}/{len(rows)} passed")
            if not ok:
                status = EXIT_FAILED
            all_rows.extend(rows)
            write_detail(spec, reports, out / f"{check_id}.json")
        write_ledger(all_rows, out / OutputConfig.LEDGER_NAME, append)
        logger.log(f"Ledger: {out / OutputConfig.LEDGER_NAME}")

    console.print(_summary_table(all_rows))
    return status
