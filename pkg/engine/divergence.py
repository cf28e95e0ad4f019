"""
Gaussian and weighted divergence, and the identities built on them.

    div_mu Phi = sum_k (d_k phi_k - phi_k y_k)
    div_nu Phi = div_mu Phi + <Phi, grad log w>

div_nu is always computed from this formula; the weak-form identities are
the checks, not the definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from engine.errors import DimensionMismatchError, MissingDerivativeError
from engine.fields import ScalarField, VectorField, either_singular
from engine.gaussian_core import GaussianModel, sample
from engine.integrate import Estimator
from engine.weights import Weight
from models.schemas import Condition41Report, IntegralEstimate, TraceReport, ViolatingPoint


def _div_mu_values(Phi: VectorField, Y: np.ndarray) -> np.ndarray:
    J = Phi.jacobian(Y)
    return np.trace(J, axis1=1, axis2=2) - np.sum(Phi.values(Y) * Y, axis=1)


def div_mu(model: GaussianModel, Phi: VectorField) -> ScalarField:
    if Phi.dim != model.dim:
        raise DimensionMismatchError(f"{Phi.label} has {Phi.dim} components on a {model.dim}-dim model")
    return ScalarField(lambda Y: _div_mu_values(Phi, Y), singular_fn=Phi.singular_fn, label=f"div_mu {Phi.label}")


@dataclass(frozen=True)
class DivergenceResult:
    field_label: str
    div_nu: ScalarField
    div_mu: ScalarField
    drift_term: ScalarField

    @property
    def decomposition(self) -> dict[str, ScalarField]:
        return {"div_mu": self.div_mu, "drift_term": self.drift_term}

    def evaluate(self, Y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        mu_part = self.div_mu.value(Y)
        drift = self.drift_term.value(Y)
        return mu_part + drift, mu_part, drift


def div_nu(model: GaussianModel, weight: Weight, Phi: VectorField) -> DivergenceResult:
    mu_field = div_mu(model, Phi)

    def drift(Y):
        return np.sum(Phi.values(Y) * weight.grad_log(Y), axis=1)

    singular = either_singular(weight.logw.singular_fn, Phi.singular_fn)
    drift_field = ScalarField(drift, singular_fn=singular, label=f"<{Phi.label}, grad log w>")
    nu_field = ScalarField(lambda Y: mu_field.value(Y) + drift(Y), singular_fn=singular,
                           label=f"div_nu {Phi.label}")
    return DivergenceResult(Phi.label, nu_field, mu_field, drift_field)


# ============================================================
# Identities
# ============================================================

def bilinear_identity_check(model: GaussianModel, weight: Weight, f: ScalarField, g: ScalarField,
                            h: int, k: int, budget: int | None = None, seed: int | None = None,
                            method: str = "mc", estimator: Estimator | None = None) -> TraceReport:
    """int (f y_h - f d_h log w - d_h f)(g y_k - g d_k log w - d_k g) dnu
    = delta_hk int fg dnu - int fg d_h d_k log w dnu + int d_k f d_h g dnu."""
    if not weight.has_hess:
        raise MissingDerivativeError(f"bilinear identity needs the Hessian of log {weight.label}")
    model.check_index(h)
    model.check_index(k)
    est = Estimator.make(method, budget, seed, estimator)
    i, j = h - 1, k - 1

    def lhs(Y):
        gl = weight.grad_log(Y)
        left = f.value(Y) * (Y[:, i] - gl[:, i]) - f.grad(Y)[:, i]
        right = g.value(Y) * (Y[:, j] - gl[:, j]) - g.grad(Y)[:, j]
        return left * right * weight.value(Y)

    def rhs(Y):
        fg = f.value(Y) * g.value(Y)
        term = (1.0 if h == k else 0.0) * fg - fg * weight.hess_log(Y)[:, i, j] + f.grad(Y)[:, j] * g.grad(Y)[:, i]
        return term * weight.value(Y)

    left, right = est.run(model, [lhs, rhs], stream=(11, h, k))
    return est.report("bilinear", left, right, {"h": h, "k": k, "f": f.label, "g": g.label, "weight": weight.label},
                      weight.exponent_warnings())


def energy_identity_check(model: GaussianModel, weight: Weight, Phi: VectorField, budget: int | None = None,
                          seed: int | None = None, method: str = "mc",
                          estimator: Estimator | None = None) -> TraceReport:
    """int (div_nu Phi)^2 dnu = int (I - hess log w)[Phi, Phi] dnu + int trace((grad Phi)^2) dnu."""
    if not weight.has_hess:
        raise MissingDerivativeError(f"energy identity needs the Hessian of log {weight.label}")
    est = Estimator.make(method, budget, seed, estimator)
    div = div_nu(model, weight, Phi)

    def lhs(Y):
        return div.div_nu.value(Y) ** 2 * weight.value(Y)

    def rhs(Y):
        V = Phi.values(Y)
        J = Phi.jacobian(Y)
        form = np.sum(V * V, axis=1) - np.einsum("ni,nij,nj->n", V, weight.hess_log(Y), V)
        return (form + np.einsum("nij,nji->n", J, J)) * weight.value(Y)

    left, right = est.run(model, [lhs, rhs], stream=(12,))
    return est.report("energy", left, right, {"Phi": Phi.label, "weight": weight.label}, weight.exponent_warnings())


def adjointness_check(model: GaussianModel, weight: Weight, f: ScalarField, Phi: VectorField,
                      budget: int | None = None, seed: int | None = None, method: str = "mc",
                      estimator: Estimator | None = None) -> TraceReport:
    """int <grad f, Phi> dnu = - int f div_nu Phi dnu."""
    est = Estimator.make(method, budget, seed, estimator)
    div = div_nu(model, weight, Phi)

    def lhs(Y):
        return np.sum(f.grad(Y) * Phi.values(Y), axis=1) * weight.value(Y)

    def rhs(Y):
        return -f.value(Y) * div.div_nu.value(Y) * weight.value(Y)

    left, right = est.run(model, [lhs, rhs], stream=(13,))
    return est.report("adjointness", left, right, {"f": f.label, "Phi": Phi.label, "weight": weight.label})


def l2_bound_check(model: GaussianModel, weight: Weight, Phi: VectorField, C: float, budget: int | None = None,
                   seed: int | None = None, method: str = "mc", estimator: Estimator | None = None) -> TraceReport:
    """||div_nu Phi||_{L^2(nu)} <= max(sqrt C, 1) ||Phi||_{W^{1,2}(nu)}; passes when lhs <= rhs + tol."""
    est = Estimator.make(method, budget, seed, estimator)
    div = div_nu(model, weight, Phi)

    def div_sq(Y):
        return div.div_nu.value(Y) ** 2 * weight.value(Y)

    def sobolev_sq(Y):
        V = Phi.values(Y)
        J = Phi.jacobian(Y)
        return (np.sum(V * V, axis=1) + np.sum(J * J, axis=(1, 2))) * weight.value(Y)

    a, b = est.run(model, [div_sq, sobolev_sq], stream=(14,))
    factor = max(np.sqrt(C), 1.0)
    lhs = _sqrt_estimate(a)
    rhs = _sqrt_estimate(b, factor)
    tol = max(est.sigmas * float(np.hypot(lhs.stderr, rhs.stderr)), est.floor)
    excess = lhs.value - rhs.value
    excess = max(0.0, excess) if math.isfinite(excess) else math.inf
    return TraceReport(identity_id="l2_bound", lhs=lhs, rhs=rhs, abs_delta=excess, tolerance=tol,
                       config={"C": C, "Phi": Phi.label, "weight": weight.label})


def _sqrt_estimate(e: IntegralEstimate, factor: float = 1.0) -> IntegralEstimate:
    root = float(np.sqrt(max(e.value, 0.0)))
    se = factor * e.stderr / (2.0 * root) if root > 0 else 0.0
    return e.model_copy(update={"value": factor * root, "stderr": se})


# ============================================================
# Curvature constant: sup of the largest eigenvalue of I - hess log w
# ============================================================

def exact_condition_constant(model: GaussianModel, weight: Weight) -> float | None:
    if weight.kind == "unit":
        return 1.0
    if weight.kind == "gaussian_type":
        lam = weight.params["lambda"]
        return float(np.max(1.0 - 2.0 * lam * model.lambdas))
    return None


def cone_value(model: GaussianModel, Y: np.ndarray) -> np.ndarray:
    """4 sum lambda_i u_i - 8 (sum sqrt(lambda_i) u_i)^2 with u_i = (x, v_i)^2 / ||x||^2."""
    a2 = model.lambdas * Y * Y
    u = a2 / np.sum(a2, axis=1, keepdims=True)
    return 4.0 * u @ model.lambdas - 8.0 * (u @ model.sqrt_lambdas) ** 2


def in_stated_region(model: GaussianModel, Y: np.ndarray, r: float) -> np.ndarray:
    """||x||^2 < sqrt(1/2) sum lambda_i (x, v_i)^2 and ||x|| < r, taken literally."""
    norm_sq = model.ambient_norm_sq(Y)
    weighted = np.sum(model.lambdas * model.lambdas * Y * Y, axis=1)
    return (norm_sq < np.sqrt(0.5) * weighted) & (norm_sq < r * r)


def square_norm_slack(model: GaussianModel, Y: np.ndarray, C: float) -> np.ndarray:
    """C|xi|^2 - Q(xi) at xi_i = (x, v_i) for w = (x, x)^2."""
    norm_sq = model.ambient_norm_sq(Y)
    return (C - 1.0) * norm_sq + cone_value(model, Y)


def _largest_eigen(weight: Weight, Y: np.ndarray) -> np.ndarray:
    n = Y.shape[1]
    M = np.eye(n)[None, :, :] - weight.hess_log(Y)
    out = np.full(len(Y), np.nan)
    finite = np.all(np.isfinite(M), axis=(1, 2))
    if finite.any():
        out[finite] = np.linalg.eigvalsh(M[finite])[:, -1]
    return out


def condition_41_screen(model: GaussianModel, weight: Weight, sample_budget: int = 20_000, seed: int | None = None,
                        candidates: Sequence[float] = (1.5, 2.0, 5.0, 10.0), kappa: float = 0.5) -> Condition41Report:
    """Estimate sup_x lambda_max(I - hess log w) and hunt for points violating candidate constants C."""
    if not weight.has_hess:
        raise MissingDerivativeError(f"the curvature screen needs the Hessian of log {weight.label}")
    Y = sample(model, sample_budget, 0 if seed is None else seed, stream=(41,))
    top = _largest_eigen(weight, Y)
    exact = exact_condition_constant(model, weight)
    c_max = float(np.nanmax(top))
    warnings = []
    violations, untested = [], []

    if weight.kind == "square_norm":
        directions = np.vstack([np.eye(model.dim)[:1], Y])
        cone = cone_value(model, directions)
        best = int(np.argmin(cone))
        if cone[best] > -kappa:
            warnings.append(f"no sampled direction reaches the cone level -{kappa:g}")
        for C in candidates:
            if C <= 1.0 or cone[best] > -kappa:
                untested.append(C)
                continue
            r = np.sqrt(kappa / (C - 1.0))
            d = directions[best]
            y = 0.5 * r * d / np.sqrt(model.ambient_norm_sq(d))
            violations.append(_violation(model, weight, y, C, r, kappa))
    else:
        for C in candidates:
            idx = int(np.nanargmax(top))
            if top[idx] > C:
                violations.append(_violation(model, weight, Y[idx], C, np.inf, kappa))
            else:
                untested.append(C)
    if exact is not None and abs(c_max - exact) > 1e-12:
        warnings.append(f"sampled constant {c_max!r} differs from the exact {exact!r}")
    return Condition41Report(weight=weight.label, c_max_estimate=c_max, c_exact=exact, points_sampled=len(Y),
                             violations=violations, untested=untested, warnings=warnings)


def _violation(model: GaussianModel, weight: Weight, y: np.ndarray, C: float, r: float, kappa: float) -> ViolatingPoint:
    Y = y[None, :]
    norm_sq = float(model.ambient_norm_sq(Y)[0])
    rayleigh = float(_largest_eigen(weight, Y)[0])
    if weight.kind == "square_norm":
        slack = float(square_norm_slack(model, Y, C)[0])
        in_search = bool(cone_value(model, Y)[0] <= -kappa and norm_sq < r * r)
    else:
        slack = C - rayleigh
        in_search = True
    return ViolatingPoint(candidate_c=C, point=y.tolist(), ambient_norm=float(np.sqrt(norm_sq)), form_slack=slack,
                          stated_bound=(C - 1.0) * norm_sq - 12.0, rayleigh_max=rayleigh,
                          in_stated_region=bool(in_stated_region(model, Y, r if np.isfinite(r) else 1e300)[0]),
                          in_search_region=in_search)
