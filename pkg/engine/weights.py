"""
Weights w for nu = w mu, with declared Sobolev exponents (s, t).

Built-ins:
- unit                  w = 1
- gaussian_type(lam)    w = exp(lam (x, x)_X)
- lq_norm(q, scale)     w = exp(scale ||x||_q)
- sup_norm_kl(grid)     w = exp(||f||_inf) for the Karhunen-Loeve Brownian path f
- square_norm           w = (x, x)_X^2, the weight for which the L^2 divergence bound fails

Checkers: the integrability screen for (s, t), the embedding Hoelder bounds,
the Fernique-type alpha estimator and the l_q moment formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gamma

from config.settings import CheckConfig, EngineConfig
from engine.errors import InvalidExponentsError, MissingDerivativeError, NoAdmissibleTauError
from engine.fields import (
    ScalarField, ambient_quadratic, constant, lq_norm, scaled, sup_norm_kl,
)
from engine.gaussian_core import GaussianModel, gaussian_type_threshold, sample
from engine.integrate import doubling_stability, monte_carlo
from models.schemas import (
    EmbeddingBound, EmbeddingReport, FerniqueResult, Hypothesis1Report, IntegralEstimate, Method,
    MomentEstimate, TraceReport,
)


@dataclass(frozen=True)
class Weight:
    logw: ScalarField
    s: float = 2.0
    t: float = 3.0
    kind: str = "custom"
    label: str = "w"
    params: dict = dc_field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not self.logw.has_grad:
            raise MissingDerivativeError("log w must carry an analytic H-gradient")
        if self.s <= 1.0:
            raise InvalidExponentsError(f"s must exceed 1, got {self.s}")
        if self.t <= self.s_conj:
            raise InvalidExponentsError(f"t = {self.t} must exceed s' = {self.s_conj:.4g}")

    @property
    def s_conj(self) -> float:
        return self.s / (self.s - 1.0)

    @property
    def p_min(self) -> float:
        return self.t / (self.t - self.s_conj)

    @property
    def has_hess(self) -> bool:
        return self.logw.has_hess

    def value(self, Y) -> np.ndarray:
        return np.exp(self.logw.value(Y))

    def log_value(self, Y) -> np.ndarray:
        return self.logw.value(Y)

    def grad_log(self, Y) -> np.ndarray:
        return self.logw.grad(Y)

    def hess_log(self, Y) -> np.ndarray:
        if not self.logw.has_hess:
            raise MissingDerivativeError(f"weight {self.label} has no Hessian of log w")
        return self.logw.hess(Y)

    def singular(self, Y) -> np.ndarray:
        return self.logw.singular(Y)

    @property
    def w(self) -> ScalarField:
        """w itself as a field: grad w = w grad log w."""
        lw = self.logw

        def grad(Y):
            return np.exp(lw.value(Y))[:, None] * lw.grad(Y)

        hess = None
        if lw.has_hess:
            def hess(Y):
                g = lw.grad(Y)
                return np.exp(lw.value(Y))[:, None, None] * (lw.hess(Y) + np.einsum("ni,nj->nij", g, g))

        return ScalarField(lambda Y: np.exp(lw.value(Y)), grad, hess, lw.singular_fn, lw.distance_fn,
                           label=self.label)

    def describe(self) -> dict:
        return {"kind": self.kind, "label": self.label, "s": self.s, "t": self.t,
                "s_conj": self.s_conj, "p_min": self.p_min, **self.params}

    def exponent_warnings(self, p: float | None = None) -> list[str]:
        out = []
        if p is not None and p < self.p_min:
            out.append(f"p = {p:g} is below p_min = t/(t-s') = {self.p_min:.4g}")
        if self.t < 2.0 * self.s_conj:
            out.append(f"t = {self.t:g} < 2s' = {2 * self.s_conj:.4g}; the L^2 divergence theory assumes t >= 2s'")
        return out


# ============================================================
# Built-ins
# ============================================================

def unit_weight(s: float = 2.0, t: float = 3.0) -> Weight:
    return Weight(constant(0.0), s, t, kind="unit", label="unit")


def gaussian_type_weight(model: GaussianModel, lam: float, s: float = 2.0, t: float = 3.0) -> Weight:
    """w = exp(lam (x, x)_X); d_i log w = 2 lam (x, e_i)_X = 2 lam lambda_i y_i."""
    logw = scaled(ambient_quadratic(model), lam).relabel(f"{lam:g}(x,x)")
    return Weight(logw, s, t, kind="gaussian_type", label=f"w_lambda(lambda={lam:g})",
                  params={"lambda": lam, "stated_alpha_bound": 2.0 * model.spectrum[0]})


def lq_norm_weight(model: GaussianModel, q: float, scale: float = 1.0, s: float = 2.0, t: float = 3.0) -> Weight:
    logw = scaled(lq_norm(model, q), scale)
    return Weight(logw, s, t, kind="lq_norm", label=f"exp({scale:g}||x||_{q:g})", params={"q": q, "scale": scale})


def sup_norm_kl_weight(model: GaussianModel, grid_size: int = 512, s: float = 2.0, t: float = 3.0) -> Weight:
    return Weight(sup_norm_kl(model, grid_size), s, t, kind="sup_norm_kl",
                  label=f"exp(||f||_inf) (grid={grid_size})", params={"grid": grid_size})


def square_norm_weight(model: GaussianModel, s: float = 2.0, t: float = 3.0) -> Weight:
    """w = (x, x)^2: log w = 2 log (x, x), singular at the origin."""
    lam = model.lambdas

    def fn(Y):
        with np.errstate(divide="ignore"):
            return 2.0 * np.log(np.sum(lam * Y * Y, axis=1))

    def grad(Y):
        r = np.sum(lam * Y * Y, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return 4.0 * lam * Y / r[:, None]

    def hess(Y):
        r = np.sum(lam * Y * Y, axis=1)
        ly = lam * Y
        with np.errstate(divide="ignore", invalid="ignore"):
            return 4.0 * (np.einsum("ij,n->nij", np.diag(lam), 1.0 / r)
                          - 2.0 * np.einsum("ni,nj->nij", ly, ly) / (r * r)[:, None, None])

    logw = ScalarField(fn, grad, hess, lambda Y: ~np.any(Y != 0.0, axis=1), lambda Y: np.linalg.norm(Y, axis=1),
                       label="2 log (x,x)", smoothness_note="singular at 0")
    return Weight(logw, s, t, kind="square_norm", label="(x,x)^2")


# ============================================================
# Integrability screens
# ============================================================

def gaussian_type_moment(model: GaussianModel, eta: float) -> float:
    """int exp(eta (x, x)) dmu = prod (1 - 2 eta lambda_i)^(-1/2); inf past the threshold."""
    factors = 1.0 - 2.0 * eta * model.lambdas
    if np.any(factors <= 0.0):
        return math.inf
    return float(np.prod(factors ** -0.5))


def check_hypothesis1(weight: Weight, model: GaussianModel, budget: int | None = None,
                      seed: int | None = None, stream: Sequence[int] = (101,)) -> Hypothesis1Report:
    """Screen int w^s, int |grad w|^s, int |log w|^t, int |grad log w|^t for divergence."""
    budget = budget or EngineConfig.MC_DEFAULT_BUDGET
    seed = EngineConfig.DEFAULT_SEED if seed is None else seed
    s, t = weight.s, weight.t

    def ws(Y):
        return weight.value(Y) ** s

    def grad_w_s(Y):
        return weight.value(Y) ** s * np.linalg.norm(weight.grad_log(Y), axis=1) ** s

    def log_t(Y):
        return np.abs(weight.log_value(Y)) ** t

    def grad_log_t(Y):
        return np.linalg.norm(weight.grad_log(Y), axis=1) ** t

    closed_form = None
    threshold = None
    if weight.kind == "gaussian_type":
        lam = weight.params["lambda"]
        closed_form = gaussian_type_moment(model, lam * s)
        threshold = gaussian_type_threshold(model) / s
    elif weight.kind == "unit":
        closed_form = 1.0

    moments = [
        doubling_stability(model, ws, budget, seed, tuple(stream) + (1,), name="w^s", exact=closed_form),
        doubling_stability(model, grad_w_s, budget, seed, tuple(stream) + (2,), name="|grad w|^s"),
        doubling_stability(model, log_t, budget, seed, tuple(stream) + (3,), name="|log w|^t"),
        doubling_stability(model, grad_log_t, budget, seed, tuple(stream) + (4,), name="|grad log w|^t"),
    ]
    warnings = weight.exponent_warnings()
    if closed_form is not None and math.isinf(closed_form):
        warnings.append("closed form: int w^s dmu diverges for this spectrum")
    warnings.append("precise version of w taken as its continuous representative")
    return Hypothesis1Report(weight=weight.label, s=s, t=t, s_conj=weight.s_conj, p_min=weight.p_min,
                             moments=moments, closed_form_ws=closed_form, threshold=threshold,
                             passed=not any(m.diverging for m in moments), warnings=warnings)


def check_embedding_conditions(model: GaussianModel, weight: Weight, f: ScalarField, p: float, r: float,
                               budget: int | None = None, seed: int | None = None,
                               stream: Sequence[int] = (102,)) -> EmbeddingReport:
    """Hoelder bounds behind W^{1,q}(mu) in W^{1,p}(nu) and W^{1,p}(nu) in W^{1,pr}(mu), r in (0, 1)."""
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    budget = budget or EngineConfig.MC_DEFAULT_BUDGET
    seed = EngineConfig.DEFAULT_SEED if seed is None else seed
    s, sc = weight.s, weight.s_conj
    grad_norm = ScalarField(lambda Y: np.linalg.norm(f.grad(Y), axis=1), label=f"|grad {f.label}|")
    subjects = [f, grad_norm]

    integrands = [lambda Y: weight.value(Y) ** s, lambda Y: weight.value(Y) ** (r / (r - 1.0))]
    for g in subjects:
        integrands += [
            lambda Y, g=g: np.abs(g.value(Y)) ** p * weight.value(Y),
            lambda Y, g=g: np.abs(g.value(Y)) ** (p * sc),
            lambda Y, g=g: np.abs(g.value(Y)) ** (p * r),
        ]
    est = monte_carlo(model, integrands, budget, seed, stream)
    ws, w_neg = est[0].value, est[1].value
    mu_to_nu, nu_to_mu = [], []
    for i, g in enumerate(subjects):
        nu_p, mu_psc, mu_pr = (e.value for e in est[2 + 3 * i: 5 + 3 * i])
        bound1 = mu_psc ** (1.0 / sc) * ws ** (1.0 / s)
        bound2 = nu_p ** r * w_neg ** (1.0 - r)
        slack = 1e-12
        mu_to_nu.append(EmbeddingBound(field=g.label, p=p, bound_lhs=nu_p, bound_rhs=bound1,
                                       holds=bool(nu_p <= bound1 * (1 + slack))))
        nu_to_mu.append(EmbeddingBound(field=g.label, p=p * r, bound_lhs=mu_pr, bound_rhs=bound2,
                                       holds=bool(mu_pr <= bound2 * (1 + slack))))
    return EmbeddingReport(weight=weight.label, p=p, r=r, p_at_least_p_min=bool(p >= weight.p_min),
                           mu_to_nu=mu_to_nu, nu_to_mu=nu_to_mu, warnings=weight.exponent_warnings(p))


# ============================================================
# Fernique-type alpha
# ============================================================

def fernique_alpha(g: ScalarField, p_hom: float, model: GaussianModel, budget: int | None = None,
                   seed: int | None = None, alpha_max: float | None = None,
                   stream: Sequence[int] = (103,)) -> FerniqueResult:
    """Largest alpha with log((1-c)/c) + 2 alpha tau^2 / (sqrt(2^p) - 1)^2 <= -margin.

    tau starts at the empirical upper quartile of g and moves up until
    c = mu(g <= tau) exceeds FERNIQUE_MIN_C and 1 / (1 + e^-margin), the
    smallest c that leaves alpha > 0.
    """
    if not 0.0 < p_hom <= 1.0:
        raise ValueError(f"homogeneity p must lie in (0, 1], got {p_hom}")
    budget = budget or EngineConfig.MC_DEFAULT_BUDGET
    seed = EngineConfig.DEFAULT_SEED if seed is None else seed
    alpha_max = alpha_max or CheckConfig.FERNIQUE_ALPHA_MAX
    values = g.value(sample(model, budget, seed, stream))
    values = values[np.isfinite(values)]

    quantile = CheckConfig.FERNIQUE_TAU_QUANTILE
    tau = float(np.quantile(values, quantile))
    c = float(np.mean(values <= tau))
    c_floor = max(CheckConfig.FERNIQUE_MIN_C, 1.0 / (1.0 + math.exp(-CheckConfig.FERNIQUE_MARGIN)))
    while c <= c_floor and quantile < 0.99:
        quantile = min(quantile + 0.05, 0.99)
        tau = float(np.quantile(values, quantile))
        c = float(np.mean(values <= tau))
    if c <= c_floor:
        raise NoAdmissibleTauError(f"mu(g <= tau) = {c:.3f} at the {quantile:.2f} quantile, need > {c_floor:.3f}")

    doubling = (math.sqrt(2.0 ** p_hom) - 1.0) ** 2
    if c >= 1.0 or tau == 0.0:
        alpha = math.inf
    else:
        alpha = (-CheckConfig.FERNIQUE_MARGIN - math.log((1.0 - c) / c)) * doubling / (2.0 * tau * tau)
    clamped = not math.isfinite(alpha) or alpha > alpha_max
    return FerniqueResult(tau=tau, quantile=quantile, c=c, alpha=alpha_max if clamped else alpha,
                          clamped=clamped, p_hom=p_hom)


def fernique_integral_check(g: ScalarField, alpha: float, model: GaussianModel, budget: int | None = None,
                            seed: int | None = None, stream: Sequence[int] = (104,)) -> MomentEstimate:
    """int exp(alpha g^2) dmu, screened for divergence under budget doubling."""
    budget = budget or EngineConfig.MC_DEFAULT_BUDGET
    seed = EngineConfig.DEFAULT_SEED if seed is None else seed
    return doubling_stability(model, lambda Y: np.exp(alpha * g.value(Y) ** 2), budget, seed, stream,
                              name=f"exp({alpha:.4g} g^2)")


# ============================================================
# l_q moments
# ============================================================

def abs_normal_moment(q: float) -> float:
    """E|Z|^q = 2^{q/2} Gamma((q+1)/2) / sqrt(pi)."""
    return float(2.0 ** (q / 2.0) * gamma((q + 1.0) / 2.0) / math.sqrt(math.pi))


def lq_moment_partial_sums(model: GaussianModel, q: float) -> tuple[np.ndarray, float, Optional[float]]:
    """Partial sums of E|(x, v_i)|^q, c_q, and the geometric bound c_q / (2^{q/2} - 1) for 2^-i spectra."""
    c_q = abs_normal_moment(q)
    partial = np.cumsum(c_q * model.lambdas ** (q / 2.0))
    geometric = np.allclose(model.lambdas, 2.0 ** -np.arange(1, model.dim + 1))
    bound = c_q / (2.0 ** (q / 2.0) - 1.0) if geometric else None
    return partial, c_q, bound


def lq_moment_check(model: GaussianModel, q: float, budget: int | None = None, seed: int | None = None,
                    rel_tol: float = 5e-3, stream: Sequence[int] = (105,)) -> TraceReport:
    """MC of E sum |(x, v_i)|^q against the closed-form spectral sum."""
    budget = budget or EngineConfig.MC_DEFAULT_BUDGET
    seed = EngineConfig.DEFAULT_SEED if seed is None else seed
    s = model.sqrt_lambdas
    est = monte_carlo(model, [lambda Y: np.sum(np.abs(s * Y) ** q, axis=1)], budget, seed, stream)[0]
    partial, c_q, bound = lq_moment_partial_sums(model, q)
    exact = IntegralEstimate(value=float(partial[-1]), stderr=0.0, method=Method.CLOSED_FORM, n_eval=0)
    delta = abs(est.value - exact.value)
    tol = max(rel_tol * exact.value, CheckConfig.SIGMA_MULTIPLIER * est.stderr)
    warnings = []
    if bound is not None and partial[-1] > bound:
        warnings.append(f"partial sum {partial[-1]:.6g} exceeds the geometric bound {bound:.6g}")
    return TraceReport(identity_id="lq_moments", lhs=est, rhs=exact, abs_delta=delta, tolerance=tol,
                       config={"q": q, "c_q": c_q, "geometric_bound": bound, "partial_sums": partial.tolist()},
                       warnings=warnings)

