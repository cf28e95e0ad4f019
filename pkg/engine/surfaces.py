"""
Level-set surfaces G^{-1}(0) and the Gaussian-Hausdorff surface measure rho.

In whitened coordinates rho is the (n-1)-Hausdorff measure weighted by the
standard normal density. Surface integrals come from either

- an exact parametrization (hyperplanes, ambient spheres = whitened
  ellipsoids), integrated by deterministic rules, or
- the shell estimator (1/2eps) int 1{|G| < eps} g |grad G| dmu on a ladder
  of eps, extrapolated to eps -> 0 by weighted least squares in eps^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm

from config.settings import CheckConfig, EngineConfig
from engine.errors import (
    BandUndersampledError, DimensionMismatchError, NoParametrizationError, NodeBudgetError, SingularPointsError,
)
from engine.fields import ScalarField, l2_norm, linear
from engine.gaussian_core import GaussianModel
from engine.integrate import (
    Integrand, QuadratureRule, complement_basis, doubling_stability, ellipsoid_radius, evaluate,
    half_space_rule, max_nodes_per_dim, monte_carlo, polar_rule, sphere_rule, _gh_1d, _tensor,
)
from models.schemas import (
    Hypothesis2Report, IntegralEstimate, Method, MonotonicityReport, ShellEstimate, ShellRung,
)


@dataclass(frozen=True)
class LevelSetSurface:
    G: ScalarField
    delta: float = CheckConfig.SURFACE_DELTA
    kind: str = "custom"
    label: str = "G = 0"

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("band half-width delta must be positive")

    @property
    def has_exact_param(self) -> bool:
        return False

    def exact_rule(self, model: GaussianModel, nodes: int | None = None) -> QuadratureRule:
        raise NoParametrizationError(f"{self.label} has no exact parametrization")

    def region_rule(self, model: GaussianModel, nodes: int | None = None) -> QuadratureRule:
        raise NoParametrizationError(f"{self.label} has no deterministic rule for {{G < 0}}")

    def negative_side_exact(self, model: GaussianModel) -> Optional[float]:
        return None

    def grad_moment_exact(self, q: float) -> Optional[float]:
        return None

    def grad_norm(self, Y: np.ndarray, coords: Sequence[int] | None = None) -> np.ndarray:
        g = self.G.grad(Y)
        if coords is not None:
            g = g[:, [c - 1 for c in coords]]
        return np.linalg.norm(g, axis=1)

    def describe(self) -> dict:
        return {"kind": self.kind, "label": self.label, "delta": self.delta}


@dataclass(frozen=True)
class Hyperplane(LevelSetSurface):
    """G(y) = a . y - c in whitened coordinates."""
    normal: tuple[float, ...] = (1.0,)
    offset: float = 0.0

    @property
    def has_exact_param(self) -> bool:
        return True

    @property
    def _norm(self) -> float:
        return float(np.linalg.norm(self.normal))

    def _check(self, model: GaussianModel):
        if len(self.normal) != model.dim:
            raise DimensionMismatchError(f"normal has {len(self.normal)} entries on a {model.dim}-dim model")

    def exact_rule(self, model: GaussianModel, nodes: int | None = None) -> QuadratureRule:
        self._check(model)
        n = model.dim
        if n - 1 > EngineConfig.GH_MAX_DIM:
            raise NodeBudgetError(f"hyperplane rule limited to dim <= {EngineConfig.GH_MAX_DIM + 1}")
        unit = np.asarray(self.normal) / self._norm
        c = self.offset / self._norm
        zx, zw = _gh_1d(max_nodes_per_dim(n - 1, nodes))
        Z, WZ = _tensor(zx, zw, n - 1)
        points = c * unit[None, :] + Z @ complement_basis(unit).T
        weights = WZ * math.exp(-0.5 * c * c) / math.sqrt(2.0 * math.pi)
        return QuadratureRule(points, weights, Method.EXACT_PARAM)

    def region_rule(self, model: GaussianModel, nodes: int | None = None) -> QuadratureRule:
        self._check(model)
        return half_space_rule(model.dim, self.normal, self.offset, nodes)

    def negative_side_exact(self, model: GaussianModel) -> float:
        return float(norm.cdf(self.offset / self._norm))

    def grad_moment_exact(self, q: float) -> float:
        """int_{|G| < delta} |grad G|^{-q} dmu."""
        a, c = self._norm, self.offset
        return float(a ** -q * (norm.cdf((c + self.delta) / a) - norm.cdf((c - self.delta) / a)))


@dataclass(frozen=True)
class EllipsoidSphere(LevelSetSurface):
    """S(x) = ||x||_X - r, an ellipsoid in whitened coordinates."""
    model: Optional[GaussianModel] = None
    radius: float = 1.0

    @property
    def has_exact_param(self) -> bool:
        return True

    def _check(self, model: GaussianModel):
        if self.model is not None and model.spectrum != self.model.spectrum:
            raise DimensionMismatchError(f"{self.label} was built for a different covariance spectrum")

    def exact_rule(self, model: GaussianModel, nodes: int | None = None) -> QuadratureRule:
        """Star-shaped parametrization y = R(u) u with dH = R^{n-1} / (n.u) dsigma."""
        self._check(model)
        n = model.dim
        if n > EngineConfig.POLAR_MAX_DIM:
            raise NodeBudgetError(f"sphere parametrization limited to dim <= {EngineConfig.POLAR_MAX_DIM}")
        U, sw = sphere_rule(n, nodes or (16 if n >= 4 else None))
        R = ellipsoid_radius(model, self.radius, U)
        P = R[:, None] * U
        normal = model.lambdas * P
        cos = np.sum(normal * U, axis=1) / np.linalg.norm(normal, axis=1)
        density = np.exp(-0.5 * R * R) / (2.0 * math.pi) ** (n / 2.0)
        return QuadratureRule(P, sw * R ** (n - 1) / cos * density, Method.EXACT_PARAM)

    def region_rule(self, model: GaussianModel, nodes: int | None = None) -> QuadratureRule:
        self._check(model)
        return polar_rule(model, self.radius, angular_nodes=nodes)


def hyperplane(normal: Sequence[float], offset: float = 0.0, delta: float | None = None) -> Hyperplane:
    a = tuple(float(v) for v in normal)
    if not any(a):
        raise ValueError("hyperplane normal must be nonzero")
    return Hyperplane(G=linear(a, -offset).relabel(f"a.y - {offset:g}"), delta=delta or CheckConfig.SURFACE_DELTA,
                      kind="hyperplane", label=f"hyperplane(a={list(a)}, c={offset:g})", normal=a, offset=float(offset))


def coordinate_hyperplane(model: GaussianModel, k: int = 1, offset: float = 0.0) -> Hyperplane:
    model.check_index(k)
    a = np.zeros(model.dim)
    a[k - 1] = 1.0
    return hyperplane(a, offset)


def sphere(model: GaussianModel, radius: float = 1.0, delta: float | None = None,
           label: str | None = None) -> EllipsoidSphere:
    base = l2_norm(model)
    G = ScalarField(lambda Y: base.value(Y) - radius, base.grad_fn, base.hess_fn, base.singular_fn,
                    base.distance_fn, label=f"||x|| - {radius:g}", smoothness_note=base.smoothness_note)
    return EllipsoidSphere(G=G, delta=delta or CheckConfig.SURFACE_DELTA, kind="sphere",
                           label=label or f"sphere(r={radius:g})", model=model, radius=float(radius))


def l2_path_sphere(model: GaussianModel, delta: float | None = None) -> EllipsoidSphere:
    """S_1(f) = ||f||_{L^2(0,1)} - 1 on KL paths; the L^2 norm of the path is the ambient norm."""
    return sphere(model, 1.0, delta, label="S1: ||f||_2 = 1")


def custom(field: ScalarField, delta: float | None = None, label: str | None = None) -> LevelSetSurface:
    return LevelSetSurface(G=field, delta=delta or CheckConfig.SURFACE_DELTA, kind="custom",
                           label=label or f"{field.label} = 0")


# ============================================================
# Surface integrals
# ============================================================

def surface_integral_exact(model: GaussianModel, surface: LevelSetSurface, integrand: Integrand,
                           nodes: int | None = None, rule: QuadratureRule | None = None) -> IntegralEstimate:
    rule = rule or surface.exact_rule(model, nodes)
    values = evaluate(integrand, rule.points)
    bad = ~np.isfinite(values)
    if bad.any():
        raise SingularPointsError(f"integrand undefined at {int(bad.sum())} nodes of {surface.label}")
    return IntegralEstimate(value=float(np.dot(rule.weights, values)), stderr=0.0, method=Method.EXACT_PARAM,
                            n_eval=len(values))


def shell_integrand(surface: LevelSetSurface, integrand: Integrand, eps: float,
                    coords: Sequence[int] | None = None,
                    region: Callable[[np.ndarray], np.ndarray] | None = None) -> Callable:
    def fn(Y):
        band = np.abs(surface.G.value(Y)) < eps
        if region is not None:
            band &= np.asarray(region(Y), dtype=bool)
        out = np.zeros(len(Y))
        if band.any():
            Yb = Y[band]
            out[band] = evaluate(integrand, Yb) * surface.grad_norm(Yb, coords) / (2.0 * eps)
        return out

    return fn


def surface_integral_shell(model: GaussianModel, surface: LevelSetSurface, integrand: Integrand,
                           epsilon_ladder: Sequence[float] | None = None, budget: int | None = None,
                           seed: int | None = None, stream: Sequence[int] = (21,),
                           coords: Sequence[int] | None = None,
                           region: Callable[[np.ndarray], np.ndarray] | None = None,
                           workers: int | None = None) -> ShellEstimate:
    """Co-area estimate of int integrand drho, extrapolated to eps -> 0 with a + b eps^2."""
    ladder = list(epsilon_ladder or [surface.delta * f for f in CheckConfig.SHELL_LADDER])
    if max(ladder) > surface.delta:
        raise ValueError(f"largest epsilon {max(ladder):g} exceeds the band half-width {surface.delta:g}")
    budget = budget or EngineConfig.MC_DEFAULT_BUDGET
    seed = EngineConfig.DEFAULT_SEED if seed is None else seed

    rungs, dropped = [], 0
    for i, eps in enumerate(ladder):
        def indicator(Y, eps=eps):
            return (np.abs(surface.G.value(Y)) < eps).astype(float)

        est, hit = monte_carlo(model, [shell_integrand(surface, integrand, eps, coords, region), indicator],
                               budget, seed, tuple(stream) + (i,), workers)
        hits = int(round(hit.value * hit.n_eval))
        if hits < CheckConfig.BAND_MIN_HITS:
            raise BandUndersampledError(eps, hits, CheckConfig.BAND_MIN_HITS)
        dropped += est.dropped
        rungs.append(ShellRung(epsilon=eps, value=est.value, stderr=est.stderr, hits=hits))

    eps2 = np.array([r.epsilon ** 2 for r in rungs])
    vals = np.array([r.value for r in rungs])
    se = np.array([max(r.stderr, 1e-300) for r in rungs])
    X = np.column_stack([np.ones_like(eps2), eps2]) / se[:, None]
    coef, *_ = np.linalg.lstsq(X, vals / se, rcond=None)
    cov = np.linalg.inv(X.T @ X)
    intercept_se = float(math.sqrt(max(cov[0, 0], 0.0))) if np.all(se > 1e-300) else 0.0

    small, second = sorted(rungs, key=lambda r: r.epsilon)[:2]
    predicted = abs(coef[1]) * (second.epsilon ** 2 - small.epsilon ** 2)
    consistent = abs(second.value - small.value) <= predicted + 3.0 * math.hypot(small.stderr, second.stderr)
    warnings = [] if consistent else ["shell estimates at the two smallest eps disagree beyond the fitted O(eps^2) drift"]
    return ShellEstimate(value=float(coef[0]), stderr=intercept_se, method=Method.SHELL,
                         n_eval=budget * len(ladder), dropped=dropped, ladder=rungs, slope=float(coef[1]),
                         epsilon_consistent=bool(consistent), warnings=warnings)


# ============================================================
# Level-set hypotheses
# ============================================================

def check_negative_side(model: GaussianModel, surface: LevelSetSurface, budget: int | None = None,
                        seed: int | None = None, stream: Sequence[int] = (22,)) -> IntegralEstimate:
    """mu(G < 0), closed form for hyperplanes."""
    exact = surface.negative_side_exact(model)
    if exact is not None:
        return IntegralEstimate(value=exact, stderr=0.0, method=Method.CLOSED_FORM, n_eval=0)
    budget = budget or EngineConfig.MC_DEFAULT_BUDGET
    seed = EngineConfig.DEFAULT_SEED if seed is None else seed
    return monte_carlo(model, [lambda Y: (surface.G.value(Y) < 0.0).astype(float)], budget, seed, stream)[0]


def check_hypothesis2(model: GaussianModel, surface: LevelSetSurface, q_list: Sequence[float] = (2.0, 4.0, 8.0),
                      budget: int | None = None, seed: int | None = None,
                      stream: Sequence[int] = (23,)) -> Hypothesis2Report:
    """mu(G < 0) > 0 and int_{|G| < delta} |grad G|^{-q} dmu finite for each q."""
    budget = budget or EngineConfig.MC_DEFAULT_BUDGET
    seed = EngineConfig.DEFAULT_SEED if seed is None else seed
    negative = check_negative_side(model, surface, budget, seed, tuple(stream) + (0,))
    moments = []
    for i, q in enumerate(q_list):
        def integrand(Y, q=q):
            band = np.abs(surface.G.value(Y)) < surface.delta
            out = np.zeros(len(Y))
            if band.any():
                out[band] = surface.grad_norm(Y[band]) ** -q
            return out

        moments.append(doubling_stability(model, integrand, budget, seed, tuple(stream) + (i + 1,),
                                          name=f"|grad G|^-{q:g}", exact=surface.grad_moment_exact(q)))
    warnings = []
    if negative.value <= 0.0:
        warnings.append("mu(G < 0) estimated as 0")
    return Hypothesis2Report(surface=surface.label, delta=surface.delta, negative_side=negative, moments=moments,
                             passed=bool(negative.value > 0.0 and not any(m.diverging for m in moments)),
                             warnings=warnings)


def rho_monotonicity_check(model: GaussianModel, surface: LevelSetSurface, coords_small: Sequence[int],
                           coords_large: Sequence[int], budget: int | None = None, seed: int | None = None,
                           region: Callable[[np.ndarray], np.ndarray] | None = None,
                           sigmas: float | None = None) -> MonotonicityReport:
    """rho^{F1}(A) <= rho^{F2}(A) for coordinate subspaces F1 in F2.

    The two shells run on independent streams. On a shared stream the shell integrand
    |grad_F G| grows with F sample by sample, so the comparison would hold whatever the
    estimator did.
    """
    small, large = sorted(set(coords_small)), sorted(set(coords_large))
    if not set(small) <= set(large):
        raise ValueError(f"coordinates {small} are not contained in {large}")
    for c in large:
        model.check_index(c)
    one = lambda Y: np.ones(len(Y))
    rho_small = surface_integral_shell(model, surface, one, budget=budget, seed=seed, stream=(24, 0),
                                       coords=small, region=region)
    rho_large = surface_integral_shell(model, surface, one, budget=budget, seed=seed, stream=(24, 1),
                                       coords=large, region=region)
    sigmas = CheckConfig.SIGMA_MULTIPLIER if sigmas is None else sigmas
    slack = sigmas * math.hypot(rho_small.stderr, rho_large.stderr)
    return MonotonicityReport(surface=surface.label, coords_small=small, coords_large=large,
                              rho_small=rho_small, rho_large=rho_large,
                              passed=bool(rho_small.value <= rho_large.value + slack))
