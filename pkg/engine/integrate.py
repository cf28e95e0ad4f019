"""
Quadrature engines over mu and nu = w mu.

Monte Carlo
    Seeded blocks of standard-Gaussian points (see gaussian_core). Every
    integrand handed to one call sees the same points, which is how both
    sides of an identity share a stream. Block partials (count, mean, M2)
    are merged in block order, so results do not depend on the worker count.

Deterministic rules
    - gauss_hermite: tensor probabilists' Gauss-Hermite on the whole space
    - half_space: Gauss-Legendre along a normal x Gauss-Hermite on the complement
    - polar: radial Gauss-Legendre x angular product rule inside an ellipsoid

All results are IntegralEstimate models; compare_estimates is the single
pass/fail rule used by every check.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Callable, Sequence, Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from config.settings import CheckConfig, EngineConfig
from engine.errors import BudgetTooSmallError, NodeBudgetError
from engine.fields import ScalarField
from engine.gaussian_core import GaussianModel, block_layout, block_points
from models.schemas import Comparison, IntegralEstimate, Method, MomentEstimate, TraceReport

if TYPE_CHECKING:
    from engine.weights import Weight

Integrand = Union[ScalarField, Callable[[np.ndarray], np.ndarray]]


def evaluate(integrand: Integrand, Y: np.ndarray) -> np.ndarray:
    if isinstance(integrand, ScalarField):
        return integrand.value(Y)
    return np.asarray(integrand(Y), dtype=float).reshape(len(Y))


def restrict(integrand: Integrand, G: ScalarField) -> Callable[[np.ndarray], np.ndarray]:
    """integrand * 1{G < 0}; values outside the region are zero even when undefined there."""

    def fn(Y):
        inside = G.value(Y) < 0.0
        out = np.zeros(len(Y))
        if inside.any():
            out[inside] = evaluate(integrand, Y[inside])
        return out

    return fn


def resolve_method(model: GaussianModel, method: str) -> str:
    if method in ("gh", Method.GAUSS_HERMITE.value):
        return Method.GAUSS_HERMITE.value
    if method == "auto":
        return Method.GAUSS_HERMITE.value if model.dim <= 4 else Method.MC.value
    return method


# ============================================================
# Deterministic rules
# ============================================================

@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray      # (M, n) whitened
    weights: np.ndarray     # (M,) already include the Gaussian density
    method: Method


def _gh_1d(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = hermegauss(nodes)
    return x, w / math.sqrt(2.0 * math.pi)


def max_nodes_per_dim(dim: int, requested: int | None = None, lead: int = 1) -> int:
    cap = int(math.floor((EngineConfig.GH_MAX_TOTAL_NODES / lead) ** (1.0 / dim) + 1e-9)) if dim else 1
    return min(requested or EngineConfig.GH_DEFAULT_NODES, EngineConfig.GH_MAX_NODES_PER_DIM, max(cap, 1))


def _tensor(nodes_1d: np.ndarray, weights_1d: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    grids = np.meshgrid(*([nodes_1d] * dim), indexing="ij")
    wgrids = np.meshgrid(*([weights_1d] * dim), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return points, weights


@lru_cache(maxsize=32)
def _gauss_hermite_cached(dim: int, nodes: int) -> QuadratureRule:
    x, w = _gh_1d(nodes)
    points, weights = _tensor(x, w, dim)
    return QuadratureRule(points, weights, Method.GAUSS_HERMITE)


def gauss_hermite_rule(dim: int, nodes: int | None = None) -> QuadratureRule:
    """Tensor probabilists' Gauss-Hermite for the standard normal on R^dim."""
    if dim > EngineConfig.GH_MAX_DIM:
        raise NodeBudgetError(f"tensor Gauss-Hermite limited to dim <= {EngineConfig.GH_MAX_DIM}, got {dim}")
    if nodes is not None and nodes > EngineConfig.GH_MAX_NODES_PER_DIM:
        raise NodeBudgetError(f"{nodes} nodes/dim exceeds {EngineConfig.GH_MAX_NODES_PER_DIM}")
    if nodes is not None and nodes ** dim > EngineConfig.GH_MAX_TOTAL_NODES:
        raise NodeBudgetError(f"{nodes}^{dim} nodes exceeds the total budget {EngineConfig.GH_MAX_TOTAL_NODES}")
    m = nodes or max_nodes_per_dim(dim)
    return _gauss_hermite_cached(dim, m)


def complement_basis(normal: np.ndarray) -> np.ndarray:
    """Orthonormal (n, n-1) basis of the complement of a unit vector."""
    n = normal.size
    Q, _ = np.linalg.qr(np.column_stack([normal, np.eye(n)]))
    return Q[:, 1:n]


def half_space_rule(dim: int, normal: Sequence[float], offset: float, nodes: int | None = None,
                    normal_nodes: int | None = None) -> QuadratureRule:
    """Rule for the region {a . y < c} under the standard normal."""
    a = np.asarray(normal, dtype=float)
    norm = float(np.linalg.norm(a))
    unit = a / norm
    c = offset / norm
    nt = normal_nodes or EngineConfig.HALF_SPACE_NORMAL_NODES
    if dim - 1 > EngineConfig.GH_MAX_DIM:
        raise NodeBudgetError(f"half-space rule limited to dim <= {EngineConfig.GH_MAX_DIM + 1}")
    lower = min(-EngineConfig.HALF_SPACE_DEPTH, c - EngineConfig.HALF_SPACE_DEPTH)
    x, w = leggauss(nt)
    t = 0.5 * (c - lower) * (x + 1.0) + lower
    wt = 0.5 * (c - lower) * w * np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    m = max_nodes_per_dim(dim - 1, nodes, lead=nt)
    zx, zw = _gh_1d(m)
    Z, WZ = _tensor(zx, zw, dim - 1)
    B = complement_basis(unit)
    points = (t[:, None, None] * unit[None, None, :] + (Z @ B.T)[None, :, :]).reshape(-1, dim)
    weights = (wt[:, None] * WZ[None, :]).ravel()
    return QuadratureRule(points, weights, Method.HALF_SPACE)


def sphere_rule(n: int, m: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Directions u on S^{n-1} and surface-measure weights (they sum to the area).

    Polar angles use Gauss-Legendre with sin-power Jacobians, the azimuth the
    trapezoid rule (exact for trigonometric polynomials).
    """
    m = m or EngineConfig.POLAR_ANGULAR_NODES
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.ones(2)
    phi = 2.0 * math.pi * np.arange(2 * m) / (2 * m)
    wphi = np.full(2 * m, 2.0 * math.pi / (2 * m))
    if n == 2:
        return np.column_stack([np.cos(phi), np.sin(phi)]), wphi
    x, w = leggauss(m)
    theta = 0.5 * math.pi * (x + 1.0)
    wt = 0.5 * math.pi * w
    grids = np.meshgrid(*([theta] * (n - 2) + [phi]), indexing="ij")
    wgrids = np.meshgrid(*([wt] * (n - 2) + [wphi]), indexing="ij")
    angles = [g.ravel() for g in grids]
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    cols = []
    running = np.ones_like(angles[0])
    for k, th in enumerate(angles[:-1]):
        weights = weights * np.sin(th) ** (n - 2 - k)
        cols.append(running * np.cos(th))
        running = running * np.sin(th)
    cols.append(running * np.cos(angles[-1]))
    cols.append(running * np.sin(angles[-1]))
    return np.column_stack(cols), weights


def ellipsoid_radius(model: GaussianModel, radius: float, U: np.ndarray) -> np.ndarray:
    """R(u) with sum lambda_i (R u_i)^2 = radius^2."""
    return radius / np.sqrt(np.sum(model.lambdas * U * U, axis=1))


def polar_rule(model: GaussianModel, radius: float, radial_nodes: int | None = None,
               angular_nodes: int | None = None) -> QuadratureRule:
    """Rule for the ellipsoid {(x, x)_X < radius^2} under the standard normal."""
    n = model.dim
    if n > EngineConfig.POLAR_MAX_DIM:
        raise NodeBudgetError(f"polar rule limited to dim <= {EngineConfig.POLAR_MAX_DIM}, got {n}")
    if angular_nodes is None and n >= 4:
        angular_nodes = 16
    U, sw = sphere_rule(n, angular_nodes)
    R = ellipsoid_radius(model, radius, U)
    # Gaussian mass beyond |y| = 9 is negligible; cut long directions there.
    rho_max = np.minimum(1.0, 9.0 / R)
    x, w = leggauss(radial_nodes or EngineConfig.POLAR_RADIAL_NODES)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    rho = rho_max[:, None] * s[None, :]
    points = (rho[:, :, None] * (R[:, None] * 1.0)[:, :, None] * U[:, None, :]).reshape(-1, n)
    r_eff = (rho * R[:, None]).ravel()
    jac = (np.repeat(sw * rho_max * R, len(s)) * np.tile(ws, len(R))) * r_eff ** (n - 1)
    density = np.exp(-0.5 * r_eff ** 2) / (2.0 * math.pi) ** (n / 2.0)
    return QuadratureRule(points, jac * density, Method.POLAR)


def apply_rule(rule: QuadratureRule, integrands: Sequence[Integrand]) -> list[IntegralEstimate]:
    chunk = EngineConfig.MC_BLOCK_SIZE
    out = []
    for integrand in integrands:
        partials, dropped = [], 0
        for start in range(0, len(rule.weights), chunk):
            Y = rule.points[start:start + chunk]
            v = evaluate(integrand, Y)
            bad = ~np.isfinite(v)
            dropped += int(bad.sum())
            partials.append(float(np.dot(rule.weights[start:start + chunk][~bad], v[~bad])))
        warnings = [f"{dropped} quadrature nodes returned non-finite values"] if dropped else []
        out.append(IntegralEstimate(value=math.fsum(partials), stderr=0.0, method=rule.method,
                                    n_eval=len(rule.weights), dropped=dropped, warnings=warnings))
    return out


# ============================================================
# Monte Carlo
# ============================================================

@dataclass
class _Partial:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    dropped: int = 0
    max_abs: float = 0.0
    sum_abs: float = 0.0

    def merge(self, other: "_Partial") -> "_Partial":
        n = self.count + other.count
        if n == 0:
            return _Partial(dropped=self.dropped + other.dropped)
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return _Partial(n, mean, m2, self.dropped + other.dropped,
                        max(self.max_abs, other.max_abs), self.sum_abs + other.sum_abs)


def _block_partial(v: np.ndarray) -> _Partial:
    finite = np.isfinite(v)
    good = v[finite]
    if good.size == 0:
        return _Partial(dropped=int((~finite).sum()))
    mean = float(np.mean(good))
    abs_v = np.abs(good)
    return _Partial(int(good.size), mean, float(np.sum((good - mean) ** 2)), int((~finite).sum()),
                    float(abs_v.max()), float(abs_v.sum()))


def _finish(p: _Partial) -> IntegralEstimate:
    warnings = []
    if p.count == 0:
        return IntegralEstimate(value=float("nan"), stderr=0.0, method=Method.MC,
                                n_eval=0, dropped=p.dropped, warnings=["no finite samples"])
    stderr = math.sqrt(p.m2 / (p.count - 1) / p.count) if p.count > 1 else 0.0
    fraction = p.max_abs / p.sum_abs if p.sum_abs > 0 else 0.0
    ratio = p.max_abs / (p.sum_abs / p.count) if p.sum_abs > 0 else 0.0
    if ratio > CheckConfig.HEAVY_TAIL_RATIO:
        warnings.append(f"heavy tails: max/mean = {ratio:.3g}; consider a larger budget")
    if p.dropped:
        warnings.append(f"{p.dropped} samples dropped as singular")
    return IntegralEstimate(value=p.mean, stderr=stderr, method=Method.MC, n_eval=p.count + p.dropped,
                            dropped=p.dropped, max_term_fraction=fraction, tail_ratio=ratio, warnings=warnings)


def monte_carlo(model: GaussianModel, integrands: Sequence[Integrand], budget: int, seed: int,
                stream: Sequence[int] = (), workers: int | None = None) -> list[IntegralEstimate]:
    if budget < EngineConfig.MC_MIN_BUDGET:
        raise BudgetTooSmallError(f"Monte Carlo budget {budget} below minimum {EngineConfig.MC_MIN_BUDGET}")
    layout = block_layout(budget)

    def run_block(b: int) -> list[_Partial]:
        Y = block_points(model, seed, b, layout[b][1], stream)
        return [_block_partial(evaluate(f, Y)) for f in integrands]

    n_workers = workers or EngineConfig.WORKERS
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            per_block = list(pool.map(run_block, range(len(layout))))
    else:
        per_block = [run_block(b) for b in range(len(layout))]

    totals = [_Partial() for _ in integrands]
    for block in per_block:
        totals = [t.merge(p) for t, p in zip(totals, block)]
    return [_finish(t) for t in totals]


def estimate_many(model: GaussianModel, integrands: Sequence[Integrand], method: str = "mc",
                  budget: int | None = None, seed: int | None = None, stream: Sequence[int] = (),
                  nodes: int | None = None, workers: int | None = None,
                  rule: QuadratureRule | None = None) -> list[IntegralEstimate]:
    """Estimate several integrals against mu on one shared point set."""
    if rule is not None:
        return apply_rule(rule, integrands)
    method = resolve_method(model, method)
    if method == Method.GAUSS_HERMITE.value:
        return apply_rule(gauss_hermite_rule(model.dim, nodes), integrands)
    return monte_carlo(model, integrands, budget or EngineConfig.MC_DEFAULT_BUDGET,
                       EngineConfig.DEFAULT_SEED if seed is None else seed, stream, workers)


def integrate_mu(model: GaussianModel, integrand: Integrand, method: str = "mc", budget: int | None = None,
                 seed: int | None = None, **kwargs) -> IntegralEstimate:
    return estimate_many(model, [integrand], method, budget, seed, **kwargs)[0]


def weighted(weight: "Weight", integrand: Integrand) -> Callable[[np.ndarray], np.ndarray]:
    def fn(Y):
        return evaluate(integrand, Y) * weight.value(Y)

    return fn


def integrate_nu(model: GaussianModel, weight: "Weight", integrand: Integrand, method: str = "mc",
                 budget: int | None = None, seed: int | None = None, **kwargs) -> IntegralEstimate:
    """int integrand * w dmu with w as an importance factor on mu-samples."""
    est, mass = estimate_many(model, [weighted(weight, integrand), weight.value], method, budget, seed, **kwargs)
    if mass.tail_ratio is not None and mass.tail_ratio > CheckConfig.HEAVY_TAIL_RATIO:
        est.warnings.append(f"weight {weight.label} has heavy tails (max/mean = {mass.tail_ratio:.3g})")
    return est


# ============================================================
# Comparison and stability
# ============================================================

def compare_estimates(lhs: IntegralEstimate, rhs: IntegralEstimate, sigmas: float | None = None,
                      floor: float | None = None) -> Comparison:
    sigmas = CheckConfig.SIGMA_MULTIPLIER if sigmas is None else sigmas
    floor = CheckConfig.ABS_FLOOR if floor is None else floor
    delta = abs(lhs.value - rhs.value)
    tol = max(sigmas * math.hypot(lhs.stderr, rhs.stderr), floor)
    ok = math.isfinite(delta) and delta <= tol and lhs.dropped == 0 and rhs.dropped == 0
    return Comparison(abs_delta=delta, tolerance=tol, passed=bool(ok))


def doubling_stability(model: GaussianModel, integrand: Integrand, budget: int, seed: int,
                       stream: Sequence[int] = (), name: str = "moment",
                       exact: float | None = None) -> MomentEstimate:
    """Estimate at budget B and 2B on independent streams and screen for divergence."""
    first = monte_carlo(model, [integrand], budget, seed, tuple(stream) + (0,))[0]
    doubled = monte_carlo(model, [integrand], 2 * budget, seed, tuple(stream) + (1,))[0]
    reasons, dominated = [], False
    if not (math.isfinite(first.value) and math.isfinite(doubled.value)):
        reasons.append("non-finite estimate")
    else:
        spread = CheckConfig.DOUBLING_SIGMAS * math.hypot(first.stderr, doubled.stderr)
        if abs(doubled.value - first.value) > spread:
            reasons.append(f"moved {abs(doubled.value - first.value):.3g} > {spread:.3g} under doubling")
    for est in (first, doubled):
        if est.max_term_fraction is not None and est.max_term_fraction > CheckConfig.MAX_TERM_FRACTION:
            reasons.append(f"one sample carries {est.max_term_fraction:.1%} of the sum")
            dominated = True
            break
    if first.dropped or doubled.dropped:
        reasons.append("singular samples dropped")
    return MomentEstimate(name=name, first=first, doubled=doubled, exact=exact,
                          diverging=bool(reasons), dominated=dominated, reason="; ".join(reasons))


# ============================================================
# Estimator settings shared by the identity checks
# ============================================================

@dataclass(frozen=True)
class Estimator:
    method: str = "mc"
    budget: int = EngineConfig.MC_DEFAULT_BUDGET
    seed: int = EngineConfig.DEFAULT_SEED
    nodes: int | None = None
    workers: int | None = None
    sigmas: float = CheckConfig.SIGMA_MULTIPLIER
    floor: float = CheckConfig.ABS_FLOOR

    @classmethod
    def make(cls, method: str = "mc", budget: int | None = None, seed: int | None = None,
             estimator: "Estimator | None" = None) -> "Estimator":
        if estimator is not None:
            return estimator
        return cls(method=method, budget=budget or EngineConfig.MC_DEFAULT_BUDGET,
                   seed=EngineConfig.DEFAULT_SEED if seed is None else seed)

    def run(self, model: GaussianModel, integrands: Sequence[Integrand], stream: Sequence[int] = (),
            rule: QuadratureRule | None = None) -> list[IntegralEstimate]:
        return estimate_many(model, integrands, self.method, self.budget, self.seed, stream,
                             self.nodes, self.workers, rule)

    def report(self, identity_id: str, lhs: IntegralEstimate, rhs: IntegralEstimate,
               config: dict | None = None, warnings: Sequence[str] = ()) -> TraceReport:
        cmp = compare_estimates(lhs, rhs, self.sigmas, self.floor)
        notes = list(warnings) + lhs.warnings + rhs.warnings
        return TraceReport(identity_id=identity_id, lhs=lhs, rhs=rhs, abs_delta=cmp.abs_delta,
                           tolerance=cmp.tolerance,
                           config={"method": lhs.method.value, "budget": self.budget, "seed": self.seed,
                                   **(config or {})},
                           warnings=notes)
