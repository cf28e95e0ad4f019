"""
Scalar and vector fields with an H-calculus contract.

A field evaluates on batches of whitened points (shape (N, n)) and exposes
its H-gradient and H-Hessian, analytic when supplied, central finite
differences otherwise. Nonsmooth fields declare a singular predicate;
derivatives at singular points come back as NaN rows, never silently.

Constructors cover the test battery used by the identity checks:
coordinates, linear and quadratic polynomials, Gaussian bumps, cylindrical
functions, compositions/products/moduli, the l_q and l_2 ambient norms
and the sup-norm of a Karhunen-Loeve Brownian path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from config.settings import EngineConfig, CheckConfig
from engine.errors import DimensionMismatchError, IndexOutOfRangeError, MissingDerivativeError
from engine.gaussian_core import GaussianModel
from models.schemas import DerivativeCheckReport

ArrayFn = Callable[[np.ndarray], np.ndarray]


def as_batch(points) -> tuple[np.ndarray, bool]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise DimensionMismatchError(f"points must be (n,) or (N, n), got shape {arr.shape}")
    return arr, False


def _padded(vec: Sequence[float], n: int) -> np.ndarray:
    v = np.asarray(vec, dtype=float).ravel()
    if v.size > n:
        raise DimensionMismatchError(f"coefficient vector of length {v.size} exceeds dimension {n}")
    return np.pad(v, (0, n - v.size))


def _padded_matrix(mat, n: int) -> np.ndarray:
    m = np.atleast_2d(np.asarray(mat, dtype=float)) if len(mat) else np.zeros((0, 0))
    if m.shape[0] > n or m.shape[1] > n:
        raise DimensionMismatchError(f"coefficient matrix {m.shape} exceeds dimension {n}")
    out = np.zeros((n, n))
    out[: m.shape[0], : m.shape[1]] = m
    return out


def either_singular(*fns: Optional[ArrayFn]) -> Optional[ArrayFn]:
    """Union of singular predicates; None when every input is None."""
    present = [f for f in fns if f is not None]
    if not present:
        return None
    return lambda Y: np.logical_or.reduce([np.asarray(f(Y), dtype=bool) for f in present])


# ============================================================
# Finite differences
# ============================================================

def fd_gradient(fn: ArrayFn, Y: np.ndarray, h: float | None = None) -> np.ndarray:
    h = h or EngineConfig.FD_STEP
    N, n = Y.shape
    out = np.empty((N, n))
    for k in range(n):
        step = np.zeros(n)
        step[k] = h
        out[:, k] = (np.asarray(fn(Y + step)) - np.asarray(fn(Y - step))) / (2.0 * h)
    return out


def fd_jacobian(vec_fn: ArrayFn, Y: np.ndarray, h: float | None = None) -> np.ndarray:
    """J[:, i, k] = d vec_i / d y_k for a (N, n) -> (N, m) map."""
    h = h or EngineConfig.FD_STEP
    N, n = Y.shape
    cols = []
    for k in range(n):
        step = np.zeros(n)
        step[k] = h
        cols.append((np.asarray(vec_fn(Y + step)) - np.asarray(vec_fn(Y - step))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def fd_hessian(fn: ArrayFn, Y: np.ndarray, h: float | None = None) -> np.ndarray:
    h = h or EngineConfig.FD_HESSIAN_STEP
    N, n = Y.shape
    H = np.empty((N, n, n))
    f0 = np.asarray(fn(Y))
    eye = np.eye(n) * h
    for k in range(n):
        H[:, k, k] = (fn(Y + eye[k]) - 2.0 * f0 + fn(Y - eye[k])) / (h * h)
        for l in range(k + 1, n):
            pp = fn(Y + eye[k] + eye[l])
            pm = fn(Y + eye[k] - eye[l])
            mp = fn(Y - eye[k] + eye[l])
            mm = fn(Y - eye[k] - eye[l])
            H[:, k, l] = H[:, l, k] = (pp - pm - mp + mm) / (4.0 * h * h)
    return H


# ============================================================
# Scalar fields
# ============================================================

@dataclass(frozen=True)
class ScalarField:
    fn: ArrayFn
    grad_fn: Optional[ArrayFn] = None
    hess_fn: Optional[ArrayFn] = None
    singular_fn: Optional[ArrayFn] = None
    distance_fn: Optional[ArrayFn] = None
    label: str = "field"
    smoothness_note: str = ""

    @property
    def has_grad(self) -> bool:
        return self.grad_fn is not None

    @property
    def has_hess(self) -> bool:
        return self.hess_fn is not None

    def __call__(self, points):
        return self.value(points)

    def value(self, points):
        Y, single = as_batch(points)
        out = np.asarray(self.fn(Y), dtype=float)
        return out[0] if single else out

    def singular(self, points) -> np.ndarray:
        Y, single = as_batch(points)
        if self.singular_fn is None:
            mask = np.zeros(len(Y), dtype=bool)
        else:
            mask = np.asarray(self.singular_fn(Y), dtype=bool)
        return mask[0] if single else mask

    def distance_to_singular(self, Y: np.ndarray) -> np.ndarray:
        """Lower bound on the whitened distance to the singular set (inf if smooth)."""
        if self.distance_fn is not None:
            return np.asarray(self.distance_fn(Y), dtype=float)
        if self.singular_fn is not None:
            return np.where(self.singular(Y), 0.0, np.inf)
        return np.full(len(Y), np.inf)

    def grad(self, points):
        Y, single = as_batch(points)
        raw = self.grad_fn(Y) if self.grad_fn is not None else fd_gradient(self.fn, Y)
        G = np.array(raw, dtype=float).reshape(Y.shape)
        G[self.singular(Y)] = np.nan
        return G[0] if single else G

    def hess(self, points):
        Y, single = as_batch(points)
        if self.hess_fn is not None:
            H = np.array(self.hess_fn(Y), dtype=float).reshape(Y.shape + (Y.shape[1],))
        elif self.grad_fn is not None:
            J = fd_jacobian(self.grad_fn, Y)
            H = 0.5 * (J + np.swapaxes(J, 1, 2))
        else:
            H = fd_hessian(self.fn, Y)
        H[self.singular(Y)] = np.nan
        return H[0] if single else H

    def partial(self, k: int, points):
        G = self.grad(points)
        if not 1 <= k <= G.shape[-1]:
            raise IndexOutOfRangeError(f"partial index {k} outside 1..{G.shape[-1]}")
        return G[..., k - 1]

    def relabel(self, label: str) -> "ScalarField":
        return replace(self, label=label)


def _zeros_grad(Y):
    return np.zeros_like(Y)


def _zeros_hess(Y):
    return np.zeros(Y.shape + (Y.shape[1],))


def constant(c: float) -> ScalarField:
    return ScalarField(lambda Y: np.full(len(Y), float(c)), _zeros_grad, _zeros_hess, label=f"const({c:g})")


def coordinate(k: int) -> ScalarField:
    """ê_k (1-based index)."""
    if k < 1:
        raise IndexOutOfRangeError(f"coordinate index {k} must be >= 1")

    def fn(Y):
        if k > Y.shape[1]:
            raise IndexOutOfRangeError(f"coordinate index {k} outside 1..{Y.shape[1]}")
        return Y[:, k - 1]

    def grad(Y):
        G = np.zeros_like(Y)
        G[:, k - 1] = 1.0
        return G

    return ScalarField(fn, grad, _zeros_hess, label=f"y{k}")


def linear(a: Sequence[float], c0: float = 0.0) -> ScalarField:
    def fn(Y):
        return Y @ _padded(a, Y.shape[1]) + c0

    def grad(Y):
        return np.broadcast_to(_padded(a, Y.shape[1]), Y.shape).copy()

    return ScalarField(fn, grad, _zeros_hess, label=f"linear({list(a)})")


def polynomial(constant_term: float = 0.0, linear_terms: Sequence[float] = (),
               quadratic=()) -> ScalarField:
    """c + b.y + y^T M y; shorter coefficient lists are zero-padded."""
    quad = list(quadratic)

    def parts(n):
        M = _padded_matrix(quad, n) if quad else np.zeros((n, n))
        return _padded(linear_terms, n), 0.5 * (M + M.T)

    def fn(Y):
        b, M = parts(Y.shape[1])
        return constant_term + Y @ b + np.einsum("ni,ij,nj->n", Y, M, Y)

    def grad(Y):
        b, M = parts(Y.shape[1])
        return b + 2.0 * Y @ M

    def hess(Y):
        _, M = parts(Y.shape[1])
        return np.broadcast_to(2.0 * M, Y.shape + (Y.shape[1],)).copy()

    return ScalarField(fn, grad, hess, label="polynomial")


def gaussian_bump(center: Sequence[float] = (), width: float = 1.0, amplitude: float = 1.0) -> ScalarField:
    """A exp(-|y - c|^2 / (2 width^2)), bounded with bounded derivatives."""
    w2 = float(width) ** 2

    def fn(Y):
        d = Y - _padded(center, Y.shape[1])
        return amplitude * np.exp(-0.5 * np.sum(d * d, axis=1) / w2)

    def grad(Y):
        d = Y - _padded(center, Y.shape[1])
        return -fn(Y)[:, None] * d / w2

    def hess(Y):
        d = Y - _padded(center, Y.shape[1])
        f = fn(Y)
        eye = np.eye(Y.shape[1])
        return f[:, None, None] * (np.einsum("ni,nj->nij", d, d) / (w2 * w2) - eye / w2)

    return ScalarField(fn, grad, hess, label=f"bump(w={width:g})")


def cylindrical(outer: ArrayFn, outer_grad: ArrayFn, functionals, outer_hess: ArrayFn | None = None,
                label: str = "cylindrical") -> ScalarField:
    """f(y) = outer(A y) for an (m, n) matrix of whitened linear forms A.

    outer / outer_grad / outer_hess act on (N, m) arrays of functional values.
    """
    A = np.atleast_2d(np.asarray(functionals, dtype=float))
    m, n = A.shape
    if m > n:
        raise DimensionMismatchError(f"{m} functionals on a {n}-dimensional space")

    def project(Y):
        if Y.shape[1] != n:
            raise DimensionMismatchError(f"functionals act on dimension {n}, points have {Y.shape[1]}")
        return Y @ A.T

    def fn(Y):
        return np.asarray(outer(project(Y)), dtype=float)

    def grad(Y):
        return np.asarray(outer_grad(project(Y))).reshape(len(Y), m) @ A

    hess = None
    if outer_hess is not None:
        def hess(Y):
            Ho = np.asarray(outer_hess(project(Y))).reshape(len(Y), m, m)
            return np.einsum("ai,nab,bj->nij", A, Ho, A)

    return ScalarField(fn, grad, hess, label=label)


def compose(theta: Callable, theta_prime: Callable, field: ScalarField,
            theta_second: Callable | None = None, label: str | None = None) -> ScalarField:
    """theta o field with the chain rule."""

    def fn(Y):
        return theta(field.value(Y))

    def grad(Y):
        return theta_prime(field.value(Y))[:, None] * field.grad(Y)

    hess = None
    if theta_second is not None:
        def hess(Y):
            u = field.value(Y)
            g = field.grad(Y)
            return (theta_second(u)[:, None, None] * np.einsum("ni,nj->nij", g, g)
                    + theta_prime(u)[:, None, None] * field.hess(Y))

    return ScalarField(fn, grad, hess, singular_fn=field.singular_fn, distance_fn=field.distance_fn,
                       label=label or f"theta({field.label})")


def product(f: ScalarField, g: ScalarField) -> ScalarField:
    def fn(Y):
        return f.value(Y) * g.value(Y)

    def grad(Y):
        return f.value(Y)[:, None] * g.grad(Y) + g.value(Y)[:, None] * f.grad(Y)

    hess = None
    if f.has_hess and g.has_hess:
        def hess(Y):
            gf, gg = f.grad(Y), g.grad(Y)
            cross = np.einsum("ni,nj->nij", gf, gg)
            return (f.value(Y)[:, None, None] * g.hess(Y) + g.value(Y)[:, None, None] * f.hess(Y)
                    + cross + np.swapaxes(cross, 1, 2))

    def singular(Y):
        return f.singular(Y) | g.singular(Y)

    def distance(Y):
        return np.minimum(f.distance_to_singular(Y), g.distance_to_singular(Y))

    return ScalarField(fn, grad, hess, singular, distance, label=f"({f.label})*({g.label})")


def scaled(field: ScalarField, c: float) -> ScalarField:
    hess = (lambda Y: c * field.hess(Y)) if field.has_hess else None
    return ScalarField(lambda Y: c * field.value(Y), lambda Y: c * field.grad(Y), hess,
                       field.singular_fn, field.distance_fn, label=f"{c:g}*{field.label}",
                       smoothness_note=field.smoothness_note)


def abs_field(u: ScalarField) -> ScalarField:
    """|u| with grad sign(u) grad u; singular on {u = 0}."""

    def fn(Y):
        return np.abs(u.value(Y))

    def grad(Y):
        return np.sign(u.value(Y))[:, None] * u.grad(Y)

    hess = None
    if u.has_hess:
        def hess(Y):
            return np.sign(u.value(Y))[:, None, None] * u.hess(Y)

    def singular(Y):
        return (u.value(Y) == 0.0) | u.singular(Y)

    return ScalarField(fn, grad, hess, singular, label=f"|{u.label}|", smoothness_note="nonsmooth on {u = 0}")


# ============================================================
# Ambient norms (need the covariance spectrum)
# ============================================================

def ambient_quadratic(model: GaussianModel) -> ScalarField:
    """(x, x)_X = sum lambda_i y_i^2."""
    lam = model.lambdas

    def fn(Y):
        return np.sum(lam * Y * Y, axis=1)

    def grad(Y):
        return 2.0 * lam * Y

    def hess(Y):
        return np.broadcast_to(np.diag(2.0 * lam), Y.shape + (Y.shape[1],)).copy()

    return ScalarField(fn, grad, hess, label="(x,x)")


def l2_norm(model: GaussianModel) -> ScalarField:
    lam = model.lambdas

    def fn(Y):
        return np.sqrt(np.sum(lam * Y * Y, axis=1))

    def grad(Y):
        with np.errstate(divide="ignore", invalid="ignore"):
            return lam * Y / fn(Y)[:, None]

    def hess(Y):
        U = fn(Y)
        ly = lam * Y
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.einsum("ij,n->nij", np.diag(lam), 1.0 / U)
                    - np.einsum("ni,nj->nij", ly, ly) / (U ** 3)[:, None, None])

    def singular(Y):
        return ~np.any(Y != 0.0, axis=1)

    def distance(Y):
        return np.linalg.norm(Y, axis=1)

    return ScalarField(fn, grad, hess, singular, distance, label="||x||", smoothness_note="singular at 0")


def lq_norm(model: GaussianModel, q: float) -> ScalarField:
    """||x||_q = (sum |(x, v_i)|^q)^(1/q) with (x, v_i) = sqrt(lambda_i) y_i."""
    if q <= 1.0:
        raise ValueError(f"q must exceed 1, got {q}")
    s = model.sqrt_lambdas

    def fn(Y):
        return np.sum(np.abs(s * Y) ** q, axis=1) ** (1.0 / q)

    def _terms(Y):
        a = s * Y
        U = fn(Y)
        return a, np.sign(a) * np.abs(a) ** (q - 1.0), U

    def grad(Y):
        _, g, U = _terms(Y)
        with np.errstate(divide="ignore", invalid="ignore"):
            return s * g * (U ** (1.0 - q))[:, None]

    def hess(Y):
        a, g, U = _terms(Y)
        with np.errstate(divide="ignore", invalid="ignore"):
            diag = (q - 1.0) * np.abs(a) ** (q - 2.0) * (U ** (1.0 - q))[:, None]
            H = np.einsum("ni,ij->nij", diag, np.eye(len(s)))
            H += (1.0 - q) * np.einsum("ni,nj->nij", g, g) * (U ** (1.0 - 2.0 * q))[:, None, None]
        return H * np.outer(s, s)

    def singular(Y):
        return np.any(Y == 0.0, axis=1)

    def distance(Y):
        return np.min(np.abs(Y), axis=1)

    return ScalarField(fn, grad, hess, singular, distance, label=f"||x||_{q:g}",
                       smoothness_note="nonsmooth where a coordinate vanishes")


# ============================================================
# Karhunen-Loeve Brownian paths
# ============================================================

def kl_grid(grid_size: int) -> np.ndarray:
    if grid_size < EngineConfig.SUP_NORM_MIN_GRID:
        raise ValueError(f"grid_size must be >= {EngineConfig.SUP_NORM_MIN_GRID}, got {grid_size}")
    return np.linspace(0.0, 1.0, grid_size)


def kl_basis(model: GaussianModel, grid: np.ndarray) -> np.ndarray:
    """Phi[j, i] = sqrt(2 lambda_i) sin(xi_j / sqrt(lambda_i)); the path is Phi @ y."""
    s = model.sqrt_lambdas
    return math.sqrt(2.0) * s[None, :] * np.sin(grid[:, None] / s[None, :])


def kl_paths(model: GaussianModel, Y, grid_size: int = 512) -> np.ndarray:
    Yb, _ = as_batch(Y)
    return Yb @ kl_basis(model, kl_grid(grid_size)).T


def sup_norm_kl(model: GaussianModel, grid_size: int = 512) -> ScalarField:
    """max_xi |f(xi)| of the KL path on a uniform grid; argmax ties go to the first index."""
    Phi = kl_basis(model, kl_grid(grid_size))

    def _argmax(Y):
        paths = Y @ Phi.T
        idx = np.argmax(np.abs(paths), axis=1)
        return paths, idx

    def fn(Y):
        paths, idx = _argmax(Y)
        return np.abs(paths[np.arange(len(Y)), idx])

    def grad(Y):
        paths, idx = _argmax(Y)
        sgn = np.sign(paths[np.arange(len(Y)), idx])
        return sgn[:, None] * Phi[idx]

    def singular(Y):
        return fn(Y) == 0.0

    def distance(Y):
        # Smallest single-coordinate step that lets another grid point overtake the argmax.
        out = np.empty(len(Y))
        for start in range(0, len(Y), 256):
            Yc = Y[start:start + 256]
            paths, idx = _argmax(Yc)
            rows = np.arange(len(Yc))
            top = np.abs(paths[rows, idx])
            signed = np.sign(paths)[:, :, None] * Phi[None, :, :]
            rate = np.max(np.abs(signed[rows, idx][:, None, :] - signed), axis=2)
            gap = top[:, None] - np.abs(paths)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(rate > 0, gap / rate, np.inf)
            ratio[rows, idx] = np.inf
            out[start:start + 256] = np.where(top == 0.0, 0.0, np.min(ratio, axis=1))
        return out

    return ScalarField(fn, grad, _zeros_hess, singular, distance, label=f"sup|KL path| (grid={grid_size})",
                       smoothness_note="piecewise linear; gradient by the argmax formula")


# ============================================================
# Vector fields
# ============================================================

@dataclass(frozen=True)
class VectorField:
    """Phi with components phi_k = <Phi, e_k>_H; J[:, i, j] = d_j phi_i."""
    values_fn: ArrayFn
    jacobian_fn: ArrayFn
    dim: int
    label: str = "Phi"
    singular_fn: Optional[ArrayFn] = None

    def values(self, points) -> np.ndarray:
        Y, single = as_batch(points)
        self._check(Y)
        V = np.asarray(self.values_fn(Y), dtype=float)
        return V[0] if single else V

    def jacobian(self, points) -> np.ndarray:
        Y, single = as_batch(points)
        self._check(Y)
        J = np.asarray(self.jacobian_fn(Y), dtype=float)
        return J[0] if single else J

    def singular(self, points) -> np.ndarray:
        Y, single = as_batch(points)
        if self.singular_fn is None:
            mask = np.zeros(len(Y), dtype=bool)
        else:
            mask = np.asarray(self.singular_fn(Y), dtype=bool)
        return mask[0] if single else mask

    def component(self, i: int) -> ScalarField:
        if not 1 <= i <= self.dim:
            raise IndexOutOfRangeError(f"component {i} outside 1..{self.dim}")
        return ScalarField(lambda Y: self.values(Y)[:, i - 1], lambda Y: self.jacobian(Y)[:, i - 1, :],
                           singular_fn=self.singular_fn, label=f"{self.label}_{i}")

    @property
    def components(self) -> tuple[ScalarField, ...]:
        return tuple(self.component(i) for i in range(1, self.dim + 1))

    def _check(self, Y):
        if Y.shape[1] != self.dim:
            raise DimensionMismatchError(f"{self.label} has {self.dim} components, points have dim {Y.shape[1]}")

    @classmethod
    def from_components(cls, components: Sequence[ScalarField], label: str = "Phi") -> "VectorField":
        comps = tuple(components)
        return cls(lambda Y: np.stack([c.value(Y) for c in comps], axis=1),
                   lambda Y: np.stack([c.grad(Y) for c in comps], axis=1),
                   len(comps), label, either_singular(*(c.singular_fn for c in comps)))


def constant_vector(c: Sequence[float]) -> VectorField:
    vec = np.asarray(c, dtype=float)
    n = vec.size
    return VectorField(lambda Y: np.broadcast_to(vec, Y.shape).copy(),
                       lambda Y: np.zeros((len(Y), n, n)), n, label=f"const{list(vec)}")


def basis_vector(k: int, dim: int) -> VectorField:
    if not 1 <= k <= dim:
        raise IndexOutOfRangeError(f"basis index {k} outside 1..{dim}")
    e = np.zeros(dim)
    e[k - 1] = 1.0
    return VectorField(lambda Y: np.broadcast_to(e, Y.shape).copy(),
                       lambda Y: np.zeros((len(Y), dim, dim)), dim, label=f"e{k}")


def zero_vector(dim: int) -> VectorField:
    return VectorField(lambda Y: np.zeros_like(Y), lambda Y: np.zeros((len(Y), dim, dim)), dim, label="0")


def gradient_field(G: ScalarField, dim: int) -> VectorField:
    return VectorField(G.grad, G.hess, dim, label=f"grad({G.label})", singular_fn=G.singular_fn)


def normalized_gradient_field(G: ScalarField, dim: int) -> VectorField:
    """grad G / |grad G| with Jacobian H/|g| - g (g^T H) / |g|^3."""

    def values(Y):
        g = G.grad(Y)
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def jac(Y):
        g = G.grad(Y)
        H = G.hess(Y)
        norm = np.linalg.norm(g, axis=1)
        gH = np.einsum("nk,nkj->nj", g, H)
        return H / norm[:, None, None] - np.einsum("ni,nj->nij", g, gH) / (norm ** 3)[:, None, None]

    def flat(Y):
        return np.linalg.norm(G.grad(Y), axis=1) < CheckConfig.GRADIENT_UNDERFLOW

    return VectorField(values, jac, dim, label=f"grad({G.label})/|grad|",
                       singular_fn=either_singular(G.singular_fn, flat))


def polynomial_vector(offset: Sequence[float] = (), linear=(), square=(), dim: int | None = None) -> VectorField:
    """phi_i(y) = b_i + sum_j A_ij y_j + sum_j C_ij y_j^2."""
    n = dim or max(len(offset), len(linear), len(square))
    if n == 0:
        raise DimensionMismatchError("polynomial vector field needs a dimension")
    b = _padded(offset, n)
    A = _padded_matrix(list(linear), n) if len(linear) else np.zeros((n, n))
    C = _padded_matrix(list(square), n) if len(square) else np.zeros((n, n))

    def values(Y):
        return b + Y @ A.T + (Y * Y) @ C.T

    def jac(Y):
        return A[None, :, :] + 2.0 * C[None, :, :] * Y[:, None, :]

    return VectorField(values, jac, n, label="polynomial Phi")


# ============================================================
# Derivative checks
# ============================================================

def _rel_error(analytic: np.ndarray, approx: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    err = np.abs(analytic - approx) / np.maximum(1.0, np.abs(analytic))
    return float(np.max(err))


def _checkable(field: ScalarField, Y: np.ndarray, exclusion: float) -> np.ndarray:
    return field.distance_to_singular(Y) > exclusion


def fd_gradient_check(field: ScalarField, points, tol: float = 1e-5, exclusion: float = 1e-3) -> DerivativeCheckReport:
    """Analytic gradient vs central differences at points away from the singular set."""
    if not field.has_grad:
        raise MissingDerivativeError(f"{field.label} has no analytic gradient to check")
    Y, _ = as_batch(points)
    keep = _checkable(field, Y, exclusion)
    Yk = Y[keep]
    err = _rel_error(field.grad(Yk), fd_gradient(field.fn, Yk))
    return DerivativeCheckReport(label=field.label, kind="gradient", max_rel_error=err,
                                 points_checked=int(keep.sum()), points_skipped=int((~keep).sum()),
                                 tolerance=tol, passed=bool(err <= tol))


def fd_hessian_check(field: ScalarField, points, tol: float = 1e-5, exclusion: float = 1e-3) -> DerivativeCheckReport:
    if not field.has_hess:
        raise MissingDerivativeError(f"{field.label} has no analytic Hessian to check")
    Y, _ = as_batch(points)
    keep = _checkable(field, Y, exclusion)
    Yk = Y[keep]
    if field.has_grad:
        approx = fd_jacobian(field.grad_fn, Yk)
    else:
        approx = fd_hessian(field.fn, Yk)
    err = _rel_error(field.hess(Yk), approx)
    return DerivativeCheckReport(label=field.label, kind="hessian", max_rel_error=err,
                                 points_checked=int(keep.sum()), points_skipped=int((~keep).sum()),
                                 tolerance=tol, passed=bool(err <= tol))


def hessian_symmetry_check(field: ScalarField, points, tol: float = 1e-10) -> DerivativeCheckReport:
    Y, _ = as_batch(points)
    keep = ~field.singular(Y)
    H = field.hess(Y[keep])
    err = float(np.max(np.abs(H - np.swapaxes(H, 1, 2)))) if H.size else 0.0
    return DerivativeCheckReport(label=field.label, kind="symmetry", max_rel_error=err,
                                 points_checked=int(keep.sum()), points_skipped=int((~keep).sum()),
                                 tolerance=tol, passed=bool(err <= tol))


def chain_rule_check(theta: Callable, theta_prime: Callable, field: ScalarField, points,
                     tol: float = 1e-5, exclusion: float = 1e-3) -> DerivativeCheckReport:
    """grad(theta o phi) by differencing the composition vs (theta' o phi) grad phi."""
    Y, _ = as_batch(points)
    keep = _checkable(field, Y, exclusion)
    Yk = Y[keep]
    lhs = fd_gradient(lambda Z: theta(field.value(Z)), Yk)
    rhs = theta_prime(field.value(Yk))[:, None] * field.grad(Yk)
    err = _rel_error(rhs, lhs)
    return DerivativeCheckReport(label=f"theta o {field.label}", kind="chain_rule", max_rel_error=err,
                                 points_checked=int(keep.sum()), points_skipped=int((~keep).sum()),
                                 tolerance=tol, passed=bool(err <= tol))


def modulus_rule_check(field: ScalarField, points, tol: float = 1e-5,
                       band: float = CheckConfig.SINGULAR_EXCLUSION) -> DerivativeCheckReport:
    """grad|u| = sign(u) grad u at points where u keeps one sign across the difference stencil."""
    Y, _ = as_batch(points)
    h = EngineConfig.FD_STEP
    u = field.value(Y)
    keep = (np.abs(u) > band) & _checkable(field, Y, 0.0)
    for k in range(Y.shape[1]):
        step = np.zeros(Y.shape[1])
        step[k] = h
        keep &= (np.sign(field.value(Y + step)) == np.sign(u)) & (np.sign(field.value(Y - step)) == np.sign(u))
    Yk = Y[keep]
    lhs = fd_gradient(lambda Z: np.abs(field.value(Z)), Yk)
    rhs = np.sign(field.value(Yk))[:, None] * field.grad(Yk)
    err = _rel_error(rhs, lhs)
    return DerivativeCheckReport(label=f"|{field.label}|", kind="modulus_rule", max_rel_error=err,
                                 points_checked=int(keep.sum()), points_skipped=int((~keep).sum()),
                                 tolerance=tol, passed=bool(err <= tol))


def product_rule_check(f: ScalarField, g: ScalarField, points, tol: float = 1e-5,
                       exclusion: float = 1e-3) -> DerivativeCheckReport:
    Y, _ = as_batch(points)
    keep = _checkable(f, Y, exclusion) & _checkable(g, Y, exclusion)
    Yk = Y[keep]
    lhs = fd_gradient(lambda Z: f.value(Z) * g.value(Z), Yk)
    rhs = f.value(Yk)[:, None] * g.grad(Yk) + g.value(Yk)[:, None] * f.grad(Yk)
    err = _rel_error(rhs, lhs)
    return DerivativeCheckReport(label=f"({f.label})*({g.label})", kind="product_rule", max_rel_error=err,
                                 points_checked=int(keep.sum()), points_skipped=int((~keep).sum()),
                                 tolerance=tol, passed=bool(err <= tol))


def grad_H(field: ScalarField, p):
    return field.grad(p)
