"""
Weighted Gaussian Sobolev Calculus - Pydantic Models

Every JSON-facing object of the engine is validated here:
- Run-config specs (model, weight, surface, fields, suite)
- Integral estimates with error bars
- Identity / hypothesis / screening reports written to the ledger
"""

from __future__ import annotations
import math
from enum import Enum
from typing import Any, Literal, Optional, Union
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ============================================================
# Enums
# ============================================================

class Method(str, Enum):
    MC = "mc"
    GAUSS_HERMITE = "gauss_hermite"
    HALF_SPACE = "half_space"
    POLAR = "polar"
    EXACT_PARAM = "exact_param"
    SHELL = "shell"
    CLOSED_FORM = "closed_form"


class SpectrumFamily(str, Enum):
    POW4 = "4^-n"
    POW2 = "2^-n"
    BROWNIAN_KL = "brownian_kl"


# ============================================================
# Model / weight / surface / field specs (JSON config surface)
# ============================================================

class SpectrumFamilySpec(BaseModel):
    family: SpectrumFamily
    n: int = Field(ge=1)


class GaussianModelSpec(BaseModel):
    dim: Optional[int] = Field(default=None, ge=1, description="Truncation dimension n")
    spectrum: Union[list[float], SpectrumFamilySpec]
    label: str = ""

    @model_validator(mode="after")
    def _dim_matches(self):
        n = len(self.spectrum) if isinstance(self.spectrum, list) else self.spectrum.n
        if self.dim is not None and self.dim != n:
            raise ValueError(f"dim={self.dim} but spectrum has {n} entries")
        if isinstance(self.spectrum, list) and any(v <= 0 for v in self.spectrum):
            raise ValueError("covariance spectrum must be strictly positive")
        return self


class WeightSpec(BaseModel):
    kind: Literal["unit", "gaussian_type", "lq_norm", "sup_norm_kl", "square_norm"] = "unit"
    lam: float = Field(default=0.0, alias="lambda")
    q: float = Field(default=2.0, gt=1.0)
    scale: float = 1.0
    grid: int = Field(default=512, ge=64)
    s: float = Field(default=2.0, gt=1.0, description="Declared integrability exponent s")
    t: float = Field(default=3.0, gt=0.0, description="Declared integrability exponent t (log w)")

    model_config = ConfigDict(populate_by_name=True)


class FieldSpec(BaseModel):
    """A scalar field by registry name ("coordinate:1", "norm_q:1.5", "l2_norm",
    "sup_norm_kl:512", "constant:2") or by kind with parameters."""
    name: Optional[str] = None
    kind: Optional[Literal["polynomial", "bump", "constant", "coordinate", "linear"]] = None
    constant: float = 0.0
    linear: list[float] = Field(default_factory=list)
    quadratic: list[list[float]] = Field(default_factory=list)
    center: list[float] = Field(default_factory=list)
    width: float = Field(default=1.0, gt=0.0)
    amplitude: float = 1.0
    k: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _named_or_kind(self):
        if (self.name is None) == (self.kind is None):
            raise ValueError("give exactly one of 'name' or 'kind'")
        return self


class VectorFieldSpec(BaseModel):
    kind: Literal["constant", "basis", "gradient_of", "normalized_gradient_of", "polynomial", "zero"]
    vector: list[float] = Field(default_factory=list)
    k: int = Field(default=1, ge=1)
    field: Optional[FieldSpec] = None
    # polynomial: phi_i(y) = b_i + sum_j A_ij y_j + sum_j C_ij y_j^2
    offset: list[float] = Field(default_factory=list)
    linear: list[list[float]] = Field(default_factory=list)
    square: list[list[float]] = Field(default_factory=list)


class SurfaceSpec(BaseModel):
    kind: Literal["hyperplane", "sphere", "l2_path_sphere", "custom"]
    normal: list[float] = Field(default_factory=list)
    offset: float = 0.0
    radius: float = Field(default=1.0, gt=0.0)
    field: Optional[FieldSpec] = None
    delta: float = Field(default=0.1, gt=0.0)


class ToleranceSpec(BaseModel):
    sigmas: float = Field(default=3.0, gt=0.0)
    floor: float = Field(default=1e-9, ge=0.0)


class RunConfig(BaseModel):
    model: GaussianModelSpec
    weight: WeightSpec = Field(default_factory=WeightSpec)
    surface: Optional[SurfaceSpec] = None
    fields: dict[str, FieldSpec] = Field(default_factory=dict)
    vector_fields: dict[str, VectorFieldSpec] = Field(default_factory=dict)
    suite: list[str] = Field(min_length=1)
    method: Literal["auto", "mc", "gh"] = "auto"
    budget: int = Field(default=1_000_000, ge=1000)
    seed: int = 20240101
    workers: int = Field(default=1, ge=1)
    output: str = "./output"
    tolerance: ToleranceSpec = Field(default_factory=ToleranceSpec)
    params: dict[str, dict[str, Any]] = Field(default_factory=dict, description="Per-check overrides")

    @field_validator("suite")
    @classmethod
    def _no_duplicates(cls, v: list[str]) -> list[str]:
        if len(set(v)) != len(v):
            raise ValueError("suite lists a check id twice")
        return v


# ============================================================
# Estimates
# ============================================================

class IntegralEstimate(BaseModel):
    value: float
    stderr: float = Field(ge=0.0)
    method: Method
    n_eval: int = Field(ge=0)
    dropped: int = Field(default=0, ge=0)
    max_term_fraction: Optional[float] = None
    tail_ratio: Optional[float] = None
    warnings: list[str] = Field(default_factory=list)


class ShellRung(BaseModel):
    epsilon: float
    value: float
    stderr: float
    hits: int


class ShellEstimate(IntegralEstimate):
    ladder: list[ShellRung] = Field(default_factory=list)
    slope: float = 0.0
    epsilon_consistent: bool = True


class Comparison(BaseModel):
    abs_delta: float
    tolerance: float
    passed: bool


# ============================================================
# Reports
# ============================================================

class TraceReport(BaseModel):
    """One identity instance: both sides, |delta|, tolerance, verdict."""
    identity_id: str
    anchor: str = ""
    lhs: IntegralEstimate
    rhs: IntegralEstimate
    abs_delta: float
    tolerance: float
    passed: bool = False
    config: dict[str, Any] = Field(default_factory=dict)
    warnings: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _verdict_from_delta(self) -> "TraceReport":
        # passed is derived: abs_delta <= tolerance, nothing else
        if math.isnan(self.abs_delta):
            self.abs_delta = math.inf
        if self.lhs.dropped or self.rhs.dropped:
            self.abs_delta = math.inf
            note = f"{self.lhs.dropped + self.rhs.dropped} non-finite evaluations dropped"
            if note not in self.warnings:
                self.warnings.append(note)
        self.passed = bool(self.abs_delta <= self.tolerance)
        return self


class DerivativeCheckReport(BaseModel):
    label: str
    kind: Literal["gradient", "hessian", "symmetry", "chain_rule", "modulus_rule", "product_rule"]
    max_rel_error: float
    points_checked: int
    points_skipped: int = 0
    tolerance: float
    passed: bool


class MomentEstimate(BaseModel):
    name: str
    first: IntegralEstimate
    doubled: IntegralEstimate
    exact: Optional[float] = None
    diverging: bool
    dominated: bool = False
    reason: str = ""


class Hypothesis1Report(BaseModel):
    weight: str
    s: float
    t: float
    s_conj: float
    p_min: float
    moments: list[MomentEstimate]
    closed_form_ws: Optional[float] = None
    threshold: Optional[float] = None
    passed: bool
    warnings: list[str] = Field(default_factory=list)


class Hypothesis2Report(BaseModel):
    surface: str
    delta: float
    negative_side: IntegralEstimate
    moments: list[MomentEstimate]
    passed: bool
    warnings: list[str] = Field(default_factory=list)


class MonotonicityReport(BaseModel):
    surface: str
    coords_small: list[int]
    coords_large: list[int]
    rho_small: IntegralEstimate
    rho_large: IntegralEstimate
    passed: bool


class FerniqueResult(BaseModel):
    tau: float
    quantile: float
    c: float
    alpha: float
    clamped: bool
    p_hom: float


class ViolatingPoint(BaseModel):
    candidate_c: float
    point: list[float] = Field(description="Whitened coordinates")
    ambient_norm: float
    form_slack: float = Field(description="C|xi|^2 - Q(xi) at xi = (x, v_i); negative means violated")
    stated_bound: float = Field(description="(C-1)||x||^2 - 12, the closed-form region bound")
    rayleigh_max: float
    in_stated_region: bool
    in_search_region: bool


class Condition41Report(BaseModel):
    weight: str
    c_max_estimate: float
    c_exact: Optional[float] = None
    points_sampled: int
    violations: list[ViolatingPoint] = Field(default_factory=list)
    untested: list[float] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)


class EmbeddingBound(BaseModel):
    field: str
    p: float
    bound_lhs: float
    bound_rhs: float
    holds: bool


class EmbeddingReport(BaseModel):
    weight: str
    p: float
    r: float
    p_at_least_p_min: bool
    mu_to_nu: list[EmbeddingBound]
    nu_to_mu: list[EmbeddingBound]
    warnings: list[str] = Field(default_factory=list)


class TraceNormReport(BaseModel):
    surface: str
    q: float
    norm: IntegralEstimate


class LedgerRow(BaseModel):
    identity_id: str
    anchor: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    delta: float
    tol: float
    passed: bool = Field(serialization_alias="pass")


class TraceProductReport(BaseModel):
    surface: str
    fields: list[str]
    max_abs_error: float
    points_checked: int
    passed: bool


class TraceBoundReport(BaseModel):
    """Per-instance ratio ||Tr phi||_{L^q(w rho)} / ||phi||_{W^{1,p}(nu)}; no operator-norm claim."""
    surface: str
    field: str
    q: float
    p: float
    trace_norm: IntegralEstimate
    sobolev_norm: IntegralEstimate
    ratio: float
    warnings: list[str] = Field(default_factory=list)
