"""
Centered Gaussian measures on finite truncations.

Everything downstream works in whitened coordinates y (standard normal),
with the ambient point x = Q^{1/2} y. The covariance spectrum enters only
through whiten / unwhiten, ambient inner products and the basis e_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from config.settings import EngineConfig
from engine.errors import DimensionMismatchError, IndexOutOfRangeError
from models.schemas import GaussianModelSpec, SpectrumFamily, SpectrumFamilySpec


# ============================================================
# Spectra
# ============================================================

def spectrum_4_pow(n: int) -> np.ndarray:
    return 4.0 ** -np.arange(1, n + 1, dtype=float)


def spectrum_2_pow(n: int) -> np.ndarray:
    return 2.0 ** -np.arange(1, n + 1, dtype=float)


def spectrum_brownian_kl(n: int) -> np.ndarray:
    """Covariance eigenvalues of Brownian motion on [0, 1]: 4 / (pi^2 (2k-1)^2)."""
    k = np.arange(1, n + 1, dtype=float)
    return 4.0 / (math.pi ** 2 * (2.0 * k - 1.0) ** 2)


SPECTRUM_FAMILIES = {
    SpectrumFamily.POW4: spectrum_4_pow,
    SpectrumFamily.POW2: spectrum_2_pow,
    SpectrumFamily.BROWNIAN_KL: spectrum_brownian_kl,
}


# ============================================================
# Model
# ============================================================

@dataclass(frozen=True)
class GaussianModel:
    spectrum: tuple[float, ...]
    label: str = ""

    def __post_init__(self):
        spec = tuple(float(v) for v in self.spectrum)
        if not spec:
            raise DimensionMismatchError("spectrum must have at least one entry")
        if any(not math.isfinite(v) or v <= 0.0 for v in spec):
            raise ValueError(f"covariance spectrum must be finite and positive, got {spec}")
        object.__setattr__(self, "spectrum", spec)

    @property
    def dim(self) -> int:
        return len(self.spectrum)

    @property
    def lambdas(self) -> np.ndarray:
        return np.asarray(self.spectrum)

    @property
    def sqrt_lambdas(self) -> np.ndarray:
        return np.sqrt(self.lambdas)

    def check_points(self, points) -> np.ndarray:
        arr = np.asarray(points, dtype=float)
        if arr.shape[-1:] != (self.dim,):
            raise DimensionMismatchError(f"expected trailing dimension {self.dim}, got shape {arr.shape}")
        return arr

    def whiten(self, x) -> np.ndarray:
        return self.check_points(x) / self.sqrt_lambdas

    def unwhiten(self, y) -> np.ndarray:
        return self.check_points(y) * self.sqrt_lambdas

    def e_hat(self, k: int, points) -> np.ndarray:
        """ê_k in whitened coordinates is the k-th coordinate (1-based k)."""
        self.check_index(k)
        return self.check_points(points)[..., k - 1]

    def ambient_norm_sq(self, points) -> np.ndarray:
        """(x, x)_X = sum_i lambda_i y_i^2."""
        y = self.check_points(points)
        return np.sum(self.lambdas * y * y, axis=-1)

    def log_density(self, points) -> np.ndarray:
        y = self.check_points(points)
        return -0.5 * np.sum(y * y, axis=-1) - 0.5 * self.dim * math.log(2.0 * math.pi)

    def check_index(self, k: int):
        if not 1 <= k <= self.dim:
            raise IndexOutOfRangeError(f"basis index {k} outside 1..{self.dim}")

    def describe(self) -> dict:
        return {"label": self.label, "dim": self.dim, "spectrum": list(self.spectrum)}


def from_spec(spec: GaussianModelSpec) -> GaussianModel:
    if isinstance(spec.spectrum, SpectrumFamilySpec):
        lambdas = SPECTRUM_FAMILIES[spec.spectrum.family](spec.spectrum.n)
        label = spec.label or f"{spec.spectrum.family.value} (n={spec.spectrum.n})"
    else:
        lambdas = spec.spectrum
        label = spec.label
    return GaussianModel(tuple(lambdas), label=label)


def e_hat_ambient(model: GaussianModel, k: int, x) -> np.ndarray:
    """(x, v_k)_X / sqrt(lambda_k) from an ambient point."""
    model.check_index(k)
    x = model.check_points(x)
    return x[..., k - 1] / math.sqrt(model.spectrum[k - 1])


def gaussian_type_threshold(model: GaussianModel) -> float:
    """Largest eta with E exp(eta (x, x)) finite is 1 / (2 lambda_max), exclusive."""
    return 1.0 / (2.0 * max(model.spectrum))


# ============================================================
# Sampling
#
# The index space is cut into fixed-size blocks. Block b draws from
# SeedSequence(seed, spawn_key=stream + (b,)), i.e. the b-th spawned
# child, so the points do not depend on how blocks are scheduled.
# ============================================================

def block_layout(count: int, block_size: int | None = None) -> list[tuple[int, int]]:
    size = block_size or EngineConfig.MC_BLOCK_SIZE
    return [(start, min(size, count - start)) for start in range(0, count, size)]


def block_points(model: GaussianModel, seed: int, block: int, size: int,
                 stream: Sequence[int] = ()) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=tuple(stream) + (block,))
    return np.random.default_rng(ss).standard_normal((size, model.dim))


def iter_blocks(model: GaussianModel, count: int, seed: int, stream: Sequence[int] = (),
                block_size: int | None = None) -> Iterator[np.ndarray]:
    for b, (_, size) in enumerate(block_layout(count, block_size)):
        yield block_points(model, seed, b, size, stream)


def sample(model: GaussianModel, count: int, seed: int, stream: Sequence[int] = ()) -> np.ndarray:
    """i.i.d. standard-Gaussian points in whitened coordinates, shape (count, n)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return np.concatenate(list(iter_blocks(model, count, seed, stream)), axis=0)


def whiten(model: GaussianModel, x) -> np.ndarray:
    return model.whiten(x)


def unwhiten(model: GaussianModel, y) -> np.ndarray:
    return model.unwhiten(y)


def e_hat(model: GaussianModel, k: int, p) -> np.ndarray:
    return model.e_hat(k, p)
