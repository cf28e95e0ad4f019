"""
Weighted Gaussian Sobolev Calculus - Configuration

Every numerical knob of the engine lives here:
- Quadrature and Monte Carlo budgets (GH caps, MC block size, workers)
- Finite-difference step for derivative cross-checks
- Identity-check tolerances (3-sigma rule, absolute floor, doubling screen)
- Output locations for ledgers, JSON details and run logs

Override any value via environment variables or a .env file.
"""

import os
from dotenv import load_dotenv

load_dotenv()


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(name, str(default)))


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(name, str(default)))


# ============================================================
# Engine Configuration
#
# All computation happens in whitened coordinates; these limits
# keep desk-scale runs inside laptop memory and time.
# ============================================================

class EngineConfig:

    # --- Finite differences (central, whitened coordinates) ---
    FD_STEP = _env_float("WGSC_FD_STEP", 1e-5)
    FD_HESSIAN_STEP = _env_float("WGSC_FD_HESSIAN_STEP", 1e-4)

    # --- Tensor Gauss-Hermite (probabilists' convention) ---
    GH_MAX_DIM = _env_int("WGSC_GH_MAX_DIM", 8)
    GH_MAX_NODES_PER_DIM = _env_int("WGSC_GH_MAX_NODES", 20)
    GH_DEFAULT_NODES = _env_int("WGSC_GH_NODES", 20)
    GH_MAX_TOTAL_NODES = _env_int("WGSC_GH_MAX_TOTAL_NODES", 4_000_000)

    # --- Deterministic region / surface rules ---
    HALF_SPACE_NORMAL_NODES = _env_int("WGSC_HALF_SPACE_NODES", 96)
    HALF_SPACE_DEPTH = _env_float("WGSC_HALF_SPACE_DEPTH", 12.0)
    POLAR_RADIAL_NODES = _env_int("WGSC_POLAR_RADIAL_NODES", 48)
    POLAR_ANGULAR_NODES = _env_int("WGSC_POLAR_ANGULAR_NODES", 32)
    POLAR_MAX_DIM = _env_int("WGSC_POLAR_MAX_DIM", 5)

    # --- Monte Carlo ---
    MC_MIN_BUDGET = _env_int("WGSC_MC_MIN_BUDGET", 1000)
    MC_DEFAULT_BUDGET = _env_int("WGSC_MC_BUDGET", 1_000_000)
    MC_BLOCK_SIZE = _env_int("WGSC_MC_BLOCK_SIZE", 65_536)
    WORKERS = _env_int("WGSC_WORKERS", 1)
    DEFAULT_SEED = _env_int("WGSC_SEED", 20240101)

    # --- Sup-norm weight on KL paths ---
    SUP_NORM_MIN_GRID = 64


# ============================================================
# Identity-check tolerances
#
# |LHS - RHS| <= SIGMA_MULTIPLIER * sqrt(se_L^2 + se_R^2), floored.
# ============================================================

class CheckConfig:
    SIGMA_MULTIPLIER = _env_float("WGSC_SIGMAS", 3.0)
    ABS_FLOOR = _env_float("WGSC_ABS_FLOOR", 1e-9)

    # Divergence screen: budget doubling + single-sample dominance
    DOUBLING_SIGMAS = _env_float("WGSC_DOUBLING_SIGMAS", 5.0)
    MAX_TERM_FRACTION = _env_float("WGSC_MAX_TERM_FRACTION", 0.05)
    HEAVY_TAIL_RATIO = _env_float("WGSC_HEAVY_TAIL_RATIO", 1e3)

    # Surfaces
    SURFACE_DELTA = _env_float("WGSC_SURFACE_DELTA", 0.1)
    SHELL_LADDER = (1.0, 0.5, 0.25, 0.125)
    BAND_MIN_HITS = _env_int("WGSC_BAND_MIN_HITS", 1000)
    SINGULAR_EXCLUSION = 1e-8
    # Deterministic volume vs deterministic surface rule
    SURFACE_FLOOR = _env_float("WGSC_SURFACE_FLOOR", 1e-6)
    GRADIENT_UNDERFLOW = 1e-12

    # Fernique-type alpha
    FERNIQUE_MARGIN = _env_float("WGSC_FERNIQUE_MARGIN", 0.1)
    FERNIQUE_MIN_C = _env_float("WGSC_FERNIQUE_MIN_C", 0.55)
    FERNIQUE_TAU_QUANTILE = _env_float("WGSC_FERNIQUE_QUANTILE", 0.75)
    FERNIQUE_ALPHA_MAX = _env_float("WGSC_FERNIQUE_ALPHA_MAX", 10.0)


# ============================================================
# Output Configuration
# ============================================================

class OutputConfig:
    LEDGER_NAME = os.getenv("WGSC_LEDGER_NAME", "ledger.csv")
    LOG_NAME = "run.log"
    LEDGER_COLUMNS = ("identity_id", "anchor", "lhs", "lhs_se", "rhs", "rhs_se", "delta", "tol", "pass")
