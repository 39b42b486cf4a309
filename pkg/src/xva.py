"""
Unilateral CVA with and without wrong-way risk.

CVA_1 = LGD * sum_k EE(t_k) * (S(t_{k-1}) - S(t_k)) takes exposure and default as
independent. CVA_2 integrates DF * exp(-int y) * y * V+ pathwise, with a
square-root hazard intensity y correlated to the short-rate driver.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

from src.errors import InvalidInputError
from src.exposure import ExposureProfile
from src.hullwhite import GaussianNoise, PathSet
from src.log import log_event
from src.models import HazardModel

# Second key of the hazard noise stream; the first is the run seed
HAZARD_STREAM = 7


@dataclass(frozen=True)
class HazardPaths:
    grid: np.ndarray
    intensity: np.ndarray
    integrated: np.ndarray
    lgd: float
    correlation: float

    @property
    def survival(self) -> np.ndarray:
        return np.exp(-self.integrated)


@dataclass(frozen=True)
class CvaEstimate:
    method: str
    value: float
    std_error: float


def simulate_hazard(hazard: HazardModel, pathset: PathSet, noise: GaussianNoise, seed: int) -> HazardPaths:
    """Full-truncation Euler for dy = k(ybar - y)dt + eta sqrt(y) dW_y on the exposure grid."""
    if noise.draws.shape[:2] != (pathset.paths, pathset.grid.size - 1):
        raise InvalidInputError("hazard noise must be the noise that drove the rate paths")
    rho = hazard.correlation
    own = np.random.Generator(np.random.PCG64([seed, HAZARD_STREAM])).standard_normal(
        (pathset.paths, pathset.grid.size - 1))
    y = np.full(pathset.paths, hazard.initial)
    intensity = np.empty(pathset.rates.shape)
    intensity[:, 0] = max(hazard.initial, 0.0)
    for k in range(pathset.grid.size - 1):
        h = pathset.grid[k + 1] - pathset.grid[k]
        z = rho * noise.draws[:, k, 0] + np.sqrt(1.0 - rho * rho) * own[:, k]
        pos = np.maximum(y, 0.0)
        y = y + hazard.mean_reversion * (hazard.level - pos) * h + hazard.volatility * np.sqrt(pos * h) * z
        intensity[:, k + 1] = np.maximum(y, 0.0)
    integrated = np.zeros(pathset.rates.shape)
    integrated[:, 1:] = np.cumsum(0.5 * (intensity[:, 1:] + intensity[:, :-1]) * np.diff(pathset.grid), axis=1)
    return HazardPaths(grid=pathset.grid, intensity=intensity, integrated=integrated,
                       lgd=hazard.lgd, correlation=rho)


def survival_curve(hazard_paths: HazardPaths) -> np.ndarray:
    return hazard_paths.survival.mean(axis=0)


def cva_independent(ee: ExposureProfile, survival: np.ndarray, lgd: float) -> float:
    survival = np.asarray(survival, dtype=float)
    if survival.shape != ee.grid.shape:
        raise InvalidInputError(f"survival curve has {survival.size} dates, exposure {ee.grid.size}")
    if not 0 <= lgd <= 1:
        raise InvalidInputError(f"LGD must lie in [0, 1], got {lgd}")
    pd_increments = -np.diff(survival)
    if np.any(pd_increments < -1e-15):
        raise InvalidInputError("default probability increments must be non-negative")
    if pd_increments.sum() > 1 + 1e-12:
        raise InvalidInputError(f"default probabilities sum to {pd_increments.sum():.6f} > 1")
    return float(lgd * np.dot(ee.ee[1:], np.maximum(pd_increments, 0.0)))


def cva_wwr(pathset: PathSet, hazard_paths: HazardPaths, exposure: Callable[[int], np.ndarray],
            lgd: float, method: str = "wwr_exact") -> CvaEstimate:
    """
    LGD * int E[DF(s) exp(-int_0^s y) y(s) V+(s)] ds, trapezoid over the grid.

    exposure(k) returns portfolio values at date k for every path (exact or surrogate).
    """
    if not np.array_equal(pathset.grid, hazard_paths.grid):
        raise InvalidInputError("hazard and rate paths live on different grids")
    if not 0 <= lgd <= 1:
        raise InvalidInputError(f"LGD must lie in [0, 1], got {lgd}")
    density = np.empty(pathset.rates.shape)
    for k in range(pathset.grid.size):
        weight = hazard_paths.survival[:, k] * hazard_paths.intensity[:, k]
        density[:, k] = pathset.discount_factors(k) * weight * np.maximum(exposure(k), 0.0)
    pathwise = lgd * trapezoid(density, pathset.grid, axis=1)
    value = float(pathwise.mean())
    error = float(pathwise.std(ddof=1) / np.sqrt(pathwise.size)) if pathwise.size > 1 else float("nan")
    log_event(action="cva_wwr", status="ok", market=pathset.market, method=method,
              correlation=hazard_paths.correlation, value=value, std_error=error)
    return CvaEstimate(method=method, value=value, std_error=error)
