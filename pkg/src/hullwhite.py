"""
One-factor Hull-White short rate fitted to a YieldCurve.

The rate is split as r(t) = u(t) + psi(t): u is a zero-mean Ornstein-Uhlenbeck
process that does not depend on the curve, psi carries the whole term structure.
Paths are drawn from the exact joint transition of (u, integral of u), so there
is no time-stepping bias.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd

from src.curve import YieldCurve
from src.errors import InvalidInputError
from src.models import HWParams
from src.schemas import PATH_DUMP_COLUMNS

GL_POINTS = 16
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GL_POINTS)


@dataclass(frozen=True)
class GaussianNoise:
    """
    Standard normals of shape (paths, steps, 2).

    Filled row-major from one PCG64 stream, so path j always sees the same
    draws for a given (seed, steps) whatever the total path count.
    """
    seed: int
    draws: np.ndarray

    @classmethod
    def generate(cls, seed: int, paths: int, steps: int) -> "GaussianNoise":
        if paths < 1 or steps < 0:
            raise InvalidInputError(f"noise needs paths >= 1 and steps >= 0, got {paths}, {steps}")
        rng = np.random.Generator(np.random.PCG64(seed))
        return cls(seed=seed, draws=rng.standard_normal((paths, steps, 2)))

    @property
    def paths(self) -> int:
        return self.draws.shape[0]

    @property
    def steps(self) -> int:
        return self.draws.shape[1]


@dataclass(frozen=True)
class PathSet:
    grid: np.ndarray
    rates: np.ndarray
    integrals: np.ndarray
    seed: int
    market: int = 0

    @property
    def paths(self) -> int:
        return self.rates.shape[0]

    def discount_factor(self, j: int, k: int) -> float:
        return float(np.exp(-self.integrals[j, k]))

    def discount_factors(self, k: int) -> np.ndarray:
        return np.exp(-self.integrals[:, k])

    def to_frame(self) -> pd.DataFrame:
        m, n = self.rates.shape
        return pd.DataFrame({
            PATH_DUMP_COLUMNS[0]: np.repeat(np.arange(m), n),
            PATH_DUMP_COLUMNS[1]: np.tile(self.grid, m),
            PATH_DUMP_COLUMNS[2]: self.rates.ravel(),
            PATH_DUMP_COLUMNS[3]: self.integrals.ravel(),
        })


@dataclass(frozen=True)
class HullWhiteModel:
    params: HWParams
    curve: YieldCurve

    @property
    def lam(self) -> float:
        return self.params.mean_reversion

    @property
    def eta(self) -> float:
        return self.params.volatility

    @property
    def market(self) -> int:
        return self.curve.market

    @property
    def t0(self) -> float:
        return self.curve.t0

    @property
    def r0(self) -> float:
        return self.curve.instantaneous_forward(self.t0)

    def bond_b(self, tau):
        return -np.expm1(-self.lam * np.asarray(tau, dtype=float)) / self.lam

    def bond_variance(self, tau):
        """Variance of the integral of u over a horizon tau, started from u=0."""
        tau = np.asarray(tau, dtype=float)
        b = self.bond_b(tau)
        return (self.eta / self.lam) ** 2 * (tau - b - 0.5 * self.lam * b * b)

    def psi(self, t):
        t = np.asarray(t, dtype=float)
        b = self.bond_b(t - self.t0)
        out = self.curve.instantaneous_forward(t) + 0.5 * (self.eta * b) ** 2
        return float(out) if np.ndim(out) == 0 else out

    def integrated_psi(self, a: float, b: float) -> float:
        """Integral of psi over [a, b]; Gauss-Legendre on each piece between curve knots."""
        if b <= a:
            return 0.0
        knots = self.curve.times[(self.curve.times > a) & (self.curve.times < b)]
        edges = np.concatenate([[a], knots, [b]])
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            # forward is constant inside (lo, hi); sample strictly inside the piece
            x = lo + half * (_GL_NODES + 1.0)
            total += half * float(np.dot(_GL_WEIGHTS, self.psi(x)))
        return total

    def integrated_psi_closed(self, a: float, b: float) -> float:
        pa, pb = self.curve.log_discount(a), self.curve.log_discount(b)
        va, vb = self.bond_variance(a - self.t0), self.bond_variance(b - self.t0)
        return float(pa - pb + 0.5 * (vb - va))

    def marginal_law(self, t: float) -> Tuple[float, float]:
        tau = t - self.t0
        if tau < 0:
            raise InvalidInputError(f"marginal law requested before t0: {t}")
        u0 = self.r0 - self.psi(self.t0)
        mean = self.psi(t) + u0 * np.exp(-self.lam * tau)
        var = self.eta ** 2 * -np.expm1(-2.0 * self.lam * tau) / (2.0 * self.lam)
        return float(mean), float(var)

    def zcb_matrix(self, t: float, maturities, r) -> np.ndarray:
        """P(t, T) for every r (rows) and T (columns)."""
        maturities = np.atleast_1d(np.asarray(maturities, dtype=float))
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(maturities < t - 1e-12) or t < self.t0 - 1e-12:
            raise InvalidInputError(f"bond prices need t0 <= t <= T, got t={t}")
        tau = maturities - t
        log_a = (self.curve.log_discount(maturities) - self.curve.log_discount(t)
                 + 0.5 * (self.bond_variance(tau) - self.bond_variance(maturities - self.t0)
                          + self.bond_variance(t - self.t0)))
        x = r - self.psi(t)
        return np.exp(log_a[None, :] - np.outer(x, self.bond_b(tau)))

    def zcb_price(self, t: float, T: float, r):
        out = self.zcb_matrix(t, [T], r)[:, 0]
        return float(out[0]) if np.ndim(r) == 0 else out


def transition_moments(model: HullWhiteModel, h: float):
    lam, eta = model.lam, model.eta
    decay = np.exp(-lam * h)
    b = model.bond_b(h)
    var_u = eta ** 2 * -np.expm1(-2.0 * lam * h) / (2.0 * lam)
    var_i = model.bond_variance(h)
    cov = 0.5 * (eta * b) ** 2
    sd_u = np.sqrt(var_u)
    load = cov / sd_u if sd_u > 0 else 0.0
    resid = np.sqrt(max(var_i - load * load, 0.0))
    return decay, b, sd_u, load, resid


def simulate(model: HullWhiteModel, grid, paths: int, noise: GaussianNoise) -> PathSet:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or abs(grid[0] - model.t0) > 1e-14:
        raise InvalidInputError(f"grid must start at t0={model.t0}")
    if np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly increasing")
    if noise.draws.shape != (paths, grid.size - 1, 2):
        raise InvalidInputError(
            f"noise shape {noise.draws.shape} does not match ({paths}, {grid.size - 1}, 2)"
        )

    rates = np.empty((paths, grid.size))
    integrals = np.zeros((paths, grid.size))
    u = np.full(paths, model.r0 - model.psi(model.t0))
    rates[:, 0] = u + model.psi(grid[0])
    for k in range(grid.size - 1):
        h = grid[k + 1] - grid[k]
        decay, b, sd_u, load, resid = transition_moments(model, h)
        z1, z2 = noise.draws[:, k, 0], noise.draws[:, k, 1]
        int_u = u * b + load * z1 + resid * z2
        u = u * decay + sd_u * z1
        integrals[:, k + 1] = integrals[:, k] + int_u + model.integrated_psi(grid[k], grid[k + 1])
        rates[:, k + 1] = u + model.psi(grid[k + 1])
    return PathSet(grid=grid, rates=rates, integrals=integrals, seed=noise.seed, market=model.market)


def dpsi_dk(shocked: HullWhiteModel, base: HullWhiteModel, a: float, b: float) -> float:
    """
    (int psi_i - int psi) / dK over [a, b].

    With shared noise and unchanged lambda, eta, every shocked path differs from
    its unshocked twin only by psi, so DF_i = DF * exp(-dK * dpsi_dk).
    """
    if shocked.curve.shock is None or shocked.curve.shock.shift == 0:
        raise InvalidInputError("dpsi_dk needs a shocked model with a non-zero shift")
    if shocked.params != base.params:
        raise InvalidInputError("shocked and base models must share mean reversion and volatility")
    shift = shocked.curve.shock.shift
    return (shocked.integrated_psi(a, b) - base.integrated_psi(a, b)) / shift
