from pathlib import Path

import numpy as np
import pytest

from src.curve import bootstrap, shocked_curve
from src.hullwhite import GaussianNoise, HullWhiteModel, simulate
from src.models import HWParams, MarketInstrument, Portfolio, ShockSpec, Swap
from src.products import PortfolioValuator
from src.schedule import monitoring_grid

ROOT = Path(__file__).resolve().parents[1]
CONFIG_DIR = ROOT / "config"

QUOTES = [(1, 0.0004), (2, 0.0016), (3, 0.0031), (5, 0.0081),
          (7, 0.0128), (10, 0.0162), (20, 0.0222), (30, 0.0230)]
SEED = 20240101
SHIFT = 1e-4


@pytest.fixture(scope="session")
def instruments():
    return [MarketInstrument(index=i, maturity=T, quote=q) for i, (T, q) in enumerate(QUOTES, start=1)]


@pytest.fixture(scope="session")
def curve(instruments):
    return bootstrap(instruments)


@pytest.fixture(scope="session")
def params():
    return HWParams(mean_reversion=0.01, volatility=0.02)


@pytest.fixture(scope="session")
def model(params, curve):
    return HullWhiteModel(params, curve)


def shocked_model(instruments, params, index, shift=SHIFT):
    return HullWhiteModel(params, shocked_curve(instruments, ShockSpec(index=index, shift=shift)))


@pytest.fixture(scope="session")
def par_swap(curve):
    rate = curve.par_swap_rate(0.0, 20.0, 2.0)
    return Swap(sign=1, notional=10000, fixed_rate=rate, maturity=20.0, frequency=2.0)


@pytest.fixture(scope="session")
def portfolio(par_swap):
    return Portfolio(swaps=[par_swap])


@pytest.fixture(scope="session")
def grid():
    return monitoring_grid(20.0, 4)


@pytest.fixture(scope="session")
def small_paths(model, grid):
    """Unshocked paths, small enough for the default test run."""
    noise = GaussianNoise.generate(SEED, 2000, grid.size - 1)
    return simulate(model, grid, 2000, noise)


@pytest.fixture(scope="session")
def markets(instruments, params, model, portfolio):
    """
    Unshocked market plus shocks of the 3y, 20y and 30y quotes on semiannual dates.

    Returns (paths, valuators) lists in market order.
    """
    grid = monitoring_grid(20.0, 2)
    noise = GaussianNoise.generate(SEED, 1000, grid.size - 1)
    models = [model] + [shocked_model(instruments, params, i) for i in (3, 7, 8)]
    paths = [simulate(m, grid, 1000, noise) for m in models]
    valuators = [PortfolioValuator(m, portfolio) for m in models]
    return paths, valuators


def standard_normal_moments(order):
    m = np.zeros(order + 1)
    m[0] = 1.0
    for k in range(2, order + 1, 2):
        m[k] = m[k - 2] * (k - 1)
    return m
