import numpy as np
import pytest

from src.errors import InvalidInputError
from src.exposure import ExposureProfile, build_surrogates, ee_exact, node_plan
from src.hullwhite import GaussianNoise, simulate
from src.interp import evaluate
from src.models import HazardModel
from src.products import PortfolioValuator
from src.xva import cva_independent, cva_wwr, simulate_hazard, survival_curve

from tests.conftest import SEED

PATHS = 1000


@pytest.fixture(scope="module")
def scenario(model, portfolio, grid):
    noise = GaussianNoise.generate(SEED, PATHS, grid.size - 1)
    paths = simulate(model, grid, PATHS, noise)
    valuator = PortfolioValuator(model, portfolio)
    return paths, noise, valuator


def exact_exposure(paths, valuator):
    return lambda k: valuator(paths.grid[k], paths.rates[:, k])


def flat_profile(value, grid):
    return ExposureProfile(grid=grid, ee=np.full(grid.size, value), method="exact",
                           valuations=np.ones(grid.size, dtype=np.int64),
                           extrapolations=np.zeros(grid.size, dtype=np.int64))


def test_independent_cva_trivial_cases():
    grid = np.array([0.0, 1.0, 2.0])
    survival = np.array([1.0, 0.9, 0.8])
    assert cva_independent(flat_profile(0.0, grid), survival, 0.6) == 0.0
    assert cva_independent(flat_profile(5.0, grid), survival, 0.0) == 0.0
    assert cva_independent(flat_profile(5.0, grid), survival, 0.5) == pytest.approx(0.5 * 5.0 * 0.2)


def test_independent_cva_rejects_bad_inputs():
    grid = np.array([0.0, 1.0, 2.0])
    with pytest.raises(InvalidInputError):
        cva_independent(flat_profile(1.0, grid), np.array([1.0, 0.8, 0.9]), 0.6)
    with pytest.raises(InvalidInputError):
        cva_independent(flat_profile(1.0, grid), np.array([1.0, 0.9]), 0.6)
    with pytest.raises(InvalidInputError):
        cva_independent(flat_profile(1.0, grid), np.array([1.0, 0.9, 0.8]), 1.5)


def test_deterministic_hazard(scenario):
    paths, noise, _ = scenario
    hazard = HazardModel(mean_reversion=0.5, level=0.03, volatility=0.0, initial=0.03)
    hp = simulate_hazard(hazard, paths, noise, SEED)
    np.testing.assert_allclose(hp.intensity, 0.03, rtol=1e-14)
    np.testing.assert_allclose(survival_curve(hp), np.exp(-0.03 * paths.grid), rtol=1e-12)


def test_hazard_stays_non_negative(scenario):
    paths, noise, _ = scenario
    hazard = HazardModel(mean_reversion=0.1, level=0.01, volatility=0.5, initial=0.01, correlation=0.8)
    hp = simulate_hazard(hazard, paths, noise, SEED)
    assert np.all(hp.intensity >= 0)
    assert np.all(np.diff(survival_curve(hp)) <= 0)


def test_zero_intensity_gives_zero_cva(scenario):
    paths, noise, valuator = scenario
    hazard = HazardModel(level=0.0, volatility=0.0, initial=0.0)
    hp = simulate_hazard(hazard, paths, noise, SEED)
    estimate = cva_wwr(paths, hp, exact_exposure(paths, valuator), hazard.lgd)
    assert estimate.value == 0.0


@pytest.mark.parametrize("volatility", [0.0, 0.5])
def test_uncorrelated_cva_agrees_with_independent_formula(scenario, volatility):
    paths, noise, valuator = scenario
    hazard = HazardModel(level=0.02, volatility=volatility, initial=0.02, correlation=0.0, lgd=0.6)
    hp = simulate_hazard(hazard, paths, noise, SEED)
    ee = ee_exact(paths, valuator)
    independent = cva_independent(ee, survival_curve(hp), hazard.lgd)
    pathwise = cva_wwr(paths, hp, exact_exposure(paths, valuator), hazard.lgd)
    assert independent > 0
    assert abs(pathwise.value - independent) <= 3 * pathwise.std_error


def test_surrogate_cva_matches_exact(scenario, model):
    paths, noise, valuator = scenario
    hazard = HazardModel(correlation=0.5)
    hp = simulate_hazard(hazard, paths, noise, SEED)
    surrogates = build_surrogates(valuator, node_plan(model, paths.grid, 7))
    exact = cva_wwr(paths, hp, exact_exposure(paths, valuator), hazard.lgd)
    approx = cva_wwr(paths, hp, lambda k: evaluate(surrogates[k], paths.rates[:, k]), hazard.lgd, "wwr_surrogate")
    assert approx.method == "wwr_surrogate"
    assert approx.value == pytest.approx(exact.value, rel=1e-3)
    assert exact.std_error > 0


def test_wrong_way_correlation_raises_payer_cva(scenario):
    paths, noise, valuator = scenario
    values = {}
    for rho in (-0.9, 0.9):
        hazard = HazardModel(volatility=0.2, correlation=rho)
        hp = simulate_hazard(hazard, paths, noise, SEED)
        values[rho] = cva_wwr(paths, hp, exact_exposure(paths, valuator), hazard.lgd).value
    assert values[0.9] > values[-0.9]


def test_hazard_needs_the_rate_noise(scenario):
    paths, _, _ = scenario
    with pytest.raises(InvalidInputError):
        simulate_hazard(HazardModel(), paths, GaussianNoise.generate(SEED, 10, 3), SEED)
