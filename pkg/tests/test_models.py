import numpy as np
import pytest
import yaml
from pydantic import ValidationError

from src.errors import InvalidInputError
from src.models import BermudanSwaption, Portfolio, RunConfig, Swap, read_portfolio_csv
from src.schedule import date_index, monitoring_grid, payment_schedule, shock_index, shock_indices

from tests.conftest import CONFIG_DIR


@pytest.fixture(scope="module")
def raw_config():
    with open(CONFIG_DIR / "config.yml") as f:
        return yaml.safe_load(f)


def test_swap_validation():
    with pytest.raises(ValidationError):
        Swap(sign=2, notional=100, fixed_rate=0.01, maturity=5)
    with pytest.raises(ValidationError):
        Swap(sign=1, notional=100, fixed_rate=0.01, start=5, maturity=5)
    with pytest.raises(ValidationError):
        Swap(sign=1, notional=-1, fixed_rate=0.01, maturity=5)
    with pytest.raises(InvalidInputError):
        Swap(sign=1, notional=100, fixed_rate="par", maturity=5).rate


def test_par_resolution(curve):
    portfolio = Portfolio(swaps=[Swap(sign=1, notional=100, fixed_rate="par", maturity=10, frequency=2),
                                 Swap(sign=-1, notional=50, fixed_rate=0.01, maturity=5)])
    resolved = portfolio.resolve_par(curve.par_swap_rate)
    assert resolved.swaps[0].rate == pytest.approx(curve.par_swap_rate(0.0, 10.0, 2.0))
    assert resolved.swaps[1].rate == 0.01
    assert resolved.horizon == 10
    assert resolved.total_notional == 150


def test_empty_portfolio_rejected():
    with pytest.raises(ValidationError):
        Portfolio()


def test_bermudan_dates():
    underlying = Swap(sign=-1, notional=100, fixed_rate=0.02, maturity=10)
    with pytest.raises(ValidationError):
        BermudanSwaption(exercise_dates=[2.0, 1.0], underlying=underlying)
    with pytest.raises(ValidationError):
        BermudanSwaption(exercise_dates=[1.0, 10.0], underlying=underlying)
    option = BermudanSwaption(exercise_dates=[1.0, 2.0], underlying=underlying)
    assert Portfolio(bermudan=option).horizon == 10


def test_run_config_loads(raw_config):
    config = RunConfig.model_validate(raw_config)
    assert config.nodes == 7
    assert len(config.curve.instruments) == 8
    assert config.shock_list() == list(range(1, 9))
    assert config.portfolio.load().swaps[0].fixed_rate == "par"


@pytest.mark.parametrize("update", [
    {"nodes": 3, "low_orders": [5]},
    {"shift": 0.0},
    {"shock_tenors": [4.0]},
    {"low_orders": [0]},
])
def test_run_config_rejects(raw_config, update):
    with pytest.raises(ValidationError):
        RunConfig.model_validate({**raw_config, **update})


def test_shock_tenors_select_instruments(raw_config):
    config = RunConfig.model_validate({**raw_config, "shock_tenors": [10, 30]})
    assert config.shock_list() == [6, 8]
    assert shock_index([1, 2, 5], 5.0) == 3
    assert shock_indices([1, 2, 5], [2, 1]) == [2, 1]
    with pytest.raises(InvalidInputError):
        shock_index([1, 2, 5], 3.0)


def test_large_portfolio_csv():
    swaps = read_portfolio_csv(CONFIG_DIR / "portfolio_large.csv")
    assert len(swaps) == 13
    assert {s.sign for s in swaps} == {1, -1}
    assert max(s.maturity for s in swaps) <= 40


def test_payment_schedule():
    dates, accrual = payment_schedule(0.0, 21.0, 1.9)
    assert dates.size == 40
    assert dates[-1] == 21.0
    assert accrual == pytest.approx(21.0 / 40)
    dates, accrual = payment_schedule(2.0, 5.0, 2.0)
    np.testing.assert_allclose(dates, [2.5, 3.0, 3.5, 4.0, 4.5, 5.0])
    with pytest.raises(InvalidInputError):
        payment_schedule(5.0, 5.0, 1.0)


def test_monitoring_grid():
    grid = monitoring_grid(20.0, 4)
    assert grid.size == 81
    assert grid[0] == 0.0 and grid[-1] == 20.0
    extended = monitoring_grid(2.0, 1, extra_dates=[0.5, 1.0, 3.0])
    np.testing.assert_allclose(extended, [0.0, 0.5, 1.0, 2.0])
    assert date_index(extended, 0.5) == 1
    with pytest.raises(InvalidInputError):
        date_index(extended, 0.7)
