import json

import numpy as np
import pandas as pd
import pytest

from src.main import main

from tests.test_main import write_config

pytestmark = pytest.mark.slow


def run(tmp_path, experiment, name, **overrides):
    tmp_path.mkdir(parents=True, exist_ok=True)
    out = tmp_path / experiment
    config = write_config(tmp_path, name=name, **overrides)
    assert main([experiment, "--config", str(config), "--out", str(out)]) == 0
    return out


def summary(out):
    return json.loads((out / "summary.json").read_text())


def sweep(out):
    frame = pd.read_csv(out / "ee_errors.csv")
    return dict(zip(frame["N"], frame["eps_ee"]))


def test_large_portfolio_ee_error_falls_with_nodes(tmp_path):
    eps = sweep(run(tmp_path, "ee", "large_portfolio.yml", nodes=9, collocation={"node_sweep": [9, 13]}))
    assert eps[9] < 7e-4
    assert eps[13] < 2e-4
    assert eps[13] <= eps[9]


def test_single_swap_sensitivities(tmp_path):
    result = summary(run(tmp_path, "sens", "config.yml", diagnostics={"bounds": True}))
    assert result["max_rel_err_full"] <= 5e-3
    assert result["max_rel_err_low_d6"] <= 1.5e-2
    assert result["max_rel_err_low_d5"] <= 0.1
    assert result["bound_violations"] == 0


def test_stressed_volatility_keeps_full_order_accuracy(tmp_path):
    base = summary(run(tmp_path / "base", "sens", "config.yml"))
    stressed = summary(run(tmp_path / "stressed", "sens", "stressed.yml"))
    assert stressed["eps_ee"] < 1e-4
    assert stressed["max_rel_err_full"] <= 2 * base["max_rel_err_full"]


def test_large_portfolio_integrated_errors(tmp_path):
    out = run(tmp_path, "tables", "large_portfolio.yml", low_orders=[6, 7, 8], collocation={"node_sweep": [13]})
    kappa = pd.read_csv(out / "kappa.csv").set_index("d")
    assert np.all(kappa.loc[7].to_numpy() < 1e-2)
    for d in (6, 7):
        assert np.all(kappa.loc[d + 1].to_numpy() <= 3 * kappa.loc[d].to_numpy())


def test_bermudan_exposure_error(tmp_path):
    eps = sweep(run(tmp_path, "ee", "bermudan.yml", collocation={"node_sweep": [15]}, lsmc={"inner_paths": 256}))
    assert eps[15] < 5e-4


def test_bermudan_sensitivities_are_finite_and_consistent(tmp_path):
    result = summary(run(tmp_path, "bermudan", "bermudan.yml", paths=4000))
    assert result["finite"]
    assert result["sign_consistent_low_d12"]
    assert result["sign_consistent_low_d13"]
    assert result["dominates_european"]
