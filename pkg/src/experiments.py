"""
Runners behind the CLI subcommands.

Each runner takes a RunContext (validated config, output directory, thread cap)
and writes its CSV files there. Markets are numbered 0 (unshocked) and i for a
1bp shock of quote i; all markets share one GaussianNoise.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from src.curve import YieldCurve, bootstrap, shocked_curve
from src.errors import ConfigError
from src.excel_report import create_tables_workbook
from src.exposure import (
    build_surrogates, ee_approx, ee_exact, ee_rel_error, node_plan, option_nodes, select_node_count,
)
from src.hullwhite import GaussianNoise, HullWhiteModel, PathSet, simulate
from src.interp import evaluate
from src.log import log_event, timed
from src.models import HazardModel, Portfolio, RunConfig, ShockSpec
from src.outputs import write_csv, write_resolved_config, write_summary
from src.products import ExerciseBoundary, PortfolioValuator, european_value, exercise_state, lsmc_boundary
from src.schedule import monitoring_grid
from src.schemas import CVA_COLUMNS, REL_ERR_COLUMNS, SENS_COLUMNS
from src.sensitivity import (
    bound_diagnostics, build_differences, cost_report, integrated_error, max_rel_error, psi_exact,
    psi_full_order, psi_low_order, rel_error_profile,
)
from src.xva import CvaEstimate, cva_independent, cva_wwr, simulate_hazard, survival_curve


@dataclass
class Market:
    index: int
    curve: YieldCurve
    model: HullWhiteModel
    paths: PathSet
    valuator: PortfolioValuator
    boundary: Optional[ExerciseBoundary] = None
    exercised: Optional[np.ndarray] = None


@dataclass
class RunContext:
    config: RunConfig
    out_dir: Path
    threads: int = 1
    dump_paths: bool = False
    started: float = field(default_factory=time.perf_counter)

    @property
    def shocks(self) -> List[int]:
        return self.config.shock_list()

    @property
    def settings(self):
        return self.config.collocation


@dataclass
class Scenario:
    portfolio: Portfolio
    grid: np.ndarray
    noise: GaussianNoise
    markets: List[Market]

    @property
    def base(self) -> Market:
        return self.markets[0]

    @property
    def exercised(self) -> Optional[List[np.ndarray]]:
        if self.base.exercised is None:
            return None
        return [m.exercised for m in self.markets]


def build_curves(config: RunConfig, shocks: List[int]) -> List[YieldCurve]:
    instruments = config.curve.instruments
    extrapolate = config.curve.extrapolate
    curves = [bootstrap(instruments, extrapolate=extrapolate)]
    for i in shocks:
        curves.append(shocked_curve(instruments, ShockSpec(index=i, shift=config.shift), extrapolate=extrapolate))
    return curves


def resolve_portfolio(config: RunConfig, curve: YieldCurve) -> Portfolio:
    raw = config.portfolio.load()
    portfolio = raw.resolve_par(curve.par_swap_rate)
    for before, after in zip(raw.swaps, portfolio.swaps):
        if before.fixed_rate == "par":
            log_event(action="resolve_par", status="ok", maturity=after.maturity, fixed_rate=after.rate)
    if raw.bermudan is not None and raw.bermudan.underlying.fixed_rate == "par":
        log_event(action="resolve_par", status="ok", instrument="bermudan",
                  fixed_rate=portfolio.bermudan.underlying.rate)
    return portfolio


def setup(ctx: RunContext, shocks: Optional[List[int]] = None) -> Scenario:
    config = ctx.config
    shocks = ctx.shocks if shocks is None else shocks
    curves = build_curves(config, shocks)
    portfolio = resolve_portfolio(config, curves[0])
    extra = portfolio.bermudan.exercise_dates if portfolio.bermudan is not None else ()
    horizon = config.grid.horizon or portfolio.horizon
    grid = monitoring_grid(horizon, config.grid.dates_per_year, t0=curves[0].t0, extra_dates=extra)
    noise = GaussianNoise.generate(config.seed, config.paths, grid.size - 1)
    log_event(action="setup", status="ok", dates=int(grid.size), paths=config.paths, markets=len(curves))

    markets = []
    for curve in curves:
        with timed("simulate", market=curve.market):
            model = HullWhiteModel(config.model, curve)
            paths = simulate(model, grid, config.paths, noise)
        boundary = exercised = None
        if portfolio.bermudan is not None:
            with timed("lsmc_boundary", market=curve.market):
                boundary = lsmc_boundary(model, portfolio.bermudan, paths, config.lsmc.basis_degree)
            exercised = exercise_state(paths, boundary)
        valuator = PortfolioValuator(model, portfolio, boundary, config.lsmc.inner_paths, config.seed)
        markets.append(Market(curve.market, curve, model, paths, valuator, boundary, exercised))
        if ctx.dump_paths:
            write_csv(paths.to_frame(), ctx.out_dir, f"paths_market_{curve.market}.csv")
    return Scenario(portfolio, grid, noise, markets)


def _floor(ctx: RunContext, portfolio: Portfolio) -> float:
    return ctx.config.diagnostics.ee_floor * portfolio.total_notional


def _exposure(ctx: RunContext, scenario: Scenario, n: int):
    base = scenario.base
    plan = node_plan(base.model, scenario.grid, n, ctx.settings, base.boundary)
    surrogates = build_surrogates(base.valuator, plan, ctx.threads)
    exact = ee_exact(base.paths, base.valuator, base.exercised, ctx.threads)
    approx = ee_approx(base.paths, surrogates, base.exercised, ctx.threads)
    eps = ee_rel_error(exact, approx, _floor(ctx, scenario.portfolio))
    log_event(action="ee", status="ok", N=n, eps_ee=eps, extrapolated=int(approx.extrapolations.sum()))
    return exact, approx, eps


def _sweep(ctx: RunContext, scenario: Scenario, exact) -> pd.DataFrame:
    candidates = ctx.settings.node_sweep or [ctx.config.nodes]
    base = scenario.base
    chosen, sweep = select_node_count(base.paths, base.valuator, exact, candidates, ctx.settings,
                                      _floor(ctx, scenario.portfolio), base.exercised, base.boundary, ctx.threads)
    log_event(action="node_selection", status="ok" if chosen is not None else "warning", chosen=chosen,
              warning=None if chosen is not None else "no candidate N reaches the eps_EE threshold")
    return sweep


@dataclass
class SensitivityRun:
    exact: object
    full: object
    lows: Dict[int, object]
    plans: list
    surrogates: list


def _sensitivities(ctx: RunContext, scenario: Scenario, n: int, orders: List[int], exact=None) -> SensitivityRun:
    markets = scenario.markets
    paths = [m.paths for m in markets]
    exercised = scenario.exercised
    shift = ctx.config.shift
    if exact is None:
        with timed("psi_exact", markets=len(markets)):
            exact = psi_exact(paths, [m.valuator for m in markets], shift, exercised, ctx.threads)
    plans = [node_plan(m.model, scenario.grid, n, ctx.settings, m.boundary) for m in markets]
    with timed("psi_full_order", N=n):
        surrogates = [build_surrogates(m.valuator, plan, ctx.threads) for m, plan in zip(markets, plans)]
        full = psi_full_order(paths, surrogates, shift, exercised, ctx.threads)
    lows = {}
    for d in orders:
        with timed("psi_low_order", N=n, d=d):
            differences = [build_differences(surrogates[0], m.valuator, plan, d, ctx.threads)
                           for m, plan in zip(markets[1:], plans[1:])]
            lows[d] = psi_low_order(paths, surrogates[0], differences, shift, exercised, ctx.threads)
    return SensitivityRun(exact, full, lows, plans, surrogates)


def _sens_frame(run: SensitivityRun) -> pd.DataFrame:
    frames = []
    exact, full = run.exact, run.full
    orders = sorted(run.lows) or [None]
    for d in orders:
        low = run.lows[d].values if d is not None else np.full(exact.values.shape, np.nan)
        k, j = np.meshgrid(np.arange(exact.grid.size), np.arange(len(exact.shocks)), indexing="ij")
        frames.append(pd.DataFrame({
            SENS_COLUMNS[0]: exact.grid[k.ravel()],
            SENS_COLUMNS[1]: np.asarray(exact.shocks)[j.ravel()],
            SENS_COLUMNS[2]: d if d is not None else np.nan,
            SENS_COLUMNS[3]: exact.values.ravel(),
            SENS_COLUMNS[4]: full.values.ravel(),
            SENS_COLUMNS[5]: low.ravel(),
        }))
    return pd.concat(frames, ignore_index=True)


def _rel_err_frame(candidates, exact, floor_ratio) -> pd.DataFrame:
    frames = []
    for profile in candidates:
        rel = rel_error_profile(profile, exact, floor_ratio)
        k, j = np.meshgrid(np.arange(exact.grid.size), np.arange(len(exact.shocks)), indexing="ij")
        frames.append(pd.DataFrame({
            REL_ERR_COLUMNS[0]: exact.grid[k.ravel()],
            REL_ERR_COLUMNS[1]: np.asarray(exact.shocks)[j.ravel()],
            REL_ERR_COLUMNS[2]: profile.tag,
            REL_ERR_COLUMNS[3]: rel.ravel(),
        }))
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=REL_ERR_COLUMNS)


def _require_shocks(ctx: RunContext):
    if not ctx.shocks:
        raise ConfigError("sensitivity runs need at least one shocked quote")


def run_bootstrap(ctx: RunContext) -> Dict:
    curves = build_curves(ctx.config, ctx.shocks)
    write_csv(curves[0].to_frame(), ctx.out_dir, "curve.csv")
    for curve in curves[1:]:
        write_csv(curve.to_frame(), ctx.out_dir, f"curve_shock_{curve.market}.csv")
    return {"markets": len(curves), "curve_end": curves[0].end}


def run_ee(ctx: RunContext) -> Dict:
    scenario = setup(ctx, shocks=[])
    exact, approx, eps = _exposure(ctx, scenario, ctx.config.nodes)
    write_csv(exact.to_frame(approx, _floor(ctx, scenario.portfolio)), ctx.out_dir, "ee.csv")
    write_csv(_sweep(ctx, scenario, exact), ctx.out_dir, "ee_errors.csv")
    return {"eps_ee": eps, "N": ctx.config.nodes}


def run_sens(ctx: RunContext) -> Dict:
    _require_shocks(ctx)
    config = ctx.config
    scenario = setup(ctx)
    run = _sensitivities(ctx, scenario, config.nodes, config.low_orders)
    floor_ratio = config.diagnostics.rel_error_floor
    write_csv(_sens_frame(run), ctx.out_dir, "sens.csv")
    write_csv(_rel_err_frame([run.full] + [run.lows[d] for d in sorted(run.lows)], run.exact, floor_ratio),
              ctx.out_dir, "rel_err.csv")

    summary = {
        "N": config.nodes,
        "paths": config.paths,
        "max_rel_err_full": max_rel_error(run.full, run.exact, floor_ratio),
        "valuations_exact": run.exact.valuations_per_date,
        "valuations_full": run.full.valuations_per_date,
    }
    for d, low in sorted(run.lows.items()):
        summary[f"max_rel_err_low_d{d}"] = max_rel_error(low, run.exact, floor_ratio)
        summary[f"valuations_low_d{d}"] = low.valuations_per_date

    budget = ctx.settings.budget_nodes
    if budget:
        smaller = [_sensitivities(ctx, scenario, n, [], run.exact).full for n in budget]
        frame = _rel_err_frame(smaller + [run.lows[d] for d in sorted(run.lows)], run.exact, floor_ratio)
        write_csv(frame, ctx.out_dir, "budget.csv")
        for profile in smaller:
            summary[f"max_rel_err_{profile.tag}"] = max_rel_error(profile, run.exact, floor_ratio)

    if config.diagnostics.bounds and run.lows:
        paths = [m.paths for m in scenario.markets]
        frames = [bound_diagnostics(paths, [m.valuator for m in scenario.markets], run.surrogates, run.plans,
                                    run.exact, low, scenario.exercised, ctx.threads)
                  for _, low in sorted(run.lows.items())]
        bounds = pd.concat(frames, ignore_index=True)
        write_csv(bounds, ctx.out_dir, "bounds.csv")
        summary["bound_violations"] = int((~bounds["holds"]).sum())

    _, _, eps = _exposure(ctx, scenario, config.nodes)
    summary["eps_ee"] = eps
    write_summary(summary, ctx.out_dir)
    log_event(action="sens_summary", status="ok", **summary)
    return summary


def run_bermudan(ctx: RunContext) -> Dict:
    config = ctx.config
    if config.portfolio.bermudan is None:
        raise ConfigError("the bermudan run needs a portfolio.bermudan section")
    scenario = setup(ctx)
    base = scenario.base
    write_csv(base.boundary.to_frame(), ctx.out_dir, "boundary.csv")
    dump_date = config.lsmc.node_dump_date
    write_csv(option_nodes(base.model, base.boundary, dump_date, config.nodes, ctx.settings).to_frame(),
              ctx.out_dir, "nodes.csv")

    exact_ee, approx_ee, eps = _exposure(ctx, scenario, config.nodes)
    write_csv(exact_ee.to_frame(approx_ee, _floor(ctx, scenario.portfolio)), ctx.out_dir, "ee.csv")

    bermudan = scenario.portfolio.bermudan
    europeans = [european_value(base.model, bermudan, base.paths, k)[0] for k in range(len(bermudan.exercise_dates))]
    lsmc_value = base.boundary.training_value
    summary = {
        "N": config.nodes,
        "eps_ee": eps,
        "lsmc_value": lsmc_value,
        "max_european": max(europeans),
        "dominates_european": bool(lsmc_value >= max(europeans)),
    }
    if not summary["dominates_european"]:
        log_event(action="bermudan_value", status="warning", lsmc_value=lsmc_value, max_european=max(europeans),
                  warning="LSMC Bermudan value below the best single-date European value")
    if ctx.shocks:
        run = _sensitivities(ctx, scenario, config.nodes, config.low_orders)
        write_csv(_sens_frame(run), ctx.out_dir, "sens.csv")
        # entries below the relative-error floor carry no sign information
        scale = float(np.max(np.abs(run.exact.values))) if run.exact.values.size else 0.0
        material = np.abs(run.exact.values) >= config.diagnostics.rel_error_floor * scale
        for d, low in sorted(run.lows.items()):
            consistent = bool((np.sign(low.values) == np.sign(run.full.values))[material].all())
            summary[f"sign_consistent_low_d{d}"] = consistent
            if not consistent:
                log_event(action="bermudan_sensitivity", status="warning", d=d,
                          warning=f"low-order d={d} and full-order sensitivities disagree in sign")
        summary["finite"] = bool(np.all(np.isfinite(run.full.values)))
    write_summary(summary, ctx.out_dir)
    log_event(action="bermudan_summary", status="ok", **summary)
    return summary


def run_cva(ctx: RunContext) -> Dict:
    config = ctx.config
    hazard = config.hazard or HazardModel()
    scenario = setup(ctx, shocks=[])
    base = scenario.base
    grid = scenario.grid
    exact, approx, _ = _exposure(ctx, scenario, config.nodes)
    hazard_paths = simulate_hazard(hazard, base.paths, scenario.noise, config.seed)
    independent = cva_independent(exact, survival_curve(hazard_paths), hazard.lgd)

    def state(k):
        return None if base.exercised is None else base.exercised[:, k]

    plan = node_plan(base.model, grid, config.nodes, ctx.settings, base.boundary)
    surrogates = build_surrogates(base.valuator, plan, ctx.threads)
    estimates = [
        CvaEstimate("independent", independent, float("nan")),
        cva_wwr(base.paths, hazard_paths, lambda k: base.valuator(grid[k], base.paths.rates[:, k], state(k)),
                hazard.lgd, "wwr_exact"),
        cva_wwr(base.paths, hazard_paths, lambda k: evaluate(surrogates[k], base.paths.rates[:, k], state(k)),
                hazard.lgd, "wwr_surrogate"),
    ]
    frame = pd.DataFrame([(e.method, e.value, e.std_error) for e in estimates], columns=CVA_COLUMNS)
    write_csv(frame, ctx.out_dir, "cva.csv")
    return {e.method: e.value for e in estimates}


def run_tables(ctx: RunContext) -> Dict:
    _require_shocks(ctx)
    config = ctx.config
    scenario = setup(ctx)
    run = _sensitivities(ctx, scenario, config.nodes, config.low_orders)
    tenors = [f"T{config.curve.instruments[i - 1].maturity:g}" for i in run.exact.shocks]
    rows = []
    for d, low in sorted(run.lows.items()):
        _, kappa = integrated_error(low, run.exact)
        rows.append([d] + list(kappa))
    kappa = pd.DataFrame(rows, columns=["d"] + tenors)
    cost = cost_report([run.exact, run.full] + [run.lows[d] for d in sorted(run.lows)])
    exact_ee, _, eps = _exposure(ctx, scenario, config.nodes)
    sweep = _sweep(ctx, scenario, exact_ee)

    write_csv(kappa, ctx.out_dir, "kappa.csv")
    write_csv(cost, ctx.out_dir, "cost.csv")
    write_csv(sweep, ctx.out_dir, "ee_errors.csv")
    settings = {"paths": config.paths, "N": config.nodes, "shocks": len(run.exact.shocks),
                "dates": int(scenario.grid.size), "seed": config.seed}
    create_tables_workbook(kappa, cost, sweep, ctx.out_dir, settings)
    return {"eps_ee": eps, "orders": sorted(run.lows)}


RUNNERS = {
    "bootstrap": run_bootstrap,
    "ee": run_ee,
    "sens": run_sens,
    "bermudan": run_bermudan,
    "cva": run_cva,
    "tables": run_tables,
}


def run(ctx: RunContext, experiment: Optional[str] = None) -> Dict:
    name = experiment or ctx.config.experiment
    if name not in RUNNERS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(RUNNERS)}")
    write_resolved_config(ctx.config, ctx.out_dir)
    with timed(name, out=str(ctx.out_dir), threads=ctx.threads):
        result = RUNNERS[name](ctx)
    log_event(action="run_finished", status="ok", experiment=name,
              duration_ms=round((time.perf_counter() - ctx.started) * 1000.0, 3))
    return result
