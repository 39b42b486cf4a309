"""
Expected positive exposure, by exact valuation and by collocation surrogates.

EE(t) = mean_j DF_j(t) * max(V(t, r_j(t)), 0). The surrogate variant swaps V for
a polynomial g fitted at a handful of nodes and applies the positive part after
evaluation.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.errors import InvalidInputError, MomentMatrixError, TruncationError, UndefinedMetricError
from src.hullwhite import HullWhiteModel, PathSet
from src.interp import (
    NodeSet, PiecewiseApprox, Surrogate, count_extrapolated, evaluate, fit, normal_nodes,
    propagated_truncated_nodes,
)
from src.log import log_event
from src.models import CollocationConfig
from src.products import ExerciseBoundary, PortfolioValuator
from src.schemas import EE_COLUMNS, EE_SWEEP_COLUMNS

EXACT = "exact"


@dataclass(frozen=True)
class ExposureProfile:
    grid: np.ndarray
    ee: np.ndarray
    method: str
    valuations: np.ndarray
    extrapolations: np.ndarray

    @property
    def valuations_per_date(self) -> int:
        return int(self.valuations.max()) if self.valuations.size else 0

    def to_frame(self, approx: Optional["ExposureProfile"] = None, floor: float = 1e-8) -> pd.DataFrame:
        other = approx.ee if approx is not None else np.full(self.ee.shape, np.nan)
        rel = relative_errors(self, approx, floor) if approx is not None else np.full(self.ee.shape, np.nan)
        return pd.DataFrame({
            EE_COLUMNS[0]: self.grid,
            EE_COLUMNS[1]: self.ee,
            EE_COLUMNS[2]: other,
            EE_COLUMNS[3]: rel,
        })


@dataclass(frozen=True)
class DateNodes:
    """Node sets at one monitoring date; `option` only for portfolios holding a Bermudan."""
    t: float
    plain: NodeSet
    option: Optional[NodeSet] = None
    tilted: bool = True


def map_dates(fn: Callable[[int], object], count: int, threads: int = 1) -> list:
    """fn(k) for k in range(count), in index order; thread results never depend on scheduling."""
    if threads <= 1 or count <= 1:
        return [fn(k) for k in range(count)]
    return Parallel(n_jobs=min(threads, count), prefer="threads")(delayed(fn)(k) for k in range(count))


def collocation_nodes(model: HullWhiteModel, t: float, n: int,
                      settings: CollocationConfig = CollocationConfig()) -> NodeSet:
    mean, var = model.marginal_law(t)
    sigma = max(np.sqrt(var), settings.min_node_sigma)
    return normal_nodes(mean, sigma, n, settings.rule, settings.chebyshev_kind, settings.chebyshev_width)


def option_nodes(model: HullWhiteModel, boundary: ExerciseBoundary, t: float, n: int,
                 settings: CollocationConfig = CollocationConfig()) -> NodeSet:
    """
    Nodes for the unexercised Bermudan component at date t.

    After an exercise date S with finite threshold r*, the surviving paths
    carry r(S) truncated to the continuation side of r*. The law of r(t) is then
    that truncated normal, mean-reverted over t - S, plus independent Gaussian
    noise accumulated over the same period. Only the latest exercise date
    before t is conditioned on. Before the first exercise date, past the last
    one, or when the threshold never triggers, the plain marginal is used.
    """
    k = boundary.latest_before(t)
    if k is None or k == boundary.dates.size - 1 or not np.isfinite(boundary.thresholds[k]):
        return collocation_nodes(model, t, n, settings)

    s = float(boundary.dates[k])
    mean_s, var_s = model.marginal_law(s)
    sd_s = np.sqrt(var_s)
    z_star = (boundary.thresholds[k] - mean_s) / sd_s
    decay = np.exp(-model.lam * (t - s))
    shift = model.psi(t) + decay * (mean_s - model.psi(s))
    noise_sd = model.eta * np.sqrt(-np.expm1(-2.0 * model.lam * (t - s)) / (2.0 * model.lam))
    bounds = {"lower": z_star} if boundary.exercise_below else {"upper": z_star}
    try:
        return propagated_truncated_nodes(n, shift, decay * sd_s, noise_sd, **bounds)
    except (TruncationError, MomentMatrixError) as exc:
        log_event(action="option_nodes", status="warning", market=model.market, t=t,
                  warning=f"truncated nodes unavailable ({exc}); using the untruncated marginal")
        return collocation_nodes(model, t, n, settings)


def node_plan(model: HullWhiteModel, grid, n: int, settings: CollocationConfig = CollocationConfig(),
              boundary: Optional[ExerciseBoundary] = None) -> List[DateNodes]:
    plan = []
    for t in np.asarray(grid, dtype=float):
        option = option_nodes(model, boundary, t, n, settings) if boundary is not None else None
        plan.append(DateNodes(t=float(t), plain=collocation_nodes(model, t, n, settings), option=option,
                              tilted=settings.tilt))
    return plan


def surrogate_at(valuator: PortfolioValuator, nodes: DateNodes) -> Surrogate:
    t = nodes.t
    tilt = valuator.rate_tilt(t) if nodes.tilted else 0.0
    if not valuator.has_option:
        return fit(nodes.plain, lambda x: valuator(t, x), tilt)
    if nodes.option is None:
        raise InvalidInputError(f"portfolio holds a Bermudan swaption but no option nodes were planned at t={t}")
    return PiecewiseApprox(
        unexercised=fit(nodes.option, lambda x: valuator.unexercised_value(t, x), tilt),
        exercised=fit(nodes.plain, lambda x: valuator.exercised_value(t, x), tilt),
    )


def build_surrogates(valuator: PortfolioValuator, plan: Sequence[DateNodes], threads: int = 1) -> List[Surrogate]:
    return map_dates(lambda k: surrogate_at(valuator, plan[k]), len(plan), threads)


def exact_cost(approx) -> int:
    """Exact valuations that went into one date's surrogate (corrections count only their own nodes)."""
    if isinstance(approx, PiecewiseApprox):
        return exact_cost(approx.unexercised) + exact_cost(approx.exercised)
    if hasattr(approx, "correction"):
        return len(approx.correction.node_set)
    return len(approx.node_set)


def _check_state(pathset: PathSet, exercised: Optional[np.ndarray]):
    if exercised is not None and exercised.shape != pathset.rates.shape:
        raise InvalidInputError(f"exercise state shape {exercised.shape} does not match paths {pathset.rates.shape}")


def _positive_mean(pathset: PathSet, k: int, values: np.ndarray) -> float:
    return float(np.mean(pathset.discount_factors(k) * np.maximum(values, 0.0)))


def ee_exact(pathset: PathSet, valuator: PortfolioValuator, exercised: Optional[np.ndarray] = None,
             threads: int = 1) -> ExposureProfile:
    if pathset.market != valuator.market:
        raise InvalidInputError(f"paths of market {pathset.market} valued with market {valuator.market}")
    _check_state(pathset, exercised)

    def one(k):
        t = pathset.grid[k]
        state = exercised[:, k] if exercised is not None else None
        return _positive_mean(pathset, k, valuator(t, pathset.rates[:, k], state))

    ee = np.array(map_dates(one, pathset.grid.size, threads))
    counts = np.full(pathset.grid.size, pathset.paths, dtype=np.int64)
    return ExposureProfile(grid=pathset.grid, ee=ee, method=EXACT, valuations=counts,
                           extrapolations=np.zeros(pathset.grid.size, dtype=np.int64))


def ee_approx(pathset: PathSet, approximants: Sequence, exercised: Optional[np.ndarray] = None,
              threads: int = 1, method: Optional[str] = None) -> ExposureProfile:
    if len(approximants) != pathset.grid.size:
        raise InvalidInputError(f"{len(approximants)} surrogates for {pathset.grid.size} monitoring dates")
    _check_state(pathset, exercised)

    def one(k):
        state = exercised[:, k] if exercised is not None else None
        x = pathset.rates[:, k]
        values = evaluate(approximants[k], x, state)
        return _positive_mean(pathset, k, values), count_extrapolated(approximants[k], x, state)

    results = map_dates(one, pathset.grid.size, threads)
    ee = np.array([r[0] for r in results])
    outside = np.array([r[1] for r in results], dtype=np.int64)
    if outside.any():
        log_event(action="ee_approx", status="warning", market=pathset.market,
                  extrapolated=int(outside.sum()),
                  warning="surrogate evaluated outside its node span")
    counts = np.array([exact_cost(a) for a in approximants], dtype=np.int64)
    tag = method or f"approx-{int(counts.max())}"
    return ExposureProfile(grid=pathset.grid, ee=ee, method=tag, valuations=counts, extrapolations=outside)


def relative_errors(exact: ExposureProfile, approx: ExposureProfile, floor: float = 1e-8) -> np.ndarray:
    """(approx - exact) / exact per date, NaN where |exact| < floor."""
    if exact.grid.shape != approx.grid.shape or not np.allclose(exact.grid, approx.grid, atol=1e-12):
        raise InvalidInputError("exposure profiles live on different grids")
    defined = np.abs(exact.ee) >= floor
    out = np.full(exact.ee.shape, np.nan)
    out[defined] = (approx.ee[defined] - exact.ee[defined]) / exact.ee[defined]
    return out


def ee_rel_error(exact: ExposureProfile, approx: ExposureProfile, floor: float = 1e-8) -> float:
    """Largest |relative EE error| over dates where the exact EE clears the floor."""
    rel = relative_errors(exact, approx, floor)
    if np.all(np.isnan(rel)):
        raise UndefinedMetricError(f"every exact EE value is below the floor {floor:.3e}")
    return float(np.nanmax(np.abs(rel)))


def select_node_count(pathset: PathSet, valuator: PortfolioValuator, exact: ExposureProfile,
                      candidates: Sequence[int],
                      settings: CollocationConfig = CollocationConfig(), floor: float = 1e-8,
                      exercised: Optional[np.ndarray] = None, boundary: Optional[ExerciseBoundary] = None,
                      threads: int = 1) -> Tuple[Optional[int], pd.DataFrame]:
    """Sweep N over candidates; returns the smallest N with eps_EE below the threshold and the sweep table."""
    rows = []
    chosen = None
    for n in sorted(candidates):
        plan = node_plan(valuator.model, pathset.grid, n, settings, boundary)
        approx = ee_approx(pathset, build_surrogates(valuator, plan, threads), exercised, threads)
        eps = ee_rel_error(exact, approx, floor)
        rows.append({EE_SWEEP_COLUMNS[0]: n, EE_SWEEP_COLUMNS[1]: eps,
                     EE_SWEEP_COLUMNS[2]: approx.valuations_per_date})
        log_event(action="node_sweep", status="ok", market=pathset.market, N=n, eps_ee=eps)
        if chosen is None and eps < settings.ee_threshold:
            chosen = n
    return chosen, pd.DataFrame(rows, columns=EE_SWEEP_COLUMNS)
