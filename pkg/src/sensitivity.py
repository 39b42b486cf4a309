"""
EE sensitivities to the curve quotes by bump-and-revalue on common random numbers.

    Psi^i(t) = mean[ (DF_i - DF) / dK * V+(r) + DF * (V_i+(r_i) - V+(r)) / dK ]

The exact estimator values V and V_i on every path. The full-order estimator
replaces both with collocation surrogates g and g_i; the low-order estimator
replaces g_i by g + h_i, h_i a degree d-1 fit of the shock-induced difference
on d nested nodes.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from src.errors import InvalidInputError, UndefinedMetricError
from src.exposure import DateNodes, exact_cost, map_dates
from src.hullwhite import PathSet, dpsi_dk
from src.interp import (
    DifferenceApprox, PiecewiseApprox, PolynomialApprox, evaluate, fit_difference, nested_subset,
)
from src.log import log_event
from src.products import PortfolioValuator
from src.schemas import BOUND_COLUMNS, COST_COLUMNS

EXACT = "exact"
FULL = "full"
LOW = "low"
ROUNDING = 1e-9


@dataclass(frozen=True)
class SensitivityProfile:
    grid: np.ndarray
    values: np.ndarray
    method: str
    shift: float
    valuations: np.ndarray
    shocks: Tuple[int, ...]
    nodes: Optional[int] = None
    order: Optional[int] = None

    @property
    def tag(self) -> str:
        if self.method == EXACT:
            return EXACT
        if self.method == FULL:
            return f"full-{self.nodes}"
        return f"low-{self.order}-{self.nodes}"

    @property
    def valuations_per_date(self) -> int:
        return int(self.valuations.sum(axis=0).max())

    def column(self, shock: int) -> np.ndarray:
        return self.values[:, self.shocks.index(shock)]


def _check_markets(paths: Sequence[PathSet], shift: float, exercised):
    if shift == 0:
        raise InvalidInputError("shock size dK must be non-zero")
    if len(paths) < 1 or paths[0].market != 0:
        raise InvalidInputError("first path set must belong to the unshocked market")
    base = paths[0]
    for p in paths[1:]:
        if p.seed != base.seed or p.rates.shape != base.rates.shape:
            raise InvalidInputError(f"market {p.market} paths do not share the unshocked noise")
        if not np.array_equal(p.grid, base.grid):
            raise InvalidInputError(f"market {p.market} paths live on a different grid")
    if len({p.market for p in paths}) != len(paths):
        raise InvalidInputError("each market may appear once")
    if exercised is not None and len(exercised) != len(paths):
        raise InvalidInputError("exercise state must be given for every market")


def _state(exercised, i: int, k: int):
    return None if exercised is None else exercised[i][:, k]


def _psi(paths: Sequence[PathSet], positive: Callable[[int, int], np.ndarray], shift: float,
         threads: int) -> np.ndarray:
    base = paths[0]

    def one(k):
        v0 = positive(0, k)
        df0 = base.discount_factors(k)
        row = np.empty(len(paths) - 1)
        for i, p in enumerate(paths[1:], start=1):
            dfi = p.discount_factors(k)
            vi = positive(i, k)
            row[i - 1] = np.mean((dfi - df0) / shift * v0 + df0 * (vi - v0) / shift)
        return row

    rows = map_dates(one, base.grid.size, threads)
    return np.vstack(rows) if rows else np.empty((0, len(paths) - 1))


def psi_exact(paths: Sequence[PathSet], valuators: Sequence[PortfolioValuator], shift: float,
              exercised: Optional[Sequence[np.ndarray]] = None, threads: int = 1) -> SensitivityProfile:
    _check_markets(paths, shift, exercised)
    if [v.market for v in valuators] != [p.market for p in paths]:
        raise InvalidInputError("one valuator per market, in the order of the path sets")

    def positive(i, k):
        p = paths[i]
        return np.maximum(valuators[i](p.grid[k], p.rates[:, k], _state(exercised, i, k)), 0.0)

    values = _psi(paths, positive, shift, threads)
    counts = np.full((len(paths), paths[0].grid.size), paths[0].paths, dtype=np.int64)
    return SensitivityProfile(grid=paths[0].grid, values=values, method=EXACT, shift=shift,
                              valuations=counts, shocks=tuple(p.market for p in paths[1:]))


def _psi_surrogate(paths, surrogates, shift, exercised, threads, method, nodes, order) -> SensitivityProfile:
    _check_markets(paths, shift, exercised)
    if len(surrogates) != len(paths) or any(len(s) != paths[0].grid.size for s in surrogates):
        raise InvalidInputError("need one surrogate per market and monitoring date")

    def positive(i, k):
        return np.maximum(evaluate(surrogates[i][k], paths[i].rates[:, k], _state(exercised, i, k)), 0.0)

    values = _psi(paths, positive, shift, threads)
    counts = np.array([[exact_cost(a) for a in per_date] for per_date in surrogates], dtype=np.int64)
    return SensitivityProfile(grid=paths[0].grid, values=values, method=method, shift=shift,
                              valuations=counts, shocks=tuple(p.market for p in paths[1:]),
                              nodes=nodes, order=order)


def _node_count(approx) -> int:
    if isinstance(approx, PiecewiseApprox):
        return _node_count(approx.exercised)
    if isinstance(approx, DifferenceApprox):
        return len(approx.correction.node_set)
    return len(approx.node_set)


def psi_full_order(paths: Sequence[PathSet], surrogates: Sequence[Sequence], shift: float,
                   exercised: Optional[Sequence[np.ndarray]] = None, threads: int = 1) -> SensitivityProfile:
    """Surrogates: surrogates[i][k] is g_i at date k, fitted on market-i nodes."""
    return _psi_surrogate(paths, surrogates, shift, exercised, threads, FULL,
                          _node_count(surrogates[0][0]), None)


def psi_low_order(paths: Sequence[PathSet], base: Sequence, differences: Sequence[Sequence], shift: float,
                  exercised: Optional[Sequence[np.ndarray]] = None, threads: int = 1) -> SensitivityProfile:
    """base[k] is g at date k; differences[i-1][k] is g + h_i for shocked market i."""
    n = _node_count(base[0])
    d = _node_count(differences[0][0]) if differences else n
    if d > n:
        raise InvalidInputError(f"difference order d={d} exceeds node count N={n}")
    return _psi_surrogate(paths, [list(base)] + [list(x) for x in differences], shift, exercised, threads,
                          LOW, n, d)


def difference_at(base, valuator: PortfolioValuator, nodes: DateNodes, d: int):
    """g + h_i at one date; h_i interpolates V_i - g on the inner d of market i's N nodes."""
    t = nodes.t
    if isinstance(base, PiecewiseApprox):
        if nodes.option is None:
            raise InvalidInputError(f"option nodes missing for the piecewise surrogate at t={t}")
        return PiecewiseApprox(
            unexercised=fit_difference(base.unexercised, nested_subset(nodes.option, d),
                                       lambda x: valuator.unexercised_value(t, x)),
            exercised=fit_difference(base.exercised, nested_subset(nodes.plain, d),
                                     lambda x: valuator.exercised_value(t, x)),
        )
    return fit_difference(base, nested_subset(nodes.plain, d), lambda x: valuator(t, x))


def build_differences(base: Sequence, valuator: PortfolioValuator, plan: Sequence[DateNodes], d: int,
                      threads: int = 1) -> List:
    if len(base) != len(plan):
        raise InvalidInputError("one base surrogate per planned date")
    return map_dates(lambda k: difference_at(base[k], valuator, plan[k], d), len(plan), threads)


def rel_error_profile(candidate: SensitivityProfile, exact: SensitivityProfile,
                      floor_ratio: float = 1e-3) -> np.ndarray:
    """(candidate - exact) / exact; NaN where |exact| < floor_ratio * max|exact|."""
    if candidate.values.shape != exact.values.shape:
        raise InvalidInputError(f"profile shapes differ: {candidate.values.shape} vs {exact.values.shape}")
    scale = np.max(np.abs(exact.values)) if exact.values.size else 0.0
    defined = np.abs(exact.values) >= max(floor_ratio * scale, np.finfo(float).tiny)
    out = np.full(exact.values.shape, np.nan)
    out[defined] = (candidate.values[defined] - exact.values[defined]) / exact.values[defined]
    return out


def max_rel_error(candidate: SensitivityProfile, exact: SensitivityProfile, floor_ratio: float = 1e-3) -> float:
    rel = rel_error_profile(candidate, exact, floor_ratio)
    if np.all(np.isnan(rel)):
        raise UndefinedMetricError("no sensitivity entry clears the relative-error floor")
    return float(np.nanmax(np.abs(rel)))


def integrated_error(candidate: SensitivityProfile, exact: SensitivityProfile) -> Tuple[np.ndarray, np.ndarray]:
    """Per shock: zeta = int |candidate - exact| dt and kappa = zeta / int |exact| dt."""
    if candidate.values.shape != exact.values.shape or not np.array_equal(candidate.grid, exact.grid):
        raise InvalidInputError("profiles must share grid and shocks")
    zeta = trapezoid(np.abs(candidate.values - exact.values), exact.grid, axis=0)
    scale = trapezoid(np.abs(exact.values), exact.grid, axis=0)
    if np.any(scale == 0):
        zero = [exact.shocks[j] for j in np.nonzero(scale == 0)[0]]
        raise UndefinedMetricError(f"exact sensitivity integrates to zero for shocks {zero}")
    return zeta, zeta / scale


def valuation_counts(method: str, paths: int, nodes: int, shocks: int, order: Optional[int] = None) -> int:
    """Exact valuations per monitoring date over all n+1 markets."""
    if method == EXACT:
        return paths * (1 + shocks)
    if method == FULL:
        return nodes * (1 + shocks)
    if method == LOW:
        if order is None or not 1 <= order <= nodes:
            raise InvalidInputError(f"low-order count needs 1 <= d <= N, got d={order}, N={nodes}")
        return nodes + order * shocks
    raise InvalidInputError(f"unknown method {method!r}")


def cost_report(profiles: Sequence[SensitivityProfile]) -> pd.DataFrame:
    full = [p for p in profiles if p.method == FULL]
    reference = full[0].valuations_per_date if full else None
    rows = []
    for p in profiles:
        cost = p.valuations_per_date
        rows.append({
            COST_COLUMNS[0]: p.method,
            COST_COLUMNS[1]: p.order,
            COST_COLUMNS[2]: cost,
            COST_COLUMNS[3]: cost / reference if reference else np.nan,
        })
    return pd.DataFrame(rows, columns=COST_COLUMNS)


def _l2(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def bound_diagnostics(paths: Sequence[PathSet], valuators: Sequence[PortfolioValuator], full: Sequence[Sequence],
                      plans: Sequence[Sequence[DateNodes]], exact: SensitivityProfile, low: SensitivityProfile,
                      exercised: Optional[Sequence[np.ndarray]] = None, threads: int = 1) -> pd.DataFrame:
    """
    Per date and shock, both sides of

        |Psi^i - Psi^i_{d,N}| <= C2 eps_0 + C1 / |dK| (eps_0 + eps_i + delta_0 + delta_i)

    with every norm a Monte Carlo L2 norm over the path set of its market.
    eps_i = ||V_i - g_i||, delta_i = ||g_i - p_i|| with p_i the degree d-1 fit
    of g_i on market i's nested nodes; delta_0 refits g on the same nodes.
    C2 is the finite-difference norm of the discount-factor derivative.
    """
    shift = exact.shift
    d = low.order
    _check_markets(paths, shift, exercised)
    base = paths[0]
    observed = np.abs(exact.values - low.values)
    # absolute slack for rounding in the difference quotients
    slack = ROUNDING * max(float(np.max(np.abs(exact.values))) if exact.values.size else 0.0, 1.0)

    def norms(k):
        t = base.grid[k]
        df0 = base.discount_factors(k)
        c1 = _l2(df0)

        def eps(i):
            p = paths[i]
            state = _state(exercised, i, k)
            x = p.rates[:, k]
            return _l2(valuators[i](t, x, state) - evaluate(full[i][k], x, state))

        def delta(poly, node_plan, x, state):
            return _l2(evaluate(poly, x, state) - evaluate(_reduce(poly, node_plan, d), x, state))

        eps0 = eps(0)
        rows = []
        for j, i in enumerate(exact.shocks):
            p = paths[j + 1]
            dfi = p.discount_factors(k)
            c2 = _l2((dfi - df0) / shift)
            eps_i = eps(j + 1)
            state_i = _state(exercised, j + 1, k)
            # g and its reduction enter through g_i - (g + h_i), evaluated on market i paths
            delta0 = delta(full[0][k], plans[j + 1][k], p.rates[:, k], state_i)
            delta_i = delta(full[j + 1][k], plans[j + 1][k], p.rates[:, k], state_i)
            bound = c2 * eps0 + c1 / abs(shift) * (eps0 + eps_i + delta0 + delta_i)
            dpsi = dpsi_dk(valuators[j + 1].model, valuators[0].model, base.grid[0], t)
            rows.append({
                "t": t, "i": i, "d": d, "C1": c1, "C2_fd": c2, "eps0": eps0, "eps_i": eps_i,
                "delta0": delta0, "delta_i": delta_i, "bound": bound,
                "observed": observed[k, j], "holds": bool(observed[k, j] <= bound + slack),
                "df_term_fd": float(np.mean((dfi - df0) / shift)),
                "df_term_decomposition": float(np.mean(df0) * np.expm1(-shift * dpsi) / shift),
            })
        return rows

    records = [row for rows in map_dates(norms, base.grid.size, threads) for row in rows]
    frame = pd.DataFrame(records, columns=BOUND_COLUMNS)
    violations = int((~frame["holds"]).sum()) if len(frame) else 0
    log_event(action="bound_diagnostics", status="ok" if violations == 0 else "warning",
              violations=violations, checked=len(frame),
              warning=f"{violations} bound violations" if violations else None)
    return frame


def _reduce(poly, plan: DateNodes, d: int):
    """Degree d-1 interpolant of a full-order surrogate on the inner d nodes of plan."""
    if isinstance(poly, PiecewiseApprox):
        return PiecewiseApprox(
            unexercised=_reduce(poly.unexercised, DateNodes(plan.t, plan.option), d),
            exercised=_reduce(poly.exercised, DateNodes(plan.t, plan.plain), d),
        )
    inner = nested_subset(plan.plain, d)
    return PolynomialApprox.from_values(inner, poly(inner.nodes), poly.tilt)
