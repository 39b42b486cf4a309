"""
Valuation functions V(t, r) under a HullWhiteModel.

Swaps are single-curve: the floating leg is worth P(t, start) before the start
date and the notional (1) afterwards. Bermudan swaptions are physically settled;
the exercise policy is a short-rate threshold per exercise date estimated by
least-squares Monte Carlo.
"""

import threading
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.polynomial import polynomial as P
from scipy.optimize import bisect

from src.errors import InvalidInputError
from src.hullwhite import HullWhiteModel, PathSet, transition_moments
from src.log import log_event
from src.models import BermudanSwaption, Portfolio, Swap
from src.schedule import DATE_TOL, date_index
from src.schemas import BOUNDARY_COLUMNS

BOUNDARY_SAMPLES = 257
MIN_ITM_PER_BASIS = 10
# r values x inner paths per vectorised block in nested valuation
NESTED_BLOCK = 200_000


def swap_cashflows(swap: Swap, t: float) -> Tuple[np.ndarray, np.ndarray, float]:
    """Bond maturities, amounts and a cash constant with V = constant + sum(amount * P(t, T))."""
    dates, accrual = swap.payment_dates()
    live = dates > t + DATE_TOL
    if not live.any():
        return np.empty(0), np.empty(0), 0.0
    scale = swap.sign * swap.notional
    times = [swap.maturity]
    amounts = [-scale]
    constant = 0.0
    if t < swap.start - DATE_TOL:
        times.append(swap.start)
        amounts.append(scale)
    else:
        constant = scale
    times.extend(dates[live])
    amounts.extend(np.full(live.sum(), -scale * swap.rate * accrual))
    return np.asarray(times, dtype=float), np.asarray(amounts, dtype=float), constant


def _cashflow_value(model: HullWhiteModel, t: float, flows, r: np.ndarray) -> np.ndarray:
    times, amounts, constant = flows
    if times.size == 0:
        return np.full(r.shape, constant)
    unique, inverse = np.unique(times, return_inverse=True)
    amounts = np.bincount(inverse, weights=amounts)
    return constant + model.zcb_matrix(t, unique, r) @ amounts


def _merge_flows(flows) -> Tuple[np.ndarray, np.ndarray, float]:
    if not flows:
        return np.empty(0), np.empty(0), 0.0
    times = np.concatenate([f[0] for f in flows])
    amounts = np.concatenate([f[1] for f in flows])
    return times, amounts, float(sum(f[2] for f in flows))


def swap_value(model: HullWhiteModel, swap: Swap, t: float, r) -> np.ndarray:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    return _cashflow_value(model, t, swap_cashflows(swap, t), r)


def swaps_value(model: HullWhiteModel, swaps, t: float, r) -> np.ndarray:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    return _cashflow_value(model, t, _merge_flows([swap_cashflows(s, t) for s in swaps]), r)


@dataclass(frozen=True)
class ExerciseBoundary:
    dates: np.ndarray
    thresholds: np.ndarray
    exercise_below: bool
    training_value: float = float("nan")

    def exercise_mask(self, k: int, r) -> np.ndarray:
        r = np.asarray(r)
        if self.exercise_below:
            return r < self.thresholds[k]
        return r > self.thresholds[k]

    def latest_before(self, t: float) -> Optional[int]:
        passed = np.nonzero(self.dates <= t + DATE_TOL)[0]
        return int(passed[-1]) if passed.size else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({BOUNDARY_COLUMNS[0]: self.dates, BOUNDARY_COLUMNS[1]: self.thresholds})


def _never(below: bool) -> float:
    return -np.inf if below else np.inf


def _crossing(f: Callable, lo: float, hi: float, below: bool) -> float:
    """Threshold where f = exercise - continuation changes sign over [lo, hi]."""
    xs = np.linspace(lo, hi, BOUNDARY_SAMPLES)
    fx = f(xs)
    scalar = lambda x: float(f(np.array([x]))[0])
    if below:
        if fx[0] <= 0:
            return -np.inf
        hits = np.nonzero(fx <= 0)[0]
        if hits.size == 0:
            return np.inf
        j = hits[0]
        a, b = xs[j - 1], xs[j]
    else:
        if fx[-1] <= 0:
            return np.inf
        hits = np.nonzero(fx <= 0)[0]
        if hits.size == 0:
            return -np.inf
        j = hits[-1]
        a, b = xs[j], xs[j + 1]
    if b <= a:
        return float(a)
    return float(bisect(scalar, a, b, xtol=1e-14, maxiter=200))


def lsmc_boundary(model: HullWhiteModel, bermudan: BermudanSwaption, training: PathSet,
                  basis_degree: int = 2) -> ExerciseBoundary:
    dates = np.asarray(bermudan.exercise_dates, dtype=float)
    if training.grid[-1] < dates[-1] - DATE_TOL:
        raise InvalidInputError(f"training paths end at {training.grid[-1]}, before last exercise {dates[-1]}")
    cols = [date_index(training.grid, s) for s in dates]
    below = bermudan.exercise_below
    underlying = bermudan.underlying
    thresholds = np.empty(dates.size)
    cash = np.zeros(training.paths)
    min_itm = MIN_ITM_PER_BASIS * (basis_degree + 1)

    for k in reversed(range(dates.size)):
        s, col = dates[k], cols[k]
        r = training.rates[:, col]
        df = training.discount_factors(col)
        exercise = swap_value(model, underlying, s, r)
        if k == dates.size - 1:
            coef = np.zeros(basis_degree + 1)
        else:
            itm = exercise > 0
            if itm.sum() < min_itm:
                thresholds[k] = _never(below)
                log_event(action="lsmc_boundary", status="warning", market=model.market, exercise_date=s,
                          warning=f"{int(itm.sum())} in-the-money paths, need {min_itm}; never exercising")
                continue
            coef = P.polyfit(r[itm], cash[itm] / df[itm], basis_degree)
        gain = lambda x, s=s, coef=coef: swap_value(model, underlying, s, x) - P.polyval(x, coef)
        thresholds[k] = _crossing(gain, float(r.min()), float(r.max()), below)
        exercised = (r < thresholds[k]) if below else (r > thresholds[k])
        cash = np.where(exercised, exercise * df, cash)

    return ExerciseBoundary(dates=dates, thresholds=thresholds, exercise_below=below,
                            training_value=float(cash.mean()))


def european_value(model: HullWhiteModel, bermudan: BermudanSwaption, pathset: PathSet,
                   k: int) -> Tuple[float, float]:
    """Value at t0 of exercising only at the k-th date; returns (mean, standard error)."""
    s = bermudan.exercise_dates[k]
    col = date_index(pathset.grid, s)
    payoff = pathset.discount_factors(col) * np.maximum(
        swap_value(model, bermudan.underlying, s, pathset.rates[:, col]), 0.0)
    return float(payoff.mean()), float(payoff.std(ddof=1) / np.sqrt(payoff.size))


def policy_value(model: HullWhiteModel, bermudan: BermudanSwaption, pathset: PathSet,
                 boundary: ExerciseBoundary) -> Tuple[float, float]:
    """Value at t0 of exercising by the boundary along pathset; on paths independent of the training set this is low-biased."""
    payoff = np.zeros(pathset.paths)
    alive = np.ones(pathset.paths, dtype=bool)
    for k, s in enumerate(boundary.dates):
        col = date_index(pathset.grid, s)
        r = pathset.rates[:, col]
        ex = alive & boundary.exercise_mask(k, r)
        if ex.any():
            payoff[ex] = pathset.discount_factors(col)[ex] * swap_value(model, bermudan.underlying, s, r[ex])
        alive &= ~ex
    return float(payoff.mean()), float(payoff.std(ddof=1) / np.sqrt(payoff.size))


def bermudan_value_exact(model: HullWhiteModel, bermudan: BermudanSwaption, t: float, r,
                         boundary: ExerciseBoundary, inner_paths: int, seed: int) -> np.ndarray:
    """
    Nested Monte Carlo value U(t, r) of the unexercised option.

    Every r shares the same inner noise (keyed by seed and t), so U(t, .) is a
    deterministic function of r. Only exercise dates strictly after t count.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    ahead = [k for k, s in enumerate(boundary.dates) if s > t + DATE_TOL]
    if not ahead:
        return np.zeros(r.shape)

    rng = np.random.Generator(np.random.PCG64([seed, int(round(t * 1e6))]))
    z = rng.standard_normal((inner_paths, len(ahead), 2))
    u = np.zeros(inner_paths)
    int_u = np.zeros(inner_paths)
    steps = []
    prev = t
    for j, k in enumerate(ahead):
        s = boundary.dates[k]
        decay, b, sd_u, load, resid = transition_moments(model, s - prev)
        int_u = int_u + u * b + load * z[:, j, 0] + resid * z[:, j, 1]
        u = u * decay + sd_u * z[:, j, 0]
        steps.append((k, s, u.copy(), int_u.copy(), np.exp(-model.lam * (s - t)),
                      model.bond_b(s - t), model.integrated_psi(t, s), model.psi(s)))
        prev = s

    x0 = r - model.psi(t)
    out = np.empty(r.shape)
    block = max(1, NESTED_BLOCK // inner_paths)
    for lo in range(0, r.size, block):
        x = x0[lo:lo + block]
        alive = np.ones((x.size, inner_paths), dtype=bool)
        value = np.zeros((x.size, inner_paths))
        for k, s, u_s, iu_s, decay, b, ipsi, psi_s in steps:
            rate = x[:, None] * decay + u_s + psi_s
            ex = alive & boundary.exercise_mask(k, rate)
            if ex.any():
                df = np.exp(-(x[:, None] * b + iu_s[None, :] + ipsi))
                value[ex] = df[ex] * swap_value(model, bermudan.underlying, s, rate[ex])
            alive &= ~ex
        out[lo:lo + block] = value.mean(axis=1)
    return out


def exercise_state(pathset: PathSet, boundary: ExerciseBoundary) -> np.ndarray:
    """Absorbing exercised flags (paths x dates); exercise happens at grid dates equal to S_k."""
    cols = {date_index(pathset.grid, s): k for k, s in enumerate(boundary.dates)
            if s <= pathset.grid[-1] + DATE_TOL}
    state = np.zeros(pathset.rates.shape, dtype=bool)
    done = np.zeros(pathset.paths, dtype=bool)
    for col in range(pathset.grid.size):
        if col in cols:
            done = done | boundary.exercise_mask(cols[col], pathset.rates[:, col])
        state[:, col] = done
    return state


class PortfolioValuator:
    """
    Exact valuator of one market's portfolio with a thread-safe valuation counter.

    Each r value handed in counts as one exact valuation.
    """

    def __init__(self, model: HullWhiteModel, portfolio: Portfolio,
                 boundary: Optional[ExerciseBoundary] = None, inner_paths: int = 128, seed: int = 0):
        if portfolio.bermudan is not None and boundary is None:
            raise InvalidInputError("portfolio holds a Bermudan swaption but no exercise boundary was given")
        self.model = model
        self.portfolio = portfolio
        self.boundary = boundary
        self.inner_paths = inner_paths
        self.seed = seed
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def market(self) -> int:
        return self.model.market

    @property
    def has_option(self) -> bool:
        return self.portfolio.bermudan is not None

    @property
    def calls(self) -> int:
        return self._calls

    def _count(self, n: int):
        with self._lock:
            self._calls += n

    def rate_tilt(self, t: float) -> float:
        """Half the largest B(t, T) over live cashflows; every bond term decays like exp(-B r) with B in [0, 2 tilt]."""
        swaps = list(self.portfolio.swaps)
        if self.has_option:
            swaps.append(self.portfolio.bermudan.underlying)
        live = [s.maturity for s in swaps if s.maturity > t + DATE_TOL]
        if not live:
            return 0.0
        return 0.5 * float(self.model.bond_b(max(live) - t))

    def _swaps(self, t: float, r: np.ndarray) -> np.ndarray:
        return swaps_value(self.model, self.portfolio.swaps, t, r)

    def _option(self, t: float, r: np.ndarray) -> np.ndarray:
        return bermudan_value_exact(self.model, self.portfolio.bermudan, t, r, self.boundary,
                                    self.inner_paths, self.seed)

    def unexercised_value(self, t: float, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        self._count(r.size)
        value = self._swaps(t, r)
        if self.has_option:
            value = value + self._option(t, r)
        return value

    def exercised_value(self, t: float, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        self._count(r.size)
        swaps = list(self.portfolio.swaps)
        if self.has_option:
            swaps.append(self.portfolio.bermudan.underlying)
        return swaps_value(self.model, swaps, t, r)

    def __call__(self, t: float, r, exercised: Optional[np.ndarray] = None) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if not self.has_option:
            self._count(r.size)
            return self._swaps(t, r)
        if exercised is None:
            raise InvalidInputError("exercise state is required to value a portfolio with a Bermudan swaption")
        exercised = np.asarray(exercised, dtype=bool)
        self._count(r.size)
        value = self._swaps(t, r)
        under = swap_value(self.model, self.portfolio.bermudan.underlying, t, r[exercised])
        value[exercised] += under
        if (~exercised).any():
            value[~exercised] += self._option(t, r[~exercised])
        return value


def portfolio_value(model: HullWhiteModel, portfolio: Portfolio, t: float, r,
                    exercised: Optional[np.ndarray] = None, boundary: Optional[ExerciseBoundary] = None,
                    inner_paths: int = 128, seed: int = 0) -> np.ndarray:
    return PortfolioValuator(model, portfolio, boundary, inner_paths, seed)(t, r, exercised)
