"""
Discount curve bootstrapped from par swap quotes.

Interpolation is log-linear on discount factors, so instantaneous forwards are
piecewise constant between knots (right-continuous at the knots).
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.errors import CurveDomainError, InvalidInputError, SolverError, ZeroAnnuityError
from src.models import MarketInstrument, ShockSpec
from src.schedule import payment_schedule
from src.schemas import CURVE_COLUMNS

LOG_LINEAR = "log_linear"

SOLVER_TOL = 1e-12
SOLVER_MAX_ITER = 100
DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class YieldCurve:
    times: np.ndarray
    log_discounts: np.ndarray
    instruments: Tuple[MarketInstrument, ...]
    shock: Optional[ShockSpec] = None
    rule: str = LOG_LINEAR
    extrapolate: bool = False

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @property
    def discount_factors(self) -> np.ndarray:
        return np.exp(self.log_discounts)

    @property
    def market(self) -> int:
        return 0 if self.shock is None else self.shock.index

    @property
    def label(self) -> str:
        if self.shock is None:
            return "unshocked"
        return f"shock {self.shock.index} ({self.shock.shift:+.2e})"

    def _check_domain(self, s: np.ndarray):
        low = s < self.t0 - DOMAIN_TOL
        high = (s > self.end + DOMAIN_TOL) & (not self.extrapolate)
        if np.any(low | high):
            bad = s[low | high]
            raise CurveDomainError(
                f"curve queried at {bad.min():.6g}..{bad.max():.6g} outside [{self.t0}, {self.end}]"
            )

    def _interval(self, s: np.ndarray) -> np.ndarray:
        # right-limit interval index; the last knot maps onto the last interval
        k = np.searchsorted(self.times, s, side="right") - 1
        return np.clip(k, 0, len(self.times) - 2)

    def _interval_forwards(self) -> np.ndarray:
        return -np.diff(self.log_discounts) / np.diff(self.times)

    def log_discount(self, s):
        s = np.asarray(s, dtype=float)
        self._check_domain(s)
        k = self._interval(s)
        fwd = self._interval_forwards()
        return self.log_discounts[k] - fwd[k] * (s - self.times[k])

    def discount(self, s):
        """P(t0, s); exact at knots, flat forward past the last knot when extrapolating."""
        out = np.exp(self.log_discount(s))
        return float(out) if out.ndim == 0 else out

    def instantaneous_forward(self, t):
        t = np.asarray(t, dtype=float)
        self._check_domain(t)
        out = self._interval_forwards()[self._interval(t)]
        return float(out) if out.ndim == 0 else out

    def zero_yield(self, s):
        s = np.asarray(s, dtype=float)
        tau = s - self.t0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(tau > 0, -self.log_discount(s) / np.where(tau > 0, tau, 1.0),
                           self.instantaneous_forward(s))
        return float(out) if out.ndim == 0 else out

    def annuity(self, start: float, maturity: float, frequency: float) -> float:
        dates, accrual = payment_schedule(start, maturity, frequency)
        return float(accrual * np.sum(self.discount(dates)))

    def par_swap_rate(self, start: float, maturity: float, frequency: float) -> float:
        if not start < maturity:
            raise InvalidInputError(f"par rate needs start < maturity, got {start}, {maturity}")
        annuity = self.annuity(start, maturity, frequency)
        if annuity == 0.0:
            raise ZeroAnnuityError(f"zero annuity for swap {start}->{maturity}")
        return (self.discount(start) - self.discount(maturity)) / annuity

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            CURVE_COLUMNS[0]: self.times,
            CURVE_COLUMNS[1]: self.discount_factors,
            CURVE_COLUMNS[2]: self.zero_yield(self.times),
        })


def _validate(instruments: Sequence[MarketInstrument], t0: float):
    if not instruments:
        raise InvalidInputError("no market instruments to bootstrap from")
    maturities = [x.maturity for x in instruments]
    if maturities[0] <= t0 or any(b <= a for a, b in zip(maturities, maturities[1:])):
        raise InvalidInputError(f"instrument maturities must be strictly increasing after t0, got {maturities}")


def _solve_knot(times, logs, inst: MarketInstrument, t0: float) -> Tuple[float, float]:
    """Newton on log P(T_i) so the par rate of inst matches its quote."""
    prev_t, prev_log = times[-1], logs[-1]
    dates, accrual = payment_schedule(t0, inst.maturity, inst.frequency)
    old = dates <= prev_t
    known = accrual * np.sum(np.exp(np.interp(dates[old], times, logs)))
    weights = (dates[~old] - prev_t) / (inst.maturity - prev_t)

    x = prev_log - inst.quote * (inst.maturity - prev_t)
    residual = np.inf
    for _ in range(SOLVER_MAX_ITER):
        new_dfs = np.exp(prev_log + weights * (x - prev_log))
        annuity = known + accrual * np.sum(new_dfs)
        residual = (1.0 - np.exp(x)) / annuity - inst.quote
        if abs(residual) < SOLVER_TOL:
            return x, residual
        value = 1.0 - np.exp(x) - inst.quote * annuity
        slope = -np.exp(x) - inst.quote * accrual * np.sum(weights * new_dfs)
        x -= value / slope
    raise SolverError(f"bootstrap did not converge at instrument {inst.index}", abs(residual), inst.index)


def bootstrap(instruments: Sequence[MarketInstrument], extrapolate: bool = False,
              shock: Optional[ShockSpec] = None, t0: float = 0.0) -> YieldCurve:
    _validate(instruments, t0)
    times, logs = [t0], [0.0]
    for inst in instruments:
        x, _ = _solve_knot(np.array(times), np.array(logs), inst, t0)
        times.append(inst.maturity)
        logs.append(x)
    return YieldCurve(
        times=np.array(times),
        log_discounts=np.array(logs),
        instruments=tuple(instruments),
        shock=shock,
        extrapolate=extrapolate,
    )


def shocked_curve(instruments: Sequence[MarketInstrument], shock: ShockSpec,
                  extrapolate: bool = False) -> YieldCurve:
    if not 1 <= shock.index <= len(instruments):
        raise InvalidInputError(f"shock index {shock.index} outside 1..{len(instruments)}")
    bumped = [
        inst.model_copy(update={"quote": inst.quote + shock.shift}) if inst.index == shock.index else inst
        for inst in instruments
    ]
    return bootstrap(bumped, extrapolate=extrapolate, shock=shock)
