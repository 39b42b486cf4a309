from typing import Iterable, List, Sequence, Tuple

import numpy as np

from src.errors import InvalidInputError

# Dates within this distance are treated as the same grid point
DATE_TOL = 1e-9


# Fixed-leg schedule: equally spaced periods, count rounded from the frequency
def payment_schedule(start: float, maturity: float, frequency: float) -> Tuple[np.ndarray, float]:
    if not maturity > start:
        raise InvalidInputError(f"schedule needs start < maturity, got {start} >= {maturity}")
    if not frequency > 0:
        raise InvalidInputError(f"payments per year must be positive, got {frequency}")
    periods = max(1, int(round((maturity - start) * frequency)))
    accrual = (maturity - start) / periods
    dates = start + accrual * np.arange(1, periods + 1)
    dates[-1] = maturity
    return dates, accrual


# Monitoring dates t0, t0 + 1/f, ..., horizon (horizon always included)
def monitoring_grid(horizon: float, dates_per_year: float, t0: float = 0.0,
                    extra_dates: Iterable[float] = ()) -> np.ndarray:
    if not horizon > t0:
        raise InvalidInputError(f"horizon {horizon} must lie after t0={t0}")
    steps = int(np.floor((horizon - t0) * dates_per_year + DATE_TOL))
    grid = t0 + np.arange(steps + 1) / dates_per_year
    grid = np.concatenate([grid, [horizon], [d for d in extra_dates if t0 < d <= horizon]])
    return merge_close(np.sort(grid))


def merge_close(dates: np.ndarray) -> np.ndarray:
    keep = np.concatenate([[True], np.diff(dates) > DATE_TOL])
    return dates[keep]


def date_index(grid: np.ndarray, date: float) -> int:
    idx = int(np.argmin(np.abs(grid - date)))
    if abs(grid[idx] - date) > DATE_TOL:
        raise InvalidInputError(f"date {date} is not on the monitoring grid")
    return idx


# Instrument maturity -> 1-based instrument index
def shock_index(maturities: Sequence[float], tenor: float) -> int:
    for idx, maturity in enumerate(maturities, start=1):
        if abs(maturity - tenor) <= DATE_TOL:
            return idx
    raise InvalidInputError(f"no market instrument with maturity {tenor}")


def shock_indices(maturities: Sequence[float], tenors: Iterable[float]) -> List[int]:
    return [shock_index(maturities, t) for t in tenors]
