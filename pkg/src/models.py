from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.errors import ConfigError, InvalidInputError
from src.schedule import payment_schedule, shock_indices
from src.schemas import PORTFOLIO_COLUMNS


class MarketInstrument(BaseModel):
    """Par swap quote used to build the curve."""
    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=1)
    maturity: float = Field(gt=0)
    quote: float
    frequency: float = Field(default=1.0, gt=0)


class ShockSpec(BaseModel):
    # shift=0 is a valid (null) curve shock; estimators reject it themselves
    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=1)
    shift: float = 1e-4


class HWParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean_reversion: float = Field(gt=0)
    volatility: float = Field(gt=0)


class Swap(BaseModel):
    """Fixed-float swap. sign=+1 pays fixed (payer), sign=-1 receives fixed."""
    model_config = ConfigDict(frozen=True)

    sign: int = 1
    notional: float = Field(gt=0)
    fixed_rate: Union[float, Literal["par"]]
    maturity: float = Field(gt=0)
    start: float = Field(default=0.0, ge=0)
    frequency: float = Field(default=2.0, gt=0)

    @field_validator("sign")
    @classmethod
    def _unit_sign(cls, v):
        if v not in (1, -1):
            raise ValueError("sign must be +1 (payer) or -1 (receiver)")
        return v

    @model_validator(mode="after")
    def _start_before_maturity(self):
        if not self.start < self.maturity:
            raise ValueError(f"start {self.start} must be before maturity {self.maturity}")
        return self

    @property
    def rate(self) -> float:
        if self.fixed_rate == "par":
            raise InvalidInputError("swap fixed rate 'par' has not been resolved against a curve")
        return float(self.fixed_rate)

    def payment_dates(self) -> Tuple[np.ndarray, float]:
        return payment_schedule(self.start, self.maturity, self.frequency)

    def with_rate(self, rate: float) -> "Swap":
        return self.model_copy(update={"fixed_rate": float(rate)})


class BermudanSwaption(BaseModel):
    """Physically settled option to enter the underlying swap at each exercise date."""
    model_config = ConfigDict(frozen=True)

    exercise_dates: List[float] = Field(min_length=1)
    underlying: Swap
    physical_settlement: Literal[True] = True

    @model_validator(mode="after")
    def _dates_in_order(self):
        dates = self.exercise_dates
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("exercise dates must be strictly increasing")
        if dates[0] <= 0 or dates[-1] >= self.underlying.maturity:
            raise ValueError("exercise dates must lie in (0, underlying maturity)")
        return self

    @property
    def exercise_below(self) -> bool:
        # receiver underlying is entered when rates are low, payer when high
        return self.underlying.sign == -1


class Portfolio(BaseModel):
    model_config = ConfigDict(frozen=True)

    swaps: List[Swap] = []
    bermudan: Optional[BermudanSwaption] = None

    @model_validator(mode="after")
    def _not_empty(self):
        if not self.swaps and self.bermudan is None:
            raise ValueError("portfolio holds no instruments")
        return self

    @property
    def horizon(self) -> float:
        ends = [s.maturity for s in self.swaps]
        if self.bermudan is not None:
            ends.append(self.bermudan.underlying.maturity)
        return max(ends)

    @property
    def total_notional(self) -> float:
        total = sum(s.notional for s in self.swaps)
        if self.bermudan is not None:
            total += self.bermudan.underlying.notional
        return total

    def resolve_par(self, par_rate) -> "Portfolio":
        """Replace every fixed_rate='par' by par_rate(start, maturity, frequency)."""
        def fix(swap):
            if swap.fixed_rate != "par":
                return swap
            return swap.with_rate(par_rate(swap.start, swap.maturity, swap.frequency))

        bermudan = self.bermudan
        if bermudan is not None:
            bermudan = bermudan.model_copy(update={"underlying": fix(bermudan.underlying)})
        return Portfolio(swaps=[fix(s) for s in self.swaps], bermudan=bermudan)


class HazardModel(BaseModel):
    """Square-root intensity dy = k(ybar - y)dt + eta sqrt(y) dW_y, corr(W_y, W_r) = rho."""
    model_config = ConfigDict(frozen=True)

    mean_reversion: float = Field(default=0.5, ge=0)
    level: float = Field(default=0.02, ge=0)
    volatility: float = Field(default=0.1, ge=0)
    initial: float = Field(default=0.02, ge=0)
    correlation: float = Field(default=0.0, ge=-1, le=1)
    lgd: float = Field(default=0.6, ge=0, le=1)


class CurveConfig(BaseModel):
    instruments: List[MarketInstrument] = Field(min_length=1)
    extrapolate: bool = False

    @field_validator("instruments")
    @classmethod
    def _ordered(cls, v):
        if [x.index for x in v] != list(range(1, len(v) + 1)):
            raise ValueError("instrument indices must run 1..n in order")
        if any(b.maturity <= a.maturity for a, b in zip(v, v[1:])):
            raise ValueError("instrument maturities must be strictly increasing")
        return v

    @property
    def maturities(self) -> List[float]:
        return [x.maturity for x in self.instruments]


class PortfolioConfig(BaseModel):
    swaps: List[Swap] = []
    portfolio_csv: Optional[Path] = None
    bermudan: Optional[BermudanSwaption] = None

    @field_validator("portfolio_csv")
    @classmethod
    def _csv_exists(cls, v):
        if v is not None and not v.is_file():
            raise ValueError(f"portfolio file {v} does not exist")
        return v

    @model_validator(mode="after")
    def _not_empty(self):
        if not self.swaps and self.portfolio_csv is None and self.bermudan is None:
            raise ValueError("portfolio section lists no swaps, csv or bermudan")
        return self

    def load(self) -> Portfolio:
        swaps = list(self.swaps)
        if self.portfolio_csv is not None:
            swaps.extend(read_portfolio_csv(self.portfolio_csv))
        try:
            return Portfolio(swaps=swaps, bermudan=self.bermudan)
        except ValueError as exc:
            raise ConfigError(f"invalid portfolio: {exc}") from exc


def read_portfolio_csv(path) -> List[Swap]:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ConfigError(f"cannot read portfolio file {path}: {exc}") from exc
    missing = [c for c in PORTFOLIO_COLUMNS if c not in frame.columns]
    if missing:
        raise ConfigError(f"{path}: missing columns {missing}")
    swaps = []
    for line, row in enumerate(frame[PORTFOLIO_COLUMNS].to_dict("records"), start=2):
        try:
            swaps.append(Swap(**{**row, "sign": int(row["sign"])}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path} line {line}: invalid swap ({exc})") from exc
    return swaps


class GridSpec(BaseModel):
    dates_per_year: float = Field(default=4.0, gt=0)
    horizon: Optional[float] = Field(default=None, gt=0)


class CollocationConfig(BaseModel):
    rule: Literal["hermite", "chebyshev"] = "hermite"
    chebyshev_kind: Literal["lobatto", "roots"] = "lobatto"
    chebyshev_width: float = Field(default=4.0, gt=0)
    min_node_sigma: float = Field(default=1e-4, gt=0)
    tilt: bool = True
    node_sweep: List[int] = []
    budget_nodes: List[int] = []
    ee_threshold: float = Field(default=1e-4, gt=0)


class LsmcConfig(BaseModel):
    basis_degree: int = Field(default=2, ge=0)
    inner_paths: int = Field(default=128, ge=1)
    node_dump_date: float = 2.0


class DiagnosticsConfig(BaseModel):
    bounds: bool = True
    dump_paths: bool = False
    ee_floor: float = Field(default=1e-8, gt=0)
    rel_error_floor: float = Field(default=1e-3, gt=0)


class RunConfig(BaseModel):
    experiment: Literal["bootstrap", "ee", "sens", "bermudan", "cva", "tables"] = "sens"
    seed: int = Field(default=20240101, ge=0)
    paths: int = Field(default=20000, ge=1)
    nodes: int = Field(default=7, ge=1)
    low_orders: List[int] = [5, 6]
    shift: float = 1e-4
    shock_tenors: Optional[List[float]] = None
    threads: int = Field(default=1, ge=1)
    output_dir: str = "output"
    curve: CurveConfig
    model: HWParams
    grid: GridSpec = GridSpec()
    collocation: CollocationConfig = CollocationConfig()
    portfolio: PortfolioConfig
    lsmc: LsmcConfig = LsmcConfig()
    hazard: Optional[HazardModel] = None
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()

    @field_validator("shift")
    @classmethod
    def _nonzero_shift(cls, v):
        if v == 0:
            raise ValueError("shock size must be non-zero")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if any(d < 1 for d in self.low_orders):
            raise ValueError("low orders d must be >= 1")
        if self.low_orders and self.nodes < max(self.low_orders):
            raise ValueError(f"nodes N={self.nodes} must be >= max(low_orders)={max(self.low_orders)}")
        if any(n < 1 for n in self.collocation.node_sweep + self.collocation.budget_nodes):
            raise ValueError("node counts must be >= 1")
        if self.shock_tenors is not None:
            try:
                shock_indices(self.curve.maturities, self.shock_tenors)
            except InvalidInputError as exc:
                raise ValueError(str(exc)) from exc
        return self

    def shock_list(self) -> List[int]:
        if self.shock_tenors is None:
            return list(range(1, len(self.curve.instruments) + 1))
        return shock_indices(self.curve.maturities, self.shock_tenors)
