"""The 33 cross-sectional factors.

Columns 1-8 are trailing close-to-close returns, 9-12 trading-value
liquidity measures, 13-18 analyst forecast revisions, and 19-33 fundamental
ratios sampled at month ends and held constant until the next month end.
All horizons are counted in trading days. A value that cannot be computed
(insufficient history, missing input, zero denominator) is NaN, never an
error; exclusion of stocks with too many missing values happens when the
day's matrix is assembled.

The column group helpers operate on plain arrays shaped [stock, day] so
other components (e.g. the synthetic generator) can evaluate factors from
partially built panels with identical semantics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .market_data import FUNDAMENTAL_FIELDS, MarketPanel, Universe

logger = logging.getLogger(__name__)

N_FACTORS = 33
FACTOR_NUMBERS = tuple(range(1, N_FACTORS + 1))

MOMENTUM_HORIZONS = (1, 2, 3, 5, 10, 20, 40, 60)
LIQUIDITY_BASE_WINDOW = 60
LIQUIDITY_RATIO_WINDOWS = (5, 10, 20)
FORECAST_HORIZONS = (5, 10, 20)

# Stocks with more missing factor values than this are dropped from the
# day's matrix (and logged).
DEFAULT_MAX_MISSING = 8


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Elementwise num/den with NaN wherever den is zero or either is NaN."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    ok = np.isfinite(num) & np.isfinite(den) & (den != 0.0)
    out = np.full(np.broadcast(num, den).shape, np.nan)
    np.divide(num, den, out=out, where=ok)
    return out


def momentum_columns(close: np.ndarray, d: int) -> np.ndarray:
    """Trailing returns close[d]/close[d-h] - 1 for the eight horizons."""
    n = close.shape[0]
    out = np.full((n, len(MOMENTUM_HORIZONS)), np.nan)
    cur = close[:, d]
    for j, h in enumerate(MOMENTUM_HORIZONS):
        if d - h >= 0:
            out[:, j] = _ratio(cur, close[:, d - h]) - 1.0
    return out


def liquidity_columns(close: np.ndarray, volume: np.ndarray, d: int) -> np.ndarray:
    """60-day mean trading value and the 5/10/20-day means divided by it.

    Windows end at d inclusive and must be fully observed; a zero 60-day
    mean makes the three ratios missing (the level stays 0).
    """
    n = close.shape[0]
    out = np.full((n, 1 + len(LIQUIDITY_RATIO_WINDOWS)), np.nan)
    if d - (LIQUIDITY_BASE_WINDOW - 1) < 0:
        return out
    tv = close[:, d - LIQUIDITY_BASE_WINDOW + 1 : d + 1] * volume[:, d - LIQUIDITY_BASE_WINDOW + 1 : d + 1]
    base = tv.mean(axis=1)
    out[:, 0] = base
    for j, w in enumerate(LIQUIDITY_RATIO_WINDOWS):
        out[:, 1 + j] = _ratio(tv[:, -w:].mean(axis=1), base)
    return out


def forecast_columns(op_forecast: np.ndarray, tp_forecast: np.ndarray, d: int) -> np.ndarray:
    """Forecast change rates f[d]/f[d-h] - 1; missing when f[d-h] <= 0."""
    n = op_forecast.shape[0]
    out = np.full((n, 2 * len(FORECAST_HORIZONS)), np.nan)
    for block, series in enumerate((op_forecast, tp_forecast)):
        cur = series[:, d]
        for j, h in enumerate(FORECAST_HORIZONS):
            if d - h < 0:
                continue
            past = series[:, d - h].copy()
            past[past <= 0] = np.nan
            out[:, block * len(FORECAST_HORIZONS) + j] = _ratio(cur, past) - 1.0
    return out


def fundamental_columns(
    close: np.ndarray,
    shares: np.ndarray,
    fund_values: dict[str, np.ndarray],
    record_idx: np.ndarray,
    month_end: int,
) -> np.ndarray:
    """The fifteen fundamental ratios as of one month-end day.

    ``record_idx`` points at the latest visible fundamental record per stock
    (-1 when none); change-rate factors additionally need the record before
    it. Market value is close x shares_outstanding on the month-end day.
    """
    n = close.shape[0]
    rows = np.arange(n)

    def gather(field: str, offset: int = 0) -> np.ndarray:
        idx = record_idx - offset
        ok = idx >= 0
        vals = np.full(n, np.nan)
        vals[ok] = fund_values[field][rows[ok], idx[ok]]
        return vals

    mv = close[:, month_end] * shares[:, month_end]
    mv = np.where(np.isfinite(mv) & (mv > 0), mv, np.nan)

    net_assets = gather("net_assets")
    net_profits = gather("net_profits")
    total_assets = gather("total_assets")
    capex = gather("capex")
    tangible = gather("tangible_fixed_payments")

    out = np.full((n, 15), np.nan)
    out[:, 0] = _ratio(net_assets, mv)                                   # No.19
    out[:, 1] = _ratio(net_profits, mv)                                  # No.20
    out[:, 2] = _ratio(gather("dividends"), mv)                          # No.21
    out[:, 3] = _ratio(gather("sales"), mv)                              # No.22
    out[:, 4] = _ratio(gather("operating_cashflow"), mv)                 # No.23
    out[:, 5] = _ratio(net_profits, net_assets)                          # No.24
    out[:, 6] = _ratio(gather("net_operating_profit"), total_assets)     # No.25
    out[:, 7] = _ratio(gather("nopat"), gather("debt") + net_assets)     # No.26
    out[:, 8] = _ratio(-(gather("delta_working_capital") - gather("depreciation")), total_assets)  # No.27
    out[:, 9] = _ratio(gather("sales"), total_assets)                    # No.28
    out[:, 10] = _ratio(gather("current_assets"), gather("current_liabilities"))  # No.29
    out[:, 11] = _ratio(net_assets, total_assets)                        # No.30
    out[:, 12] = _ratio(total_assets, gather("total_assets", 1)) - 1.0   # No.31
    out[:, 13] = _ratio(capex, gather("capex", 1)) - 1.0                 # No.32
    out[:, 14] = _ratio(tangible - gather("tangible_fixed_payments", 1), total_assets)  # No.33
    return out


def _last_month_end(panel: MarketPanel, d: int) -> int | None:
    ends = panel.calendar.month_end_indices()
    pos = np.searchsorted(ends, d, side="right") - 1
    if pos < 0:
        return None
    return int(ends[pos])


def _all_columns(panel: MarketPanel, d: int) -> np.ndarray:
    """Raw 33-column factor block for every panel stock on day d."""
    blocks = [
        momentum_columns(panel.close, d),
        liquidity_columns(panel.close, panel.volume, d),
        forecast_columns(panel.op_forecast, panel.tp_forecast, d),
    ]
    month_end = _last_month_end(panel, d)
    if month_end is None:
        blocks.append(np.full((panel.n_stocks, 15), np.nan))
    else:
        blocks.append(
            fundamental_columns(
                panel.close,
                panel.shares,
                panel.fund_values,
                panel.fund_ptr[:, month_end],
                month_end,
            )
        )
    return np.hstack(blocks)


def price_momentum_factors(panel: MarketPanel, stock: str, day: str) -> np.ndarray:
    """Factors No.1-8 for one stock."""
    s, d = panel.stock_index(stock), panel.calendar.index_of(day)
    return momentum_columns(panel.close[s : s + 1], d)[0]


def liquidity_factors(panel: MarketPanel, stock: str, day: str) -> np.ndarray:
    """Factors No.9-12 for one stock."""
    s, d = panel.stock_index(stock), panel.calendar.index_of(day)
    return liquidity_columns(panel.close[s : s + 1], panel.volume[s : s + 1], d)[0]


def forecast_revision_factors(panel: MarketPanel, stock: str, day: str) -> np.ndarray:
    """Factors No.13-18 for one stock."""
    s, d = panel.stock_index(stock), panel.calendar.index_of(day)
    return forecast_columns(panel.op_forecast[s : s + 1], panel.tp_forecast[s : s + 1], d)[0]


def fundamental_factors(panel: MarketPanel, stock: str, day: str) -> np.ndarray:
    """Factors No.19-33 for one stock (constant between month ends)."""
    s, d = panel.stock_index(stock), panel.calendar.index_of(day)
    month_end = _last_month_end(panel, d)
    if month_end is None:
        return np.full(15, np.nan)
    return fundamental_columns(
        panel.close[s : s + 1],
        panel.shares[s : s + 1],
        {f: panel.fund_values[f][s : s + 1] for f in FUNDAMENTAL_FIELDS},
        panel.fund_ptr[s : s + 1, month_end],
        month_end,
    )[0]


@dataclass(frozen=True)
class FactorMatrix:
    """Per-day matrix of raw factor values, rows in universe order."""

    day: str
    stocks: tuple[str, ...]
    values: np.ndarray  # [len(stocks), 33], NaN = missing
    excluded: tuple[tuple[str, int], ...] = ()  # (stock, missing count)

    def __post_init__(self):
        if self.values.shape != (len(self.stocks), N_FACTORS):
            raise ValueError(
                f"factor matrix must be [{len(self.stocks)}, {N_FACTORS}], got {self.values.shape}"
            )
        self.values.setflags(write=False)


def build_factor_matrix(
    panel: MarketPanel,
    universe: Universe,
    day: str,
    max_missing: int = DEFAULT_MAX_MISSING,
) -> FactorMatrix:
    """Assemble all 33 columns for the universe, dropping sparse rows.

    Stocks with more than ``max_missing`` missing factors are removed from
    the row set and logged; an empty surviving row set is an error.
    """
    if universe.day != day:
        raise ValueError(f"universe is for {universe.day}, not {day}")
    d = panel.calendar.index_of(day)
    rows = np.array([panel.stock_index(s) for s in universe.stocks], dtype=np.intp)
    if rows.size == 0:
        raise ValueError(f"empty universe on {day}")
    values = _all_columns(panel, d)[rows]
    missing = np.isnan(values).sum(axis=1)
    keep = missing <= max_missing
    excluded = tuple(
        (universe.stocks[i], int(missing[i])) for i in np.flatnonzero(~keep)
    )
    if excluded:
        logger.info(
            "%s: excluded %d stocks with >%d missing factors: %s",
            day,
            len(excluded),
            max_missing,
            ", ".join(f"{s}({m})" for s, m in excluded),
        )
    if not keep.any():
        raise ValueError(f"no stocks remain on {day} after the missing-factor exclusion")
    stocks = tuple(universe.stocks[i] for i in np.flatnonzero(keep))
    return FactorMatrix(day=day, stocks=stocks, values=values[keep], excluded=excluded)


def write_factors_csv(panel: MarketPanel, days, path) -> None:
    """Audit dump of raw factor values (pre-exclusion): stock_id,date,f1..f33."""
    from .market_data import universe_at

    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("stock_id,date," + ",".join(f"f{k}" for k in FACTOR_NUMBERS) + "\n")
        for day in days:
            universe = universe_at(panel, day)
            if not universe.stocks:
                continue
            d = panel.calendar.index_of(day)
            rows = np.array([panel.stock_index(s) for s in universe.stocks], dtype=np.intp)
            values = _all_columns(panel, d)[rows]
            for i, stock in enumerate(universe.stocks):
                cells = ["" if not np.isfinite(v) else repr(float(v)) for v in values[i]]
                fh.write(f"{stock},{day}," + ",".join(cells) + "\n")
