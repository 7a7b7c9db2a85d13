"""Synthetic market panels with a controllable planted cross-sectional signal.

Closes follow independent geometric random walks; opens gap off the prior
close with small noise. Each day the designated factor is evaluated from
the data generated so far (with the same column functions the factor
engine uses), and its cross-sectional z-score is added, spread over the
next five days, to the stocks' log returns. The z-score is standardized
per day, so the plant is market neutral, and it only ever reads data at or
before the day it conditions on.

The drift coefficient is signal_strength * daily_vol * sqrt(5): over a
five-day horizon the planted component then has roughly signal_strength
correlation with the realized forward return (noise variance 5 vol^2).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .factors import (
    forecast_columns,
    fundamental_columns,
    liquidity_columns,
    momentum_columns,
)
from .market_data import FUNDAMENTAL_FIELDS, TradingCalendar

logger = logging.getLogger(__name__)

SIGNAL_SPREAD_DAYS = 5


@dataclass(frozen=True)
class SynthSpec:
    n_stocks: int = 200
    n_days: int = 1500
    seed: int = 0
    daily_vol: float = 0.02
    signal_strength: float = 0.2
    signal_factor: int = 1
    fundamental_cadence: int = 1  # months between fundamental records
    start_date: str = "2012-01-02"

    def __post_init__(self):
        if self.n_stocks < 10:
            raise ValueError("n_stocks must be >= 10")
        if self.n_days < 1:
            raise ValueError("n_days must be >= 1")
        if self.daily_vol <= 0:
            raise ValueError("daily_vol must be > 0")
        if not -1.0 <= self.signal_strength <= 1.0:
            raise ValueError("signal_strength must lie in [-1, 1]")
        if not 1 <= self.signal_factor <= 33:
            raise ValueError("signal_factor must be a factor number 1..33")
        if self.fundamental_cadence < 1:
            raise ValueError("fundamental_cadence must be >= 1")


def _fundamental_records(rng: np.random.Generator, spec: SynthSpec, stamps: list[str]):
    """Per-stock slowly drifting records for every stamp date."""
    n = spec.n_stocks
    ratios = {
        "net_assets": rng.uniform(0.3, 0.7, n),
        "net_profits": rng.uniform(0.02, 0.08, n),
        "dividends": rng.uniform(0.005, 0.02, n),
        "sales": rng.uniform(0.5, 1.5, n),
        "operating_cashflow": rng.uniform(0.04, 0.10, n),
        "current_assets": rng.uniform(0.2, 0.5, n),
        "current_liabilities": rng.uniform(0.1, 0.3, n),
        "debt": rng.uniform(0.1, 0.5, n),
        "net_operating_profit": rng.uniform(0.03, 0.09, n),
        "nopat": rng.uniform(0.02, 0.07, n),
        "capex": rng.uniform(0.02, 0.06, n),
        "tangible_fixed_payments": rng.uniform(0.01, 0.05, n),
        "depreciation": rng.uniform(0.01, 0.03, n),
    }
    total_assets = rng.uniform(1e10, 1e12, n)
    values = {f: np.zeros((n, len(stamps))) for f in FUNDAMENTAL_FIELDS}
    for r in range(len(stamps)):
        total_assets = total_assets * np.exp(rng.normal(0.0, 0.02, n))
        values["total_assets"][:, r] = total_assets
        for field, ratio in ratios.items():
            noise = np.exp(rng.normal(0.0, 0.05, n))
            values[field][:, r] = total_assets * ratio * noise
        values["delta_working_capital"][:, r] = total_assets * rng.normal(0.0, 0.01, n)
    return values


def generate(spec: SynthSpec, out_dir: str | Path) -> dict[str, Path]:
    """Write prices/fundamentals/forecasts/membership CSVs; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    n, n_days = spec.n_stocks, spec.n_days
    calendar = TradingCalendar.business_days(spec.start_date, n_days)
    stocks = [f"S{i:04d}" for i in range(n)]

    month_ends = calendar.month_end_indices()
    record_days = [int(m) for m in month_ends[:: spec.fundamental_cadence]]
    stamps = [calendar.day_at(m) for m in record_days]
    fund_values = _fundamental_records(rng, spec, stamps)

    shares = rng.integers(5_000_000, 50_000_000, n).astype(float)
    close = np.full((n, n_days), np.nan)
    open_ = np.full((n, n_days), np.nan)
    volume = np.full((n, n_days), np.nan)
    op_fc = np.full((n, n_days), np.nan)
    tp_fc = np.full((n, n_days), np.nan)
    shares_2d = np.broadcast_to(shares[:, None], (n, n_days))

    prev_close = rng.uniform(500.0, 5000.0, n)
    prev_op = rng.uniform(1e9, 1e10, n)
    prev_tp = prev_close * rng.uniform(1.0, 1.2, n)
    base_volume = rng.uniform(1e5, 1e6, n)

    beta = spec.signal_strength * spec.daily_vol * np.sqrt(SIGNAL_SPREAD_DAYS)
    pending = np.zeros((n_days + SIGNAL_SPREAD_DAYS + 1, n))

    for d in range(n_days):
        open_[:, d] = prev_close * np.exp(rng.normal(0.0, spec.daily_vol / 4, n))
        log_ret = rng.normal(0.0, spec.daily_vol, n) + pending[d]
        close[:, d] = prev_close * np.exp(log_ret)
        volume[:, d] = base_volume * np.exp(rng.normal(0.0, 0.3, n))
        op_fc[:, d] = prev_op * np.exp(rng.normal(0.0, 0.01, n))
        tp_fc[:, d] = prev_tp * np.exp(rng.normal(0.0, 0.01, n))
        prev_close = close[:, d]
        prev_op = op_fc[:, d]
        prev_tp = tp_fc[:, d]

        if beta != 0.0:
            factor = _designated_factor(
                spec.signal_factor, close, volume, op_fc, tp_fc,
                shares_2d, fund_values, month_ends, record_days, d,
            )
            z = _cross_sectional_zscore(factor)
            lo = d + 1
            hi = min(d + 1 + SIGNAL_SPREAD_DAYS, pending.shape[0])
            pending[lo:hi] += (beta / SIGNAL_SPREAD_DAYS) * z

    paths = {
        "prices": out / "prices.csv",
        "fundamentals": out / "fundamentals.csv",
        "forecasts": out / "forecasts.csv",
        "membership": out / "membership.csv",
    }
    days = calendar.days
    with open(paths["prices"], "w", encoding="utf-8") as fh:
        fh.write("stock_id,date,open,close,volume,shares_outstanding\n")
        for s, stock in enumerate(stocks):
            sh = repr(float(shares[s]))
            for d, day in enumerate(days):
                fh.write(
                    f"{stock},{day},{float(open_[s, d])!r},{float(close[s, d])!r},"
                    f"{float(volume[s, d])!r},{sh}\n"
                )
    with open(paths["forecasts"], "w", encoding="utf-8") as fh:
        fh.write("stock_id,date,op_income_forecast,target_price_forecast\n")
        for s, stock in enumerate(stocks):
            for d, day in enumerate(days):
                fh.write(f"{stock},{day},{float(op_fc[s, d])!r},{float(tp_fc[s, d])!r}\n")
    with open(paths["membership"], "w", encoding="utf-8") as fh:
        fh.write("stock_id,date,is_member\n")
        for stock in stocks:
            for day in days:
                fh.write(f"{stock},{day},1\n")
    with open(paths["fundamentals"], "w", encoding="utf-8") as fh:
        fh.write("stock_id,month_end_date," + ",".join(FUNDAMENTAL_FIELDS) + "\n")
        for s, stock in enumerate(stocks):
            for r, stamp in enumerate(stamps):
                cells = ",".join(repr(float(fund_values[f][s, r])) for f in FUNDAMENTAL_FIELDS)
                fh.write(f"{stock},{stamp},{cells}\n")
    logger.info(
        "generated synthetic panel: %d stocks x %d days (signal %.3f on factor %d) in %s",
        n, n_days, spec.signal_strength, spec.signal_factor, out,
    )
    return paths


def _designated_factor(
    factor_no, close, volume, op_fc, tp_fc, shares_2d, fund_values, month_ends, record_days, d
) -> np.ndarray:
    if factor_no <= 8:
        return momentum_columns(close, d)[:, factor_no - 1]
    if factor_no <= 12:
        return liquidity_columns(close, volume, d)[:, factor_no - 9]
    if factor_no <= 18:
        return forecast_columns(op_fc, tp_fc, d)[:, factor_no - 13]
    # same sampling as the factor engine: value as of the latest month end,
    # from the latest record stamped at or before it
    past_ends = month_ends[month_ends <= d]
    if past_ends.size == 0:
        return np.full(close.shape[0], np.nan)
    month_end = int(past_ends[-1])
    n_visible = sum(1 for m in record_days if m <= month_end)
    if n_visible == 0:
        return np.full(close.shape[0], np.nan)
    record_idx = np.full(close.shape[0], n_visible - 1, dtype=np.int64)
    cols = fundamental_columns(close, shares_2d, fund_values, record_idx, month_end)
    return cols[:, factor_no - 19]


def _cross_sectional_zscore(values: np.ndarray) -> np.ndarray:
    finite = np.isfinite(values)
    if finite.sum() < 2:
        return np.zeros_like(values)
    mean = values[finite].mean()
    std = values[finite].std()
    if std == 0:
        return np.zeros_like(values)
    z = np.zeros_like(values)
    z[finite] = (values[finite] - mean) / std
    return z
