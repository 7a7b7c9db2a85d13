import numpy as np
import pytest

from xsect.market_data import FUNDAMENTAL_FIELDS, MarketPanel, TradingCalendar


def make_calendar(n_days, start="2020-01-01"):
    return TradingCalendar.business_days(start, n_days)


def panel_from_arrays(
    close,
    open_=None,
    volume=None,
    shares=None,
    membership=None,
    op_forecast=None,
    tp_forecast=None,
    fund_records=None,
    start="2020-01-01",
    stocks=None,
):
    """Build an in-memory MarketPanel directly from arrays.

    ``fund_records`` is a list of (stock_index, stamp_date, {field: value})
    with unlisted fields set to NaN.
    """
    close = np.asarray(close, dtype=float)
    n_stocks, n_days = close.shape
    if stocks is None:
        stocks = tuple(f"S{i:03d}" for i in range(n_stocks))
    calendar = make_calendar(n_days, start)
    open_ = close.copy() if open_ is None else np.asarray(open_, dtype=float)
    volume = np.full_like(close, 1000.0) if volume is None else np.asarray(volume, dtype=float)
    shares = np.full_like(close, 1e6) if shares is None else np.asarray(shares, dtype=float)
    if membership is None:
        membership = np.ones((n_stocks, n_days), dtype=bool)
    else:
        membership = np.asarray(membership, dtype=bool)
    if op_forecast is None:
        op_forecast = np.full_like(close, np.nan)
    else:
        op_forecast = np.asarray(op_forecast, dtype=float)
    if tp_forecast is None:
        tp_forecast = np.full_like(close, np.nan)
    else:
        tp_forecast = np.asarray(tp_forecast, dtype=float)

    per_stock = {i: [] for i in range(n_stocks)}
    for stock_idx, stamp, fields in fund_records or []:
        values = {f: fields.get(f, np.nan) for f in FUNDAMENTAL_FIELDS}
        per_stock[stock_idx].append((stamp, values))
    max_records = max((len(v) for v in per_stock.values()), default=0)
    fund_values = {
        f: np.full((n_stocks, max(max_records, 1)), np.nan) for f in FUNDAMENTAL_FIELDS
    }
    fund_stamps = []
    for s in range(n_stocks):
        records = sorted(per_stock[s])
        fund_stamps.append([stamp for stamp, _ in records])
        for r, (_, values) in enumerate(records):
            for f in FUNDAMENTAL_FIELDS:
                fund_values[f][s, r] = values[f]

    return MarketPanel(
        calendar=calendar,
        stocks=stocks,
        open_=open_,
        close=close,
        volume=volume,
        shares=shares,
        membership=membership,
        op_forecast=op_forecast,
        tp_forecast=tp_forecast,
        fund_stamps=fund_stamps,
        fund_values=fund_values,
    )


def simple_panel(n_stocks=6, n_days=90, seed=0, start="2020-01-01", membership=None):
    """Random but fully populated panel: every factor computable from day 61."""
    rng = np.random.default_rng(seed)
    calendar = make_calendar(n_days, start)
    base = rng.uniform(50.0, 150.0, size=n_stocks)
    rets = rng.normal(0.0, 0.01, size=(n_stocks, n_days))
    close = base[:, None] * np.exp(np.cumsum(rets, axis=1))
    open_ = close * np.exp(rng.normal(0.0, 0.002, size=close.shape))
    volume = rng.uniform(500.0, 5000.0, size=close.shape)
    op_forecast = np.exp(rng.normal(10.0, 0.05, size=(n_stocks, 1))) * np.exp(
        np.cumsum(rng.normal(0.0, 0.002, size=close.shape), axis=1)
    )
    tp_forecast = close * np.exp(rng.normal(0.05, 0.02, size=close.shape))

    fund_records = []
    month_ends = [calendar.day_at(int(i)) for i in calendar.month_end_indices()]
    for s in range(n_stocks):
        total_assets = rng.uniform(1e9, 5e9)
        for stamp in month_ends:
            total_assets *= float(np.exp(rng.normal(0.0, 0.02)))
            fields = {
                "net_assets": total_assets * 0.5,
                "net_profits": total_assets * 0.05,
                "dividends": total_assets * 0.01,
                "sales": total_assets * 0.8,
                "operating_cashflow": total_assets * 0.07,
                "total_assets": total_assets,
                "current_assets": total_assets * 0.3,
                "current_liabilities": total_assets * 0.2,
                "debt": total_assets * 0.25,
                "net_operating_profit": total_assets * 0.06,
                "nopat": total_assets * 0.045,
                "capex": total_assets * 0.04,
                "tangible_fixed_payments": total_assets * 0.03,
                "depreciation": total_assets * 0.02,
                "delta_working_capital": total_assets * 0.005,
            }
            fund_records.append((s, stamp, fields))

    return panel_from_arrays(
        close,
        open_=open_,
        volume=volume,
        op_forecast=op_forecast,
        tp_forecast=tp_forecast,
        fund_records=fund_records,
        start=start,
        membership=membership,
    )


def fund_records_of(panel):
    """Re-extract fundamental records from a panel for rebuilding."""
    records = []
    for s in range(panel.n_stocks):
        for r, stamp in enumerate(panel.fund_stamps[s]):
            fields = {
                f: panel.fund_values[f][s, r]
                for f in panel.fund_values
                if np.isfinite(panel.fund_values[f][s, r])
            }
            records.append((s, stamp, fields))
    return records


@pytest.fixture
def small_panel():
    return simple_panel()
