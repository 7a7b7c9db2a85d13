"""Loading and validation of raw market panels.

All daily series are aligned onto a single trading calendar at load time.
Monthly fundamentals are kept as dated records per stock and exposed through
a per-day visibility pointer so that any day-t query sees only records
stamped at or before t (configurable publication lag, default 0 days).
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

# Column order of the four input files. Header rows must match exactly.
PRICES_COLUMNS = ("stock_id", "date", "open", "close", "volume", "shares_outstanding")
FUNDAMENTAL_FIELDS = (
    "net_assets",
    "net_profits",
    "dividends",
    "sales",
    "operating_cashflow",
    "total_assets",
    "current_assets",
    "current_liabilities",
    "debt",
    "net_operating_profit",
    "nopat",
    "capex",
    "tangible_fixed_payments",
    "depreciation",
    "delta_working_capital",
)
FUNDAMENTALS_COLUMNS = ("stock_id", "month_end_date") + FUNDAMENTAL_FIELDS
FORECASTS_COLUMNS = ("stock_id", "date", "op_income_forecast", "target_price_forecast")
MEMBERSHIP_COLUMNS = ("stock_id", "date", "is_member")

# A stock needs this many consecutive daily closes (61 strictly prior plus the
# query day) before it can enter a universe; factors over 60-day horizons are
# then always computable.
MIN_HISTORY_DAYS = 62

STANDARD_FILENAMES = {
    "prices": "prices.csv",
    "fundamentals": "fundamentals.csv",
    "forecasts": "forecasts.csv",
    "membership": "membership.csv",
}


class DataParseError(ValueError):
    """A row could not be parsed; the message names file and line."""


class DataValidationError(ValueError):
    """Parsed data violates a panel invariant."""


def _parse_iso_date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError as exc:
        raise ValueError(f"bad ISO date {text!r}") from exc


@dataclass(frozen=True)
class TradingCalendar:
    """Ordered, duplicate-free sequence of trading days (ISO dates)."""

    days: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.days:
            raise DataValidationError("calendar must be non-empty")
        for d in self.days:
            _parse_iso_date(d)
        for a, b in zip(self.days, self.days[1:]):
            if a >= b:
                raise DataValidationError(f"calendar not strictly increasing at {a!r} -> {b!r}")
        object.__setattr__(self, "_index", {d: i for i, d in enumerate(self.days)})

    def __len__(self) -> int:
        return len(self.days)

    def __contains__(self, day: str) -> bool:
        return day in self._index

    def index_of(self, day: str) -> int:
        try:
            return self._index[day]
        except KeyError:
            raise DataValidationError(f"day {day} is not on the trading calendar") from None

    def day_at(self, index: int) -> str:
        return self.days[index]

    def month_end_indices(self) -> np.ndarray:
        """Indices of the last trading day of each calendar month.

        The final calendar day is never treated as a month end: whether the
        month has closed cannot be known from a truncated calendar.
        """
        ends = [
            i
            for i in range(len(self.days) - 1)
            if self.days[i][:7] != self.days[i + 1][:7]
        ]
        return np.asarray(ends, dtype=np.int64)

    @classmethod
    def business_days(cls, start: str, n_days: int) -> "TradingCalendar":
        """Synthetic weekday calendar: n_days Mondays-to-Fridays from start."""
        day = _parse_iso_date(start)
        out: list[str] = []
        while len(out) < n_days:
            if day.weekday() < 5:
                out.append(day.isoformat())
            day += dt.timedelta(days=1)
        return cls(tuple(out))


@dataclass(frozen=True)
class Universe:
    """Investable stock set on one day, in canonical (lexicographic) order."""

    day: str
    stocks: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.stocks)


class MarketPanel:
    """Immutable aligned panel of daily prices, fundamentals, and forecasts.

    Daily series are dense 2-D float arrays shaped [stock, day] with NaN for
    absent observations; stocks are sorted lexicographically (the canonical
    tie-breaking order used everywhere downstream). Safe for concurrent
    reads: all arrays are marked read-only after construction.
    """

    def __init__(
        self,
        calendar: TradingCalendar,
        stocks: tuple[str, ...],
        open_: np.ndarray,
        close: np.ndarray,
        volume: np.ndarray,
        shares: np.ndarray,
        membership: np.ndarray,
        op_forecast: np.ndarray,
        tp_forecast: np.ndarray,
        fund_stamps: list[list[str]],
        fund_values: dict[str, np.ndarray],
    ):
        self.calendar = calendar
        self.stocks = stocks
        self.open = open_
        self.close = close
        self.volume = volume
        self.shares = shares
        self.membership = membership
        self.op_forecast = op_forecast
        self.tp_forecast = tp_forecast
        self.fund_stamps = fund_stamps
        self.fund_values = fund_values
        self._stock_index = {s: i for i, s in enumerate(stocks)}

        n_stocks, n_days = close.shape
        # Visibility pointer: latest fundamental record (per stock) whose
        # publication stamp is <= day; -1 when none is visible yet.
        ptr = np.full((n_stocks, n_days), -1, dtype=np.int32)
        days_arr = np.array(calendar.days)
        for s in range(n_stocks):
            stamps = fund_stamps[s]
            if stamps:
                ptr[s, :] = np.searchsorted(np.array(stamps), days_arr, side="right") - 1
        self.fund_ptr = ptr

        # Length of the consecutive run of finite closes ending at each day.
        streak = np.zeros((n_stocks, n_days), dtype=np.int32)
        finite = np.isfinite(close)
        run = np.zeros(n_stocks, dtype=np.int32)
        for d in range(n_days):
            run = np.where(finite[:, d], run + 1, 0)
            streak[:, d] = run
        self.history_streak = streak

        for arr in (self.open, self.close, self.volume, self.shares,
                    self.membership, self.op_forecast, self.tp_forecast,
                    self.fund_ptr, self.history_streak):
            arr.setflags(write=False)
        for arr in self.fund_values.values():
            arr.setflags(write=False)

    @property
    def n_stocks(self) -> int:
        return len(self.stocks)

    @property
    def n_days(self) -> int:
        return len(self.calendar)

    def stock_index(self, stock_id: str) -> int:
        try:
            return self._stock_index[stock_id]
        except KeyError:
            raise DataValidationError(f"unknown stock {stock_id!r}") from None

    def fundamental_record(self, stock_idx: int, record_idx: int) -> dict[str, float]:
        """One fundamental record as a field -> value mapping (NaN = absent)."""
        return {f: float(self.fund_values[f][stock_idx, record_idx]) for f in FUNDAMENTAL_FIELDS}


def _scan_structure(path: Path, expected_header: tuple[str, ...]) -> None:
    """Exact header and per-line field counts, at C string-scan speed.

    pandas silently drops extra fields, so totals are checked here first;
    only a mismatch triggers the per-line localization pass.
    """
    n_cols = len(expected_header)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    newline = text.find("\n")
    header_line = text[:newline] if newline >= 0 else text
    if not header_line:
        raise DataParseError(
            f"{path}: empty file, expected header {','.join(expected_header)}"
        )
    if tuple(header_line.rstrip("\r").split(",")) != expected_header:
        raise DataParseError(
            f"{path}: bad header {header_line.rstrip()!r}, "
            f"expected {list(expected_header)!r}"
        )
    n_lines = text.count("\n") + (0 if text.endswith("\n") else 1)
    clean = (
        '"' not in text
        and "\n\n" not in text
        and not text.endswith("\n\n")
        and text.count(",") == n_lines * (n_cols - 1)
    )
    if clean:
        return
    body = text[newline + 1 :] if newline >= 0 else ""
    for line_no, line in enumerate(body.splitlines(), start=2):
        stripped = line.rstrip("\r")
        if not stripped:
            raise DataParseError(f"{path}: line {line_no}: blank line")
        if '"' in stripped:
            raise DataParseError(f"{path}: line {line_no}: quoted fields are not supported")
        if stripped.count(",") != n_cols - 1:
            raise DataParseError(
                f"{path}: line {line_no}: expected {n_cols} fields, "
                f"got {stripped.count(',') + 1}"
            )
    raise DataParseError(f"{path}: malformed file structure")


def _localize_bad_number(path: Path, numeric_columns: tuple[str, ...]) -> None:
    """Slow re-read to name the first malformed numeric cell, then raise."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, index_col=False)
    for column in numeric_columns:
        raw = df[column]
        empty = raw.to_numpy() == ""
        bad = pd.to_numeric(raw, errors="coerce").isna().to_numpy() & ~empty
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DataParseError(
                f"{path}: line {i + 2}: bad number {raw.iloc[i]!r} in column {column}"
            )
    raise DataParseError(f"{path}: malformed numeric value")


def _read_table(
    path: Path,
    expected_header: tuple[str, ...],
    string_columns: tuple[str, ...],
    numeric_columns: tuple[str, ...] = (),
) -> pd.DataFrame:
    """Strict typed CSV read; line numbers downstream are df_index + 2."""
    if not path.exists():
        raise DataParseError(f"input file not found: {path}")
    _scan_structure(path, expected_header)
    dtypes: dict[str, object] = {c: "category" for c in string_columns}
    dtypes.update({c: np.float64 for c in numeric_columns})
    try:
        df = pd.read_csv(
            path,
            dtype=dtypes,
            keep_default_na=False,
            na_values=[""],
            index_col=False,
        )
    except ValueError:
        _localize_bad_number(path, numeric_columns)
        raise
    for column in string_columns:
        isna = df[column].isna().to_numpy()
        if isna.any():
            i = int(np.flatnonzero(isna)[0])
            raise DataParseError(f"{path}: line {i + 2}: empty value in column {column}")
    return df


def _numeric_column(df: pd.DataFrame, column: str, path: Path, required: bool) -> np.ndarray:
    values = df[column].to_numpy(dtype=float)
    if required:
        empty = np.isnan(values)
        if empty.any():
            i = int(np.flatnonzero(empty)[0])
            raise DataParseError(f"{path}: line {i + 2}: empty value in column {column}")
    return values


def _check_duplicates(df: pd.DataFrame, keys: list[str], path: Path, label: str) -> None:
    dup = df.duplicated(subset=keys).to_numpy()
    if dup.any():
        i = int(np.flatnonzero(dup)[0])
        key = tuple(str(df.iloc[i][k]) for k in keys)
        raise DataValidationError(f"{path}: line {i + 2}: duplicate {label} key {key}")


def _category_codes(series: pd.Series, index: Mapping[str, int]) -> np.ndarray:
    """Row values of a category column mapped through ``index``; -1 unknown."""
    mapping = np.array(
        [index.get(c, -1) for c in series.cat.categories], dtype=np.intp
    )
    return mapping[series.cat.codes.to_numpy()]


def _day_indices(df: pd.DataFrame, calendar: TradingCalendar, path: Path) -> np.ndarray:
    idx = _category_codes(df["date"], calendar._index)
    bad = idx < 0
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DataValidationError(
            f"{path}: line {i + 2}: day {df['date'].iloc[i]} is off-calendar"
        )
    return idx


def _resolve_paths(paths: Mapping[str, Path] | str | Path) -> dict[str, Path]:
    if isinstance(paths, (str, Path)):
        base = Path(paths)
        return {k: base / v for k, v in STANDARD_FILENAMES.items()}
    return {k: Path(v) for k, v in paths.items()}


def load_panel(
    paths: Mapping[str, Path] | str | Path,
    calendar: TradingCalendar,
    fundamentals_lag_days: int = 0,
) -> MarketPanel:
    """Load and validate the four CSV inputs into an immutable MarketPanel.

    ``paths`` is either a directory containing the standard file names or a
    mapping with keys prices/fundamentals/forecasts/membership. The
    publication lag shifts each fundamental record's visibility stamp by
    that many calendar days past its month_end_date.

    Raises DataParseError for malformed rows (naming file and line) and
    DataValidationError for invariant violations (duplicate keys,
    non-positive prices, off-calendar days, price gaps inside membership).
    """
    files = _resolve_paths(paths)
    n_days = len(calendar)

    prices_df = _read_table(
        files["prices"],
        PRICES_COLUMNS,
        string_columns=("stock_id", "date"),
        numeric_columns=("open", "close", "volume", "shares_outstanding"),
    )
    if prices_df.empty:
        raise DataValidationError(f"{files['prices']}: no rows")
    fundamentals_df = _read_table(
        files["fundamentals"],
        FUNDAMENTALS_COLUMNS,
        string_columns=("stock_id", "month_end_date"),
        numeric_columns=FUNDAMENTAL_FIELDS,
    )
    forecasts_df = _read_table(
        files["forecasts"],
        FORECASTS_COLUMNS,
        string_columns=("stock_id", "date"),
        numeric_columns=("op_income_forecast", "target_price_forecast"),
    )
    membership_df = _read_table(
        files["membership"],
        MEMBERSHIP_COLUMNS,
        string_columns=("stock_id", "date", "is_member"),
    )

    stock_ids = sorted(
        set(prices_df["stock_id"].cat.categories)
        | set(fundamentals_df["stock_id"].cat.categories)
        | set(forecasts_df["stock_id"].cat.categories)
        | set(membership_df["stock_id"].cat.categories)
    )
    sidx = {s: i for i, s in enumerate(stock_ids)}
    n_stocks = len(stock_ids)

    p = files["prices"]
    _check_duplicates(prices_df, ["stock_id", "date"], p, "(stock, day)")
    s_rows = _category_codes(prices_df["stock_id"], sidx)
    d_cols = _day_indices(prices_df, calendar, p)
    o = _numeric_column(prices_df, "open", p, required=True)
    c = _numeric_column(prices_df, "close", p, required=True)
    v = _numeric_column(prices_df, "volume", p, required=True)
    sh = _numeric_column(prices_df, "shares_outstanding", p, required=True)
    bad_price = (o <= 0) | (c <= 0)
    if bad_price.any():
        i = int(np.flatnonzero(bad_price)[0])
        raise DataValidationError(
            f"{p}: line {i + 2}: non-positive price for "
            f"({prices_df['stock_id'].iloc[i]}, {prices_df['date'].iloc[i]}): "
            f"open={o[i]}, close={c[i]}"
        )
    for name, column in (("volume", v), ("shares", sh)):
        neg = column < 0
        if neg.any():
            i = int(np.flatnonzero(neg)[0])
            raise DataValidationError(
                f"{p}: line {i + 2}: negative {name} for "
                f"({prices_df['stock_id'].iloc[i]}, {prices_df['date'].iloc[i]})"
            )
    open_ = np.full((n_stocks, n_days), np.nan)
    close = np.full((n_stocks, n_days), np.nan)
    volume = np.full((n_stocks, n_days), np.nan)
    shares = np.full((n_stocks, n_days), np.nan)
    open_[s_rows, d_cols] = o
    close[s_rows, d_cols] = c
    volume[s_rows, d_cols] = v
    shares[s_rows, d_cols] = sh

    p = files["membership"]
    _check_duplicates(membership_df, ["stock_id", "date"], p, "(stock, day)")
    membership = np.zeros((n_stocks, n_days), dtype=bool)
    if not membership_df.empty:
        flag_true = _category_codes(membership_df["is_member"], {"0": 0, "1": 1})
        if (flag_true < 0).any():
            i = int(np.flatnonzero(flag_true < 0)[0])
            raise DataParseError(
                f"{p}: line {i + 2}: is_member must be 0 or 1, "
                f"got {membership_df['is_member'].iloc[i]!r}"
            )
        s_rows = _category_codes(membership_df["stock_id"], sidx)
        d_cols = _day_indices(membership_df, calendar, p)
        membership[s_rows, d_cols] = flag_true == 1

    p = files["forecasts"]
    _check_duplicates(forecasts_df, ["stock_id", "date"], p, "(stock, day)")
    op_forecast = np.full((n_stocks, n_days), np.nan)
    tp_forecast = np.full((n_stocks, n_days), np.nan)
    if not forecasts_df.empty:
        s_rows = _category_codes(forecasts_df["stock_id"], sidx)
        d_cols = _day_indices(forecasts_df, calendar, p)
        op_forecast[s_rows, d_cols] = _numeric_column(
            forecasts_df, "op_income_forecast", p, required=False
        )
        tp_forecast[s_rows, d_cols] = _numeric_column(
            forecasts_df, "target_price_forecast", p, required=False
        )

    # Fundamentals: dated records per stock, sorted by their visibility stamp
    # (month_end_date shifted by the publication lag in calendar days).
    p = files["fundamentals"]
    _check_duplicates(fundamentals_df, ["stock_id", "month_end_date"], p, "(stock, month_end)")
    date_cats = fundamentals_df["month_end_date"].cat.categories
    parsed_cats = pd.to_datetime(date_cats, format="%Y-%m-%d", errors="coerce")
    if parsed_cats.isna().any():
        bad_value = date_cats[int(np.flatnonzero(parsed_cats.isna())[0])]
        i = int(np.flatnonzero((fundamentals_df["month_end_date"] == bad_value).to_numpy())[0])
        raise DataParseError(f"{p}: line {i + 2}: bad month_end_date {bad_value!r}")
    field_values = {
        f: _numeric_column(fundamentals_df, f, p, required=False)
        for f in FUNDAMENTAL_FIELDS
    }
    per_stock: dict[int, list[tuple[str, int]]] = {i: [] for i in range(n_stocks)}
    if not fundamentals_df.empty:
        stamp_cats = (parsed_cats + pd.Timedelta(days=fundamentals_lag_days)).strftime(
            "%Y-%m-%d"
        )
        row_stamps = stamp_cats[fundamentals_df["month_end_date"].cat.codes.to_numpy()]
        row_stocks = _category_codes(fundamentals_df["stock_id"], sidx)
        for i, (stock, stamp) in enumerate(zip(row_stocks, row_stamps)):
            per_stock[int(stock)].append((stamp, i))

    max_records = max((len(v) for v in per_stock.values()), default=0)
    fund_values = {
        f: np.full((n_stocks, max(max_records, 1)), np.nan) for f in FUNDAMENTAL_FIELDS
    }
    fund_stamps: list[list[str]] = []
    for s in range(n_stocks):
        records = sorted(per_stock[s])
        fund_stamps.append([stamp for stamp, _ in records])
        for r, (_, i) in enumerate(records):
            for f in FUNDAMENTAL_FIELDS:
                fund_values[f][s, r] = field_values[f][i]

    # Prices must be present on every membership day: silent gaps would
    # corrupt return computation downstream.
    gap = membership & ~np.isfinite(close)
    if gap.any():
        s, d = np.argwhere(gap)[0]
        raise DataValidationError(
            f"missing price inside membership span: ({stock_ids[s]}, {calendar.day_at(d)})"
        )

    panel = MarketPanel(
        calendar=calendar,
        stocks=tuple(stock_ids),
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
    logger.info(
        "loaded panel: %d stocks x %d days from %s",
        panel.n_stocks,
        panel.n_days,
        files["prices"].parent,
    )
    return panel


def calendar_from_prices(path: str | Path) -> TradingCalendar:
    """Derive the trading calendar from the distinct dates in prices.csv."""
    df = _read_table(
        Path(path),
        PRICES_COLUMNS,
        string_columns=("stock_id", "date"),
        numeric_columns=("open", "close", "volume", "shares_outstanding"),
    )
    if df.empty:
        raise DataValidationError(f"{path}: no rows")
    return TradingCalendar(tuple(sorted(set(df["date"].cat.categories))))


def universe_at(panel: MarketPanel, day: str) -> Universe:
    """Member stocks with enough price history to compute every price factor.

    A stock qualifies when its membership flag is set on ``day`` and it has
    an unbroken run of at least 61 strictly prior daily closes plus the
    current one. Returned in canonical (lexicographic) order.
    """
    d = panel.calendar.index_of(day)
    ok = panel.membership[:, d] & (panel.history_streak[:, d] >= MIN_HISTORY_DAYS)
    stocks = tuple(panel.stocks[i] for i in np.flatnonzero(ok))
    return Universe(day=day, stocks=stocks)
