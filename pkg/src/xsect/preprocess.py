"""Cross-sectional rank scaling and training-window assembly.

Features and targets are rescaled per day by ranking within the day's
universe and dividing by the universe size, so every value lands in (0, 1].
Missing feature values are imputed at the mid rank; missing targets drop
the sample instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.stats import rankdata

from .factors import FactorMatrix, N_FACTORS, build_factor_matrix
from .market_data import MIN_HISTORY_DAYS, MarketPanel, universe_at

# First calendar index with enough history for a full factor row.
MIN_FACTOR_DAY = MIN_HISTORY_DAYS - 1

TARGET_ENTRY_OFFSET = 1  # position entered at the open this many days ahead
TARGET_EXIT_OFFSET = 5   # and valued at the close this many days ahead


def rank_scale(raw) -> np.ndarray:
    """Ascending ranks divided by the vector length, ties averaged.

    ``n`` is the full universe size: finite values are ranked among
    themselves and divided by n, and missing values are imputed at the mid
    rank (n+1)/(2n). Errors when nothing is finite.
    """
    arr = np.asarray(raw, dtype=float)
    n = arr.size
    finite = np.isfinite(arr)
    if not finite.any():
        raise ValueError("rank_scale: all values missing")
    out = np.empty(n)
    out[finite] = rankdata(arr[finite], method="average") / n
    out[~finite] = (n + 1) / (2 * n)
    return out


@dataclass(frozen=True)
class ScaledVector:
    """A rank-scaled cross-section; every value in (0, 1]."""

    stocks: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.stocks) != self.values.size:
            raise ValueError("stocks and values differ in length")
        if self.values.size and (np.min(self.values) <= 0 or np.max(self.values) > 1):
            raise ValueError("scaled values must lie in (0, 1]")

    @classmethod
    def from_raw(cls, stocks, raw) -> "ScaledVector":
        return cls(stocks=tuple(stocks), values=rank_scale(raw))


def scale_matrix(values: np.ndarray) -> np.ndarray:
    """Rank-scale each factor column of a day's matrix independently.

    A column with no finite value at all is set entirely to the mid rank
    (the per-value imputation applied to the whole column).
    """
    k, n_cols = values.shape
    out = np.empty_like(values)
    for j in range(n_cols):
        col = values[:, j]
        if np.isfinite(col).any():
            out[:, j] = rank_scale(col)
        else:
            out[:, j] = (k + 1) / (2 * k)
    return out


def target_return(panel: MarketPanel, stock: str, day: str) -> float:
    """Forward tradable return close(t+5)/open(t+1) - 1; NaN when unpriced."""
    s, t = panel.stock_index(stock), panel.calendar.index_of(day)
    return float(target_returns(panel, np.array([s]), t)[0])


def target_returns(panel: MarketPanel, stock_rows: np.ndarray, t: int) -> np.ndarray:
    if t + TARGET_EXIT_OFFSET >= panel.n_days:
        return np.full(stock_rows.size, np.nan)
    entry = panel.open[stock_rows, t + TARGET_ENTRY_OFFSET]
    exit_ = panel.close[stock_rows, t + TARGET_EXIT_OFFSET]
    with np.errstate(invalid="ignore", divide="ignore"):
        return exit_ / entry - 1.0


@dataclass(frozen=True)
class TrainingWindow:
    """Stacked (scaled features, scaled target) samples behind one fit.

    Sample days span exactly T-N-4 .. T-5 in trading days, so every target
    is priced with data dated at or before T.
    """

    as_of: str
    n_days: int
    features: np.ndarray          # [K, F]
    targets: np.ndarray           # [K]
    stock_ids: tuple[str, ...]    # len K
    sample_days: tuple[str, ...]  # len K

    @property
    def n_samples(self) -> int:
        return self.targets.size

    @classmethod
    def from_arrays(cls, features, targets, as_of: str = "", n_days: int = 0) -> "TrainingWindow":
        features = np.asarray(features, dtype=float)
        targets = np.asarray(targets, dtype=float)
        k = targets.size
        return cls(
            as_of=as_of,
            n_days=n_days,
            features=features.reshape(k, -1),
            targets=targets,
            stock_ids=("",) * k,
            sample_days=("",) * k,
        )


@dataclass
class DaySamples:
    """One day's scaled cross-section, split into usable training samples."""

    day: str
    features: np.ndarray       # [m, 33] scaled, rows with a finite target only
    targets: np.ndarray        # [m] scaled
    stocks: tuple[str, ...]


def scale_day_samples(panel: MarketPanel, matrix: FactorMatrix, t: int) -> DaySamples:
    """Scale one day's factor matrix and target cross-section.

    Features are ranked over all matrix rows; targets are ranked over the
    subset of stocks whose forward return is priced, and rows without a
    target are dropped from the sample set.
    """
    scaled_x = scale_matrix(matrix.values)
    rows = np.array([panel.stock_index(s) for s in matrix.stocks], dtype=np.intp)
    raw_y = target_returns(panel, rows, t)
    ok = np.isfinite(raw_y)
    if not ok.any():
        return DaySamples(day=matrix.day, features=scaled_x[:0], targets=raw_y[:0], stocks=())
    scaled_y = rank_scale(raw_y[ok])
    stocks = tuple(s for s, keep in zip(matrix.stocks, ok) if keep)
    return DaySamples(day=matrix.day, features=scaled_x[ok], targets=scaled_y, stocks=stocks)


MatrixSource = Mapping[str, FactorMatrix] | Callable[[str], FactorMatrix] | None


def assemble_window(
    panel: MarketPanel,
    matrices: MatrixSource,
    as_of: str,
    n_days: int,
    max_missing: int | None = None,
    day_cache: dict[int, DaySamples] | None = None,
) -> TrainingWindow:
    """Stack the N-day sample set ending 5 trading days before ``as_of``.

    ``matrices`` may be a day-keyed mapping, a callable, or None to build
    each day's matrix on the fly. ``day_cache`` (keyed by calendar index)
    lets a walk-forward caller reuse per-day scaling across overlapping
    windows.
    """
    from .factors import DEFAULT_MAX_MISSING

    if max_missing is None:
        max_missing = DEFAULT_MAX_MISSING
    if n_days < 1:
        raise ValueError("window length must be >= 1")
    cal = panel.calendar
    t_end = cal.index_of(as_of) - TARGET_EXIT_OFFSET
    t_start = t_end - (n_days - 1)
    if t_start < MIN_FACTOR_DAY:
        first = MIN_FACTOR_DAY + (n_days - 1) + TARGET_EXIT_OFFSET
        if first < len(cal):
            raise ValueError(
                f"insufficient history for a {n_days}-day window at {as_of}; "
                f"first feasible as-of day is {cal.day_at(first)}"
            )
        raise ValueError(
            f"insufficient history for a {n_days}-day window at {as_of}; "
            f"the panel is too short for this window length"
        )

    def get_matrix(day: str) -> FactorMatrix:
        if matrices is None:
            return build_factor_matrix(panel, universe_at(panel, day), day, max_missing)
        if callable(matrices):
            return matrices(day)
        return matrices[day]

    parts: list[DaySamples] = []
    for t in range(t_start, t_end + 1):
        if day_cache is not None and t in day_cache:
            parts.append(day_cache[t])
            continue
        day = cal.day_at(t)
        samples = scale_day_samples(panel, get_matrix(day), t)
        if day_cache is not None:
            day_cache[t] = samples
        parts.append(samples)

    features = np.vstack([p.features for p in parts]) if parts else np.empty((0, N_FACTORS))
    targets = np.concatenate([p.targets for p in parts]) if parts else np.empty(0)
    stock_ids = tuple(s for p in parts for s in p.stocks)
    sample_days = tuple(p.day for p in parts for _ in p.stocks)
    return TrainingWindow(
        as_of=as_of,
        n_days=n_days,
        features=features,
        targets=targets,
        stock_ids=stock_ids,
        sample_days=sample_days,
    )
