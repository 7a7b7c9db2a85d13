"""The walk-forward loop: staggered tranches, daily marks, periodic refits.

Five tranches cycle on a five-business-day schedule. On span day i the
model is refit if i is a multiple of five (on data through the previous
close), then tranche i mod 5 re-enters at today's open using scores
computed from yesterday's close, and finally every live tranche is marked:
open-to-close on its entry day, close-to-close otherwise. The overnight
gap between a tranche's exit close and re-entry open is deliberately
unmarked, so a tranche's compounded block return equals the tradable
5-day open-to-close return its model was trained to predict.

The benchmark is the equal-weighted scoring universe held on the same
staggered schedule, so excess returns compare like-for-like mark timing.

Each book's weights are renormalized by its own return after every mark;
a delisted holding freezes at its last close (zero return, weight becomes
a cash line) until the tranche's next rebalance. Weight conservation, the
long-short identity, and the refresh cadence are asserted on every step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .factors import DEFAULT_MAX_MISSING, FactorMatrix, build_factor_matrix
from .market_data import MarketPanel, universe_at
from .models import fit_predictor
from .preprocess import (
    MIN_FACTOR_DAY,
    TARGET_EXIT_OFFSET,
    DaySamples,
    TrainingWindow,
    assemble_window,
    scale_matrix,
)

logger = logging.getLogger(__name__)

N_TRANCHES = 5
MODEL_REFRESH_DAYS = 5
WEIGHT_TOLERANCE = 1e-12


class BacktestInvariantError(RuntimeError):
    """A structural invariant broke during the daily loop."""


@dataclass(frozen=True)
class ScoreVector:
    """Model scores on the day's universe after factor exclusions."""

    day: str
    stocks: tuple[str, ...]
    scores: np.ndarray


@dataclass(frozen=True)
class RebalanceEvent:
    """Pre-rebalance drifted weights and post-rebalance entry weights.

    ``pre_weights`` holds surviving stock lines only (a delisted holding's
    weight is cash by rebalance time) and is empty on a tranche's first
    entry.
    """

    tranche: int
    date: str
    side: str
    pre_weights: tuple[tuple[str, float], ...]
    post_weights: tuple[tuple[str, float], ...]


@dataclass
class BacktestResult:
    dates: tuple[str, ...]
    r_long: np.ndarray
    r_short: np.ndarray
    r_longshort: np.ndarray
    r_benchmark: np.ndarray
    n_live: np.ndarray
    events: tuple[RebalanceEvent, ...]
    model_refresh_dates: tuple[str, ...]
    first_all_live: int
    kind: str = ""
    n_window: int = 0
    seed: int = 0

    @property
    def n_days(self) -> int:
        return len(self.dates)


class FeatureBank:
    """Per-day cache of factor matrices, scaled features, and samples.

    Everything cached is a pure function of the immutable panel, so reuse
    across overlapping windows and scoring days cannot leak information
    across time.
    """

    def __init__(self, panel: MarketPanel, max_missing: int = DEFAULT_MAX_MISSING):
        self.panel = panel
        self.max_missing = max_missing
        self._matrices: dict[str, FactorMatrix] = {}
        self._scaled: dict[str, tuple[tuple[str, ...], np.ndarray]] = {}
        self._day_samples: dict[int, DaySamples] = {}

    def matrix(self, day: str):
        if day not in self._matrices:
            universe = universe_at(self.panel, day)
            self._matrices[day] = build_factor_matrix(
                self.panel, universe, day, self.max_missing
            )
        return self._matrices[day]

    def scaled_features(self, day: str) -> tuple[tuple[str, ...], np.ndarray]:
        if day not in self._scaled:
            matrix = self.matrix(day)
            self._scaled[day] = (matrix.stocks, scale_matrix(matrix.values))
        return self._scaled[day]

    def scores(self, predictor, day: str) -> ScoreVector:
        stocks, features = self.scaled_features(day)
        return ScoreVector(
            day=day, stocks=stocks, scores=np.asarray(predictor.predict(features), dtype=float)
        )

    def window(self, as_of: str, n_days: int) -> TrainingWindow:
        return assemble_window(
            self.panel,
            self.matrix,
            as_of,
            n_days,
            max_missing=self.max_missing,
            day_cache=self._day_samples,
        )


def score_universe(
    predictor, panel: MarketPanel, day: str, max_missing: int = DEFAULT_MAX_MISSING
) -> ScoreVector:
    """Build the day's factor matrix, rank-scale it, and apply the model."""
    matrix = build_factor_matrix(panel, universe_at(panel, day), day, max_missing)
    features = scale_matrix(matrix.values)
    return ScoreVector(
        day=day, stocks=matrix.stocks, scores=np.asarray(predictor.predict(features), dtype=float)
    )


def form_quintiles(
    scores: ScoreVector, allow_small_universe: bool = False
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Top and bottom one-fifth by score (q = floor(n/5), equal weights).

    Ties break by canonical stock order: the full ranking sorts on
    (-score, stock_id), the long side takes the head, the short side the
    tail. ``allow_small_universe`` forces q = 1 below five stocks (test
    mode).
    """
    n = len(scores.stocks)
    if n < 5:
        if not (allow_small_universe and n >= 1):
            raise ValueError(f"universe of {n} stocks is too small to form quintiles")
        q = 1
    else:
        q = n // 5
    order = sorted(range(n), key=lambda j: (-scores.scores[j], scores.stocks[j]))
    long = tuple(sorted(scores.stocks[j] for j in order[:q]))
    short = tuple(sorted(scores.stocks[j] for j in order[n - q :]))
    return long, short


class _Book:
    """One side of one tranche: holdings entered at a single open."""

    __slots__ = ("rows", "weights", "alive", "entry_day")

    def __init__(self, rows: np.ndarray, weights: np.ndarray, entry_day: int):
        self.rows = rows
        self.weights = weights
        self.alive = np.ones(rows.size, dtype=bool)
        self.entry_day = entry_day

    def mark(self, panel: MarketPanel, d: int) -> float:
        """One day's return; updates drifted weights and delisting state."""
        if self.rows.size == 0:
            return 0.0
        base = panel.open[self.rows, d] if d == self.entry_day else panel.close[self.rows, d - 1]
        cur = panel.close[self.rows, d]
        valid = self.alive & np.isfinite(cur) & np.isfinite(base)
        returns = np.zeros(self.rows.size)
        returns[valid] = cur[valid] / base[valid] - 1.0
        self.alive &= np.isfinite(cur)
        total = float(self.weights @ returns)
        self.weights = self.weights * (1.0 + returns) / (1.0 + total)
        if abs(self.weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise BacktestInvariantError(
                f"weights sum to {self.weights.sum()!r} after marking day index {d}"
            )
        return total

    def stock_lines(self, panel: MarketPanel) -> tuple[tuple[str, float], ...]:
        """Surviving (stock, weight) lines, canonical order; cash omitted."""
        lines = [
            (panel.stocks[int(row)], float(w))
            for row, w, ok in zip(self.rows, self.weights, self.alive)
            if ok
        ]
        return tuple(sorted(lines))


def _enter(panel: MarketPanel, stock_ids: tuple[str, ...], d: int, label: str) -> _Book:
    rows = np.array([panel.stock_index(s) for s in stock_ids], dtype=np.intp)
    has_open = np.isfinite(panel.open[rows, d])
    if not has_open.all():
        skipped = [stock_ids[i] for i in np.flatnonzero(~has_open)]
        logger.warning(
            "%s: %s entry skipped %d stocks with no open price: %s",
            panel.calendar.day_at(d), label, len(skipped), ", ".join(skipped),
        )
        rows = rows[has_open]
    if rows.size == 0:
        logger.warning("%s: %s entry is empty (all cash)", panel.calendar.day_at(d), label)
        return _Book(rows, np.empty(0), d)
    return _Book(rows, np.full(rows.size, 1.0 / rows.size), d)


@dataclass
class _Tranche:
    index: int
    long: _Book | None = None
    short: _Book | None = None
    bench: _Book | None = None

    @property
    def live(self) -> bool:
        return self.long is not None


def first_feasible_entry_index(n_window: int) -> int:
    """Earliest calendar index that can host an entry: the refit on that
    morning trains on a full window of factor-complete days."""
    return MIN_FACTOR_DAY + n_window + TARGET_EXIT_OFFSET


def run_backtest(
    panel: MarketPanel,
    kind: str,
    config,
    span: tuple[str | None, str | None] | None = None,
    n_window: int = 250,
    seed: int = 0,
    max_missing: int = DEFAULT_MAX_MISSING,
    allow_small_universe: bool = False,
) -> BacktestResult:
    """Walk the span day by day; fully deterministic given the seed.

    ``span`` is (first entry day, last entry day); None bounds default to
    the first feasible day and the final calendar day. An explicitly empty
    span returns an empty result; an explicit start before feasibility is
    an error naming the first feasible day.
    """
    cal = panel.calendar
    start, end = span if span is not None else (None, None)
    feasible = first_feasible_entry_index(n_window)
    e1 = cal.index_of(end) if end is not None else panel.n_days - 1
    if start is not None:
        e0 = cal.index_of(start)
        if e0 <= e1 and e0 < feasible:
            if feasible < panel.n_days:
                raise ValueError(
                    f"span starts at {start} but the {n_window}-day window plus factor "
                    f"warm-up needs {cal.day_at(feasible)} or later"
                )
            raise ValueError(
                f"span starts at {start} but the panel is too short for a "
                f"{n_window}-day window and its factor warm-up"
            )
    else:
        e0 = feasible
        if e0 > e1:
            raise ValueError(
                f"panel is too short for a {n_window}-day window plus factor warm-up; "
                f"no feasible entry day exists"
            )

    n_span = max(0, e1 - e0 + 1)
    dates = tuple(cal.day_at(d) for d in range(e0, e0 + n_span))
    r_long = np.zeros(n_span)
    r_short = np.zeros(n_span)
    r_bench = np.zeros(n_span)
    n_live = np.zeros(n_span, dtype=np.int64)
    events: list[RebalanceEvent] = []
    refresh_dates: list[str] = []

    bank = FeatureBank(panel, max_missing)
    tranches = [_Tranche(index=k) for k in range(N_TRANCHES)]
    model = None

    for i in range(n_span):
        d = e0 + i
        day = cal.day_at(d)

        if i % MODEL_REFRESH_DAYS == 0:
            as_of = cal.day_at(d - 1)
            window = bank.window(as_of, n_window)
            model = fit_predictor(kind, window, config, seed)
            refresh_dates.append(day)
            logger.debug("%s: refit %s on %d samples (as of %s)", day, kind, window.n_samples, as_of)

        tranche = tranches[i % N_TRANCHES]
        score_day = cal.day_at(d - 1)
        scores = bank.scores(model, score_day)
        long_ids, short_ids = form_quintiles(scores, allow_small_universe)
        bench_ids = universe_at(panel, score_day).stocks

        new_long = _enter(panel, long_ids, d, f"tranche {tranche.index} long")
        new_short = _enter(panel, short_ids, d, f"tranche {tranche.index} short")
        new_bench = _enter(panel, bench_ids, d, f"tranche {tranche.index} benchmark")
        for side, old, new in (("long", tranche.long, new_long), ("short", tranche.short, new_short)):
            events.append(
                RebalanceEvent(
                    tranche=tranche.index,
                    date=day,
                    side=side,
                    pre_weights=old.stock_lines(panel) if old is not None else (),
                    post_weights=new.stock_lines(panel),
                )
            )
        tranche.long, tranche.short, tranche.bench = new_long, new_short, new_bench

        live_long: list[float] = []
        live_short: list[float] = []
        live_bench: list[float] = []
        for t in tranches:
            if not t.live:
                continue
            live_long.append(t.long.mark(panel, d))
            live_short.append(t.short.mark(panel, d))
            live_bench.append(t.bench.mark(panel, d))
        if not live_long:
            raise BacktestInvariantError(f"no live tranche on {day}")
        n_live[i] = len(live_long)
        expected_live = min(i + 1, N_TRANCHES)
        if n_live[i] != expected_live:
            raise BacktestInvariantError(
                f"{day}: {n_live[i]} live tranches, expected {expected_live}"
            )
        r_long[i] = float(np.mean(live_long))
        r_short[i] = float(np.mean(live_short))
        r_bench[i] = float(np.mean(live_bench))

    result = BacktestResult(
        dates=dates,
        r_long=r_long,
        r_short=r_short,
        r_longshort=r_long - r_short,
        r_benchmark=r_bench,
        n_live=n_live,
        events=tuple(events),
        model_refresh_dates=tuple(refresh_dates),
        first_all_live=min(N_TRANCHES - 1, n_span),
        kind=kind,
        n_window=n_window,
        seed=seed,
    )
    _check_schedule(result)
    return result


def _check_schedule(result: BacktestResult) -> None:
    """Refresh cadence and one-rebalance-per-day, asserted post hoc."""
    date_pos = {day: i for i, day in enumerate(result.dates)}
    refresh_idx = [date_pos[day] for day in result.model_refresh_dates]
    if any(b - a != MODEL_REFRESH_DAYS for a, b in zip(refresh_idx, refresh_idx[1:])):
        raise BacktestInvariantError("model refresh cadence is not every 5 business days")
    per_day: dict[str, int] = {}
    for event in result.events:
        if event.side == "long":
            per_day[event.date] = per_day.get(event.date, 0) + 1
    if any(count != 1 for count in per_day.values()):
        raise BacktestInvariantError("more than one tranche rebalanced on a single day")


def write_returns_csv(result: BacktestResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date,R_long,R_short,R_longshort,R_benchmark\n")
        for i, day in enumerate(result.dates):
            fh.write(
                f"{day},{float(result.r_long[i])!r},{float(result.r_short[i])!r},"
                f"{float(result.r_longshort[i])!r},{float(result.r_benchmark[i])!r}\n"
            )


def write_holdings_csv(result: BacktestResult, path, pre: bool = False) -> None:
    """Post-entry holdings log; with ``pre`` the drifted pre-rebalance
    weights instead (the other half of the turnover inputs)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date,tranche,side,stock_id,weight\n")
        for event in result.events:
            lines = event.pre_weights if pre else event.post_weights
            for stock, weight in lines:
                fh.write(f"{event.date},{event.tranche},{event.side},{stock},{weight!r}\n")


def read_returns_csv(path) -> tuple[tuple[str, ...], dict[str, np.ndarray]]:
    dates: list[str] = []
    series: dict[str, list[float]] = {
        "R_long": [], "R_short": [], "R_longshort": [], "R_benchmark": []
    }
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "date,R_long,R_short,R_longshort,R_benchmark":
            raise ValueError(f"{path}: unexpected returns header {header!r}")
        for line in fh:
            day, *values = line.rstrip("\n").split(",")
            dates.append(day)
            for key, value in zip(series, values):
                series[key].append(float(value))
    return tuple(dates), {k: np.asarray(v) for k, v in series.items()}


def read_rebalance_events(holdings_path, pre_path=None) -> tuple[RebalanceEvent, ...]:
    """Rebuild turnover inputs from the holdings logs.

    Events are keyed by (date, tranche, side) in file order; an event
    missing from the pre file (or with no pre file at all) has empty
    pre-weights.
    """

    def read_lines(path):
        grouped: dict[tuple[str, int, str], list[tuple[str, float]]] = {}
        order: list[tuple[str, int, str]] = []
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if header != "date,tranche,side,stock_id,weight":
                raise ValueError(f"{path}: unexpected holdings header {header!r}")
            for line in fh:
                day, tranche, side, stock, weight = line.rstrip("\n").split(",")
                key = (day, int(tranche), side)
                if key not in grouped:
                    grouped[key] = []
                    order.append(key)
                grouped[key].append((stock, float(weight)))
        return grouped, order

    post, order = read_lines(holdings_path)
    pre, _ = read_lines(pre_path) if pre_path is not None else ({}, [])
    return tuple(
        RebalanceEvent(
            tranche=key[1],
            date=key[0],
            side=key[2],
            pre_weights=tuple(pre.get(key, ())),
            post_weights=tuple(post[key]),
        )
        for key in order
    )
