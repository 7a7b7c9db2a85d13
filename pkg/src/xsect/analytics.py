"""Performance measures over backtest return series and holdings logs.

Annualization compounds to a 250-day year: an annualized return is
prod(1 + r_t) ** (250/T) - 1 and an annualized deviation is
sqrt(250/(T-1) * sum((r_t - mean)^2)). Ratios with a zero or undefined
denominator are reported as None (NA in files), never as a sentinel
number. Maximum drawdown is the deepest drop of the compounded wealth
path from its running peak, applied to the excess-return series for the
long strategy and to the long-short series itself.

One-way turnover at a rebalance is half the L1 distance between the
drifted old weights and the new weights over the union of their stocks;
per-rebalance values are averaged within each tranche and then across
the five tranches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .backtest import BacktestResult, RebalanceEvent

ANNUALIZATION_DAYS = 250

LONG_REPORT_COLUMNS = ("Model", "Alpha", "TE", "IR", "MaxDD", "TN")
LONG_SHORT_REPORT_COLUMNS = ("Model", "AR", "RISK", "R/R", "MaxDD", "TN")


def excess_series(portfolio: np.ndarray, benchmark: np.ndarray) -> np.ndarray:
    """Daily excess return of the portfolio over the benchmark."""
    portfolio = np.asarray(portfolio, dtype=float)
    benchmark = np.asarray(benchmark, dtype=float)
    if portfolio.shape != benchmark.shape:
        raise ValueError(
            f"series lengths differ: {portfolio.shape} vs {benchmark.shape}"
        )
    return portfolio - benchmark


def annualized_return(returns: np.ndarray) -> float:
    returns = np.asarray(returns, dtype=float)
    t = returns.size
    if t == 0:
        raise ValueError("empty return series")
    return float(np.prod(1.0 + returns) ** (ANNUALIZATION_DAYS / t) - 1.0)


def annualized_deviation(returns: np.ndarray) -> float | None:
    """sqrt(250/(T-1) sum((r - mean)^2)); None when T < 2."""
    returns = np.asarray(returns, dtype=float)
    t = returns.size
    if t < 2:
        return None
    mu = returns.mean()
    return float(np.sqrt(ANNUALIZATION_DAYS / (t - 1) * np.sum((returns - mu) ** 2)))


def annualized_alpha_te_ir(alpha_series: np.ndarray) -> tuple[float, float | None, float | None]:
    """(Alpha, TE, IR) of a daily excess-return series; IR is None when TE
    is zero or undefined."""
    alpha = annualized_return(alpha_series)
    te = annualized_deviation(alpha_series)
    ir = None if te is None or te == 0.0 else alpha / te
    return alpha, te, ir


def annualized_ar_risk_rr(longshort_series: np.ndarray) -> tuple[float, float | None, float | None]:
    """(AR, RISK, R/R) of the daily long-short series; same structure."""
    return annualized_alpha_te_ir(longshort_series)


def max_drawdown(returns: np.ndarray) -> float:
    """Largest drop of the compounded wealth path from its running peak."""
    returns = np.asarray(returns, dtype=float)
    if returns.size == 0:
        raise ValueError("empty return series")
    wealth = np.cumprod(1.0 + returns)
    peaks = np.maximum.accumulate(wealth)
    return float(min(0.0, np.min(wealth / peaks - 1.0)))


def cumulative_series(returns: np.ndarray) -> np.ndarray:
    """Compounded cumulative path prod(1 + r) - 1 per day."""
    return np.cumprod(1.0 + np.asarray(returns, dtype=float)) - 1.0


def one_way_turnover(
    pre: Mapping[str, float] | Iterable[tuple[str, float]],
    post: Mapping[str, float] | Iterable[tuple[str, float]],
) -> float:
    """Half the L1 distance between two weight vectors over their union."""
    pre = dict(pre)
    post = dict(post)
    stocks = set(pre) | set(post)
    return 0.5 * sum(abs(post.get(s, 0.0) - pre.get(s, 0.0)) for s in stocks)


def turnover(events: Sequence[RebalanceEvent]) -> tuple[float | None, float | None]:
    """(TN_long, TN_longshort) from the rebalance log.

    First entries (empty pre side) are not rebalances and are skipped.
    Per-rebalance turnover is averaged within each tranche, then across
    tranches; None when no tranche has completed a rebalance yet.
    """
    per_tranche: dict[tuple[int, str], list[float]] = {}
    for event in events:
        if not event.pre_weights:
            continue
        key = (event.tranche, event.side)
        per_tranche.setdefault(key, []).append(
            one_way_turnover(event.pre_weights, event.post_weights)
        )

    def side_mean(side: str) -> float | None:
        tranche_means = [
            float(np.mean(values)) for (_, s), values in per_tranche.items() if s == side
        ]
        return float(np.mean(tranche_means)) if tranche_means else None

    tn_long = side_mean("long")
    tn_short = side_mean("short")
    if tn_long is None or tn_short is None:
        return tn_long, None
    return tn_long, tn_long + tn_short


@dataclass(frozen=True)
class MetricsReport:
    """Every measure of the standard report tables for one model run."""

    alpha_ann: float
    te_ann: float | None
    ir: float | None
    ar_ann: float
    risk_ann: float | None
    rr: float | None
    maxdd_long: float
    maxdd_longshort: float
    tn_long: float | None
    tn_longshort: float | None
    n_days: int
    annualization: int = ANNUALIZATION_DAYS


def compute_report(result: BacktestResult, include_ramp_in: bool = False) -> MetricsReport:
    """MetricsReport over the result's series, ramp-in days excluded unless
    requested. The drawdown of the long strategy runs on its excess series."""
    start = 0 if include_ramp_in else result.first_all_live
    r_long = result.r_long[start:]
    r_bench = result.r_benchmark[start:]
    r_ls = result.r_longshort[start:]
    if r_long.size == 0:
        raise ValueError("no days left after the ramp-in cut; nothing to report")
    alpha_series = excess_series(r_long, r_bench)
    alpha, te, ir = annualized_alpha_te_ir(alpha_series)
    ar, risk, rr = annualized_ar_risk_rr(r_ls)
    tn_long, tn_longshort = turnover(result.events)
    return MetricsReport(
        alpha_ann=alpha,
        te_ann=te,
        ir=ir,
        ar_ann=ar,
        risk_ann=risk,
        rr=rr,
        maxdd_long=max_drawdown(alpha_series),
        maxdd_longshort=max_drawdown(r_ls),
        tn_long=tn_long,
        tn_longshort=tn_longshort,
        n_days=int(r_long.size),
    )


def _cell(value: float | None) -> str:
    return "NA" if value is None else repr(float(value))


def write_report_csv(rows: Sequence[tuple[str, MetricsReport]], path) -> None:
    """The two report tables, long then long-short, in one CSV file.

    Two header+rows blocks separated by a blank line: the first has the
    long-portfolio columns (Alpha, TE, IR, MaxDD, TN), the second the
    long-short columns (AR, RISK, R/R, MaxDD, TN), one row per model in
    the order given.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(LONG_REPORT_COLUMNS) + "\n")
        for name, m in rows:
            fh.write(
                f"{name},{_cell(m.alpha_ann)},{_cell(m.te_ann)},{_cell(m.ir)},"
                f"{_cell(m.maxdd_long)},{_cell(m.tn_long)}\n"
            )
        fh.write("\n")
        fh.write(",".join(LONG_SHORT_REPORT_COLUMNS) + "\n")
        for name, m in rows:
            fh.write(
                f"{name},{_cell(m.ar_ann)},{_cell(m.risk_ann)},{_cell(m.rr)},"
                f"{_cell(m.maxdd_longshort)},{_cell(m.tn_longshort)}\n"
            )


def read_report_csv(path) -> tuple[dict, dict]:
    """Parse the two blocks back into {model: {column: cell}} dicts."""
    text = open(path, encoding="utf-8").read()
    blocks = [b for b in text.split("\n\n") if b.strip()]
    if len(blocks) != 2:
        raise ValueError(f"{path}: expected two report blocks, found {len(blocks)}")
    out = []
    for block in blocks:
        lines = block.strip().split("\n")
        header = lines[0].split(",")
        rows = {}
        for line in lines[1:]:
            cells = line.split(",")
            rows[cells[0]] = dict(zip(header, cells))
        out.append(rows)
    return out[0], out[1]


def write_cumulative_csv(dates: Sequence[str], returns: np.ndarray, path) -> None:
    """Compounded cumulative path as date,value rows (plot-ready)."""
    path_values = cumulative_series(returns)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date,value\n")
        for day, value in zip(dates, path_values):
            fh.write(f"{day},{float(value)!r}\n")
