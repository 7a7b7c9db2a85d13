import math

import numpy as np
import pytest

from xsect.analytics import (
    annualized_alpha_te_ir,
    annualized_ar_risk_rr,
    compute_report,
    cumulative_series,
    excess_series,
    max_drawdown,
    one_way_turnover,
    read_report_csv,
    turnover,
    write_cumulative_csv,
    write_report_csv,
)
from xsect.backtest import RebalanceEvent, run_backtest
from xsect.models import RidgeConfig

from conftest import simple_panel


# ---------------------------------------------------------------------------
# independent loop transcriptions of the performance formulas
# ---------------------------------------------------------------------------

def oracle_annualized_return(series):
    wealth = 1.0
    for r in series:
        wealth *= 1.0 + r
    return wealth ** (250.0 / len(series)) - 1.0


def oracle_annualized_deviation(series):
    t = len(series)
    mu = sum(series) / t
    return math.sqrt(250.0 / (t - 1) * sum((r - mu) ** 2 for r in series))


def oracle_max_drawdown(series):
    wealth, peak, worst = 1.0, 1.0, 0.0
    for r in series:
        wealth *= 1.0 + r
        peak = max(peak, wealth)
        worst = min(worst, wealth / peak - 1.0)
    return worst


class TestExcessSeries:
    def test_equal_series_zero(self):
        np.testing.assert_array_equal(excess_series([0.01, 0.02], [0.01, 0.02]), [0.0, 0.0])

    def test_elementwise_difference(self):
        np.testing.assert_allclose(excess_series([0.01], [0.002]), [0.008])

    def test_empty(self):
        assert excess_series([], []).size == 0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            excess_series([0.01], [0.01, 0.02])


class TestAnnualized:
    def test_zero_series(self):
        alpha, te, ir = annualized_alpha_te_ir(np.zeros(10))
        assert alpha == 0.0 and te == 0.0 and ir is None

    def test_two_point_fixture(self):
        alpha, te, ir = annualized_alpha_te_ir(np.array([0.01, -0.01]))
        expected_alpha = (1.01 * 0.99) ** 125 - 1.0
        expected_te = math.sqrt(250.0 * (0.0001 + 0.0001))
        assert alpha == pytest.approx(expected_alpha, rel=1e-12)
        assert te == pytest.approx(expected_te, rel=1e-12)
        assert ir == pytest.approx(expected_alpha / expected_te, rel=1e-12)
        assert expected_alpha == pytest.approx(-0.012424, abs=5e-7)
        assert expected_te == pytest.approx(0.22361, abs=5e-6)

    def test_constant_series_identity(self):
        c = 0.004
        alpha, te, ir = annualized_alpha_te_ir(np.full(250, c))
        assert alpha == pytest.approx((1 + c) ** 250 - 1, rel=1e-12)
        assert te == pytest.approx(0.0, abs=1e-12)

    def test_single_point_deviation_undefined(self):
        ar, risk, rr = annualized_ar_risk_rr(np.array([0.02]))
        assert ar == pytest.approx(1.02**250 - 1, rel=1e-12)
        assert risk is None and rr is None

    def test_matches_oracle_on_random_series(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            series = rng.normal(0.0, 0.01, size=rng.integers(2, 500))
            alpha, te, _ = annualized_alpha_te_ir(series)
            assert alpha == pytest.approx(oracle_annualized_return(series), rel=1e-12)
            assert te == pytest.approx(oracle_annualized_deviation(series), rel=1e-12)


class TestMaxDrawdown:
    def test_monotone_wealth_has_zero_drawdown(self):
        assert max_drawdown([0.01, 0.0, 0.02]) == 0.0

    def test_hand_computed_fixture(self):
        assert max_drawdown([0.1, -0.2, 0.05]) == pytest.approx(0.88 / 1.1 - 1.0, rel=1e-12)
        assert max_drawdown([0.1, -0.2, 0.05]) == pytest.approx(-0.2, rel=1e-12)

    def test_single_loss(self):
        assert max_drawdown([-0.5]) == pytest.approx(-0.5)

    def test_bounds_and_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            series = rng.uniform(-0.5, 0.5, size=rng.integers(1, 60))
            dd = max_drawdown(series)
            assert -1.0 <= dd <= 0.0
            assert dd == pytest.approx(oracle_max_drawdown(series), abs=1e-12)

    def test_monotone_under_suffix_extension(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            series = rng.uniform(-0.3, 0.3, size=30)
            drawdowns = [max_drawdown(series[: k + 1]) for k in range(30)]
            assert all(a >= b for a, b in zip(drawdowns, drawdowns[1:]))


class TestCumulative:
    def test_zeros(self):
        np.testing.assert_array_equal(cumulative_series(np.zeros(5)), np.zeros(5))

    def test_compounding(self):
        np.testing.assert_allclose(cumulative_series([0.1, 0.1]), [0.1, 0.21], rtol=1e-12)

    def test_single(self):
        np.testing.assert_allclose(cumulative_series([0.03]), [0.03])


def event(tranche, side, pre, post, date="2020-06-01"):
    return RebalanceEvent(
        tranche=tranche, date=date, side=side,
        pre_weights=tuple(sorted(pre.items())), post_weights=tuple(sorted(post.items())),
    )


class TestTurnover:
    def test_identical_holdings_zero(self):
        assert one_way_turnover({"A": 0.5, "B": 0.5}, {"A": 0.5, "B": 0.5}) == 0.0

    def test_complete_replacement_is_one(self):
        assert one_way_turnover({"A": 0.5, "B": 0.5}, {"C": 0.5, "D": 0.5}) == pytest.approx(1.0)

    def test_drift_fixture(self):
        # (0.5, 0.5) drifts under (+10%, 0%) to (11/21, 10/21), rebalanced back
        pre = {"A": 0.55 / 1.05, "B": 0.50 / 1.05}
        post = {"A": 0.5, "B": 0.5}
        tn = one_way_turnover(pre, post)
        assert tn == pytest.approx(1.0 / 42.0, rel=1e-12)
        assert tn == pytest.approx(0.0238095238, abs=1e-9)

    def test_first_entries_are_skipped(self):
        events = [event(0, "long", {}, {"A": 1.0}), event(0, "short", {}, {"B": 1.0})]
        assert turnover(events) == (None, None)

    def test_averaged_within_then_across_tranches(self):
        events = [
            event(0, "long", {"A": 1.0}, {"A": 1.0}),          # 0.0
            event(0, "long", {"A": 1.0}, {"B": 1.0}),          # 1.0
            event(1, "long", {"A": 0.5, "B": 0.5}, {"A": 1.0}),  # 0.5
            event(0, "short", {"A": 1.0}, {"B": 1.0}),         # 1.0
            event(1, "short", {"A": 1.0}, {"A": 1.0}),         # 0.0
        ]
        tn_long, tn_ls = turnover(events)
        assert tn_long == pytest.approx((0.5 + 0.5) / 2)  # tranche means 0.5, 0.5
        assert tn_ls == pytest.approx(tn_long + (1.0 + 0.0) / 2)


class TestComputeReport:
    def test_report_on_real_run_and_invariants(self):
        panel = simple_panel(n_stocks=10, n_days=110, seed=6)
        result = run_backtest(panel, "ridge", RidgeConfig(alpha=1.0), n_window=10)
        report = compute_report(result)
        assert report.n_days == result.n_days - 4
        if report.te_ann and report.te_ann > 0:
            assert report.ir == pytest.approx(report.alpha_ann / report.te_ann, rel=1e-12)
        if report.risk_ann and report.risk_ann > 0:
            assert report.rr == pytest.approx(report.ar_ann / report.risk_ann, rel=1e-12)
        assert -1.0 <= report.maxdd_long <= 0.0
        assert -1.0 <= report.maxdd_longshort <= 0.0
        assert 0.0 <= report.tn_long <= 1.0
        assert 0.0 <= report.tn_longshort <= 2.0
        assert report.annualization == 250

    def test_ramp_in_inclusion_flag(self):
        panel = simple_panel(n_stocks=10, n_days=110, seed=6)
        result = run_backtest(panel, "ridge", RidgeConfig(alpha=1.0), n_window=10)
        with_ramp = compute_report(result, include_ramp_in=True)
        assert with_ramp.n_days == result.n_days


class TestReportFiles:
    def test_report_csv_round_trip(self, tmp_path):
        report = compute_report(
            run_backtest(simple_panel(n_stocks=10, n_days=110, seed=7),
                         "ridge", RidgeConfig(alpha=1.0), n_window=10)
        )
        path = tmp_path / "report.csv"
        write_report_csv([("RR2", report)], path)
        long_block, ls_block = read_report_csv(path)
        assert list(long_block["RR2"]) == ["Model", "Alpha", "TE", "IR", "MaxDD", "TN"]
        assert list(ls_block["RR2"]) == ["Model", "AR", "RISK", "R/R", "MaxDD", "TN"]
        assert float(long_block["RR2"]["Alpha"]) == report.alpha_ann
        assert float(ls_block["RR2"]["AR"]) == report.ar_ann

    def test_na_cells_for_undefined_ratios(self, tmp_path):
        from xsect.analytics import MetricsReport

        report = MetricsReport(
            alpha_ann=0.0, te_ann=0.0, ir=None, ar_ann=0.0, risk_ann=None, rr=None,
            maxdd_long=0.0, maxdd_longshort=0.0, tn_long=None, tn_longshort=None,
            n_days=1,
        )
        path = tmp_path / "report.csv"
        write_report_csv([("RR1", report)], path)
        long_block, ls_block = read_report_csv(path)
        assert long_block["RR1"]["IR"] == "NA"
        assert ls_block["RR1"]["RISK"] == "NA"

    def test_cumulative_csv(self, tmp_path):
        path = tmp_path / "cumulative.csv"
        write_cumulative_csv(("2020-01-01", "2020-01-02"), np.array([0.1, 0.1]), path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "date,value"
        assert lines[1] == "2020-01-01,0.1"
        assert float(lines[2].split(",")[1]) == pytest.approx(0.21, rel=1e-12)
