from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

from tradecontest.errors import (
    CsvFormatError,
    DuplicateBarError,
    MissingDataError,
    TemporalViolationError,
)
from tradecontest.market import (
    Bar,
    MarketStore,
    PlantedEffect,
    SyntheticSpec,
    business_days,
    generate_synthetic,
    ingest_csv,
    perturb_after,
    price_change,
    view_until,
    write_csv,
)

D = dt.date


def _bar(date, symbol="AAA", close=10.0):
    return Bar(date=date, symbol=symbol, open=close, high=close * 1.01,
               low=close * 0.99, close=close, volume=1000)


class TestBar:
    def test_rejects_low_above_high(self):
        with pytest.raises(ValueError):
            Bar(date=D(2025, 1, 2), symbol="AAA", open=10, high=9, low=11,
                close=10, volume=1)

    def test_rejects_nonpositive_close(self):
        with pytest.raises(ValueError):
            Bar(date=D(2025, 1, 2), symbol="AAA", open=1, high=1, low=0.5,
                close=-1, volume=1)

    def test_rejects_negative_volume(self):
        with pytest.raises(ValueError):
            Bar(date=D(2025, 1, 2), symbol="AAA", open=1, high=1, low=1,
                close=1, volume=-5)


class TestIngestCsv:
    def test_two_row_file(self, tmp_path):
        path = tmp_path / "bars.csv"
        path.write_text(
            "date,symbol,open,high,low,close,volume\n"
            "2025-01-02,AAA,10,10.5,9.5,10.2,100\n"
            "2025-01-03,AAA,10.2,10.8,10.0,10.4,120\n"
        )
        store = ingest_csv(path)
        assert len(list(store.iter_bars())) == 2
        assert store.calendar == (D(2025, 1, 2), D(2025, 1, 3))

    def test_low_above_high_names_line(self, tmp_path):
        path = tmp_path / "bars.csv"
        path.write_text(
            "date,symbol,open,high,low,close,volume\n"
            "2025-01-02,AAA,10,9.0,11.0,10,100\n"
        )
        with pytest.raises(CsvFormatError, match="line 2"):
            ingest_csv(path)

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "bars.csv"
        path.write_text(
            "date,symbol,open,high,low,close,volume\n"
            "2025-01-02,AAA,10,10.5,9.5,10.2,100\n"
            "2025-01-02,AAA,10,10.5,9.5,10.3,100\n"
        )
        with pytest.raises(DuplicateBarError, match="AAA"):
            ingest_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bars.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(CsvFormatError, match="header"):
            ingest_csv(path)

    def test_short_row_names_line(self, tmp_path):
        path = tmp_path / "bars.csv"
        path.write_text(
            "date,symbol,open,high,low,close,volume\n2025-01-02,AAA,10\n")
        with pytest.raises(CsvFormatError, match="line 2"):
            ingest_csv(path)

    def test_round_trip(self, tmp_path, tiny_store):
        path = tmp_path / "out.csv"
        write_csv(tiny_store, path)
        again = ingest_csv(path)
        assert list(again.iter_bars()) == list(tiny_store.iter_bars())


class TestGenerateSynthetic:
    def test_deterministic(self):
        spec = SyntheticSpec(n_symbols=4, n_days=30, seed=9, daily_vol=0.02)
        a = generate_synthetic(spec)
        b = generate_synthetic(spec)
        assert list(a.iter_bars()) == list(b.iter_bars())

    def test_zero_vol_constant_closes(self):
        spec = SyntheticSpec(n_symbols=2, n_days=8, seed=3, daily_vol=0.0)
        store = generate_synthetic(spec)
        closes = [store.close("SYM001", d) for d in store.calendar]
        assert closes == [100.0] * 8

    def test_limit_clamp(self):
        spec = SyntheticSpec(n_symbols=6, n_days=120, seed=5, daily_vol=0.15,
                             limit_pct=0.10)
        store = generate_synthetic(spec)
        hit = 0
        for sym in store.symbols:
            closes = np.array([store.close(sym, d) for d in store.calendar])
            rets = closes[1:] / closes[:-1] - 1.0
            assert np.all(np.abs(rets) <= 0.10 + 1e-12)
            hit += int(np.sum(np.abs(np.abs(rets) - 0.10) < 1e-12))
        assert hit > 0  # with vol 0.15 the clamp must actually bind

    def test_planted_drift_raises_mean_return(self):
        spec = SyntheticSpec(
            n_symbols=5, n_days=100, seed=21, daily_vol=0.01,
            planted_effects=(PlantedEffect("SYM002", 0, 0.02),),
        )
        store = generate_synthetic(spec)

        def mean_ret(sym):
            closes = np.array([store.close(sym, d) for d in store.calendar])
            return float(np.mean(closes[1:] / closes[:-1] - 1.0))

        planted = mean_ret("SYM002")
        others = [mean_ret(s) for s in store.symbols if s != "SYM002"]
        assert planted > max(others)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            SyntheticSpec(n_symbols=0, n_days=5, seed=1, daily_vol=0.01)
        with pytest.raises(ValueError):
            SyntheticSpec(n_symbols=1, n_days=5, seed=1, daily_vol=0.01, limit_pct=0.0)


class TestPriceChange:
    def test_forward_return(self):
        store = MarketStore([_bar(D(2025, 1, 2), close=10.0),
                             _bar(D(2025, 1, 3), close=10.5)])
        assert price_change(store, "AAA", D(2025, 1, 2)) == pytest.approx(0.05)

    def test_flat(self):
        store = MarketStore([_bar(D(2025, 1, 2), close=10.0),
                             _bar(D(2025, 1, 3), close=10.0)])
        assert price_change(store, "AAA", D(2025, 1, 2)) == 0.0

    def test_last_day_errors(self):
        store = MarketStore([_bar(D(2025, 1, 2)), _bar(D(2025, 1, 3))])
        with pytest.raises(MissingDataError):
            price_change(store, "AAA", D(2025, 1, 3))

    def test_missing_symbol_bar(self):
        store = MarketStore([_bar(D(2025, 1, 2)), _bar(D(2025, 1, 3)),
                             _bar(D(2025, 1, 3), symbol="BBB")])
        with pytest.raises(MissingDataError):
            price_change(store, "BBB", D(2025, 1, 2))


class TestViewUntil:
    def test_query_within_cutoff(self, tiny_store):
        t5 = tiny_store.calendar[5]
        view = view_until(tiny_store, t5)
        assert view.get_bar("SYM000", tiny_store.calendar[3]).close > 0

    def test_query_past_cutoff_raises(self, tiny_store):
        view = view_until(tiny_store, tiny_store.calendar[5])
        with pytest.raises(TemporalViolationError):
            view.get_bar("SYM000", tiny_store.calendar[6])

    def test_first_day_boundary(self, tiny_store):
        first = tiny_store.calendar[0]
        view = view_until(tiny_store, first)
        assert view.get_bar("SYM001", first).date == first

    def test_calendar_truncated(self, tiny_store):
        view = view_until(tiny_store, tiny_store.calendar[4])
        assert view.calendar == tiny_store.calendar[:5]

    def test_fuzzed_queries_never_leak(self, tiny_store):
        rng = np.random.default_rng(0)
        cal = tiny_store.calendar
        for _ in range(200):
            cut = int(rng.integers(len(cal)))
            view = view_until(tiny_store, cal[cut])
            q = int(rng.integers(len(cal)))
            sym = tiny_store.symbols[int(rng.integers(len(tiny_store.symbols)))]
            if q > cut:
                with pytest.raises(TemporalViolationError):
                    view.get_bar(sym, cal[q])
            else:
                assert view.get_bar(sym, cal[q]).date == cal[q]

    def test_trailing_returns_window(self, tiny_store):
        view = view_until(tiny_store, tiny_store.calendar[6])
        rets = view.trailing_returns("SYM000", 3)
        closes = [tiny_store.close("SYM000", d) for d in tiny_store.calendar[3:7]]
        expected = [closes[i + 1] / closes[i] - 1 for i in range(3)]
        assert rets == pytest.approx(expected)


class TestPerturbAfter:
    def test_prefix_unchanged(self, tiny_store):
        cut = tiny_store.calendar[5]
        other = perturb_after(tiny_store, cut, seed=3)
        for bar in tiny_store.iter_bars():
            if bar.date <= cut:
                assert other.get_bar(bar.symbol, bar.date) == bar
            else:
                assert other.get_bar(bar.symbol, bar.date).close != bar.close


def test_business_days_skips_weekends():
    days = business_days(D(2024, 1, 5), 4)  # Friday start
    assert days == [D(2024, 1, 5), D(2024, 1, 8), D(2024, 1, 9), D(2024, 1, 10)]


def test_duplicate_bar_in_store():
    with pytest.raises(DuplicateBarError):
        MarketStore([_bar(D(2025, 1, 2)), _bar(D(2025, 1, 2))])
