import datetime as dt
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from semistatic.errors import DataError, DegenerateTenor, MissingData, NoLiquidCandidates
from semistatic.market_data import (
    CALL,
    PUT,
    MarketDataStore,
    MarketSnapshot,
    OptionQuote,
    atm_strike,
    classify_moneyness,
    implied_carry,
    load_options,
    select_candidates,
)
from .conftest import T0, T1, T2, make_snapshot


def quote(strike, kind, volume, oi, close=1.0, expiry=T1):
    return OptionQuote(T0, expiry, kind, strike, close, volume, oi)


def snapshot_of(quotes, spot=100.0, rate=0.0, futures=None):
    return MarketSnapshot(
        as_of=T0, spot=spot, futures_close=futures or {},
        risk_free_rate=rate, quotes=quotes, weekly_expiry=T1, monthly_expiry=T2,
    )


class TestImpliedCarry:
    def test_flat_future_zero_rate(self):
        snap = snapshot_of([], futures={T1: 100.0})
        q, r_prime = implied_carry(snap, T1)
        assert q == pytest.approx(0.0, abs=1e-15)
        assert r_prime == pytest.approx(0.0, abs=1e-15)

    def test_pure_carry(self):
        tau = (T1 - T0).days / 365.0
        snap = snapshot_of([], rate=0.05, futures={T1: 100.0 * math.exp(0.05 * tau)})
        q, _ = implied_carry(snap, T1)
        assert q == pytest.approx(0.0, abs=1e-12)

    def test_golden_against_forward_inversion(self):
        # 30-day expiry fixture; oracle inverts F = S e^{(r-q) tau} numerically
        expiry = T0 + dt.timedelta(days=30)
        snap = MarketSnapshot(
            as_of=T0, spot=100.0, futures_close={expiry: 100.5}, risk_free_rate=0.05,
            quotes=[], weekly_expiry=T1, monthly_expiry=T2,
        )
        q, r_prime = implied_carry(snap, expiry)
        tau = 30 / 365.0
        oracle = brentq(lambda qq: 100.0 * math.exp((0.05 - qq) * tau) - 100.5, -1.0, 1.0, xtol=1e-14)
        assert q == pytest.approx(oracle, abs=1e-12)
        assert q == pytest.approx(0.05 - math.log(1.005) * 365.0 / 30.0, abs=1e-12)
        assert r_prime == pytest.approx(0.05 - q, abs=1e-15)

    def test_round_trip_property(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            spot = rng.uniform(50, 20000)
            future = spot * rng.uniform(0.95, 1.05)
            rate = rng.uniform(-0.01, 0.1)
            expiry = T0 + dt.timedelta(days=int(rng.integers(1, 400)))
            snap = MarketSnapshot(
                as_of=T0, spot=spot, futures_close={expiry: future}, risk_free_rate=rate,
                quotes=[], weekly_expiry=expiry, monthly_expiry=expiry,
            )
            q, _ = implied_carry(snap, expiry)
            tau = (expiry - T0).days / 365.0
            assert spot * math.exp((rate - q) * tau) == pytest.approx(future, rel=1e-12)

    def test_missing_future(self):
        with pytest.raises(MissingData):
            implied_carry(snapshot_of([]), T1)

    def test_degenerate_tenor(self):
        snap = MarketSnapshot(
            as_of=T0, spot=100.0, futures_close={T0: 100.0}, risk_free_rate=0.0,
            quotes=[], weekly_expiry=T0, monthly_expiry=T0,
        )
        with pytest.raises(DegenerateTenor):
            implied_carry(snap, T0)


class TestClassifyMoneyness:
    @pytest.mark.parametrize(
        "spot,strike,kind,expected",
        [
            (100.0, 100.0, CALL, "ATM"),
            (99.0, 110.0, CALL, "OTM"),
            (99.0, 110.0, PUT, "ITM"),
            (110.0, 100.0, CALL, "ITM"),
            (110.0, 100.0, PUT, "OTM"),
        ],
    )
    def test_buckets(self, spot, strike, kind, expected):
        assert classify_moneyness(spot, strike, kind) == expected

    def test_mirror_symmetry(self):
        rng = np.random.default_rng(3)
        flip = {"ATM": "ATM", "ITM": "OTM", "OTM": "ITM"}
        for _ in range(200):
            spot = rng.uniform(50, 200)
            strike = spot * rng.uniform(0.7, 1.4)
            assert classify_moneyness(spot, strike, PUT) == flip[classify_moneyness(spot, strike, CALL)]

    def test_atm_tie_breaks_low(self):
        # |99/90 - 1| == |99/110 - 1| == 0.1
        assert atm_strike(99.0, [90.0, 110.0]) == 90.0


class TestSelectCandidates:
    def test_enumerated_filter(self):
        # volumes {10,20,30,40} -> joint median 25; open interest paired so
        # the two high-volume rows also clear the OI median of 25:
        #   (vol, oi): (10,10) (20,20) (30,40) (40,30)
        # strict > keeps exactly the 30- and 40-volume OTM calls
        quotes = [
            quote(101.0, CALL, 10, 10),
            quote(102.0, CALL, 20, 20),
            quote(103.0, CALL, 30, 40),
            quote(104.0, CALL, 40, 30),
        ]
        result = select_candidates(snapshot_of(quotes))
        assert result.instruments == [(103.0, CALL), (104.0, CALL)]
        assert result.p == 2

    def test_boundary_is_strict(self):
        with pytest.raises(NoLiquidCandidates):
            select_candidates(snapshot_of([quote(100.0, CALL, 50, 50)]))

    def test_all_itm_rejected(self):
        quotes = [
            quote(50.0, CALL, 10, 10),
            quote(55.0, CALL, 20, 20),
            quote(60.0, CALL, 30, 30),
            quote(65.0, CALL, 40, 40),
        ]
        with pytest.raises(NoLiquidCandidates):
            select_candidates(snapshot_of(quotes))

    def test_output_subset_of_input(self, flat_snapshot):
        result = select_candidates(flat_snapshot)
        chain_keys = {(q.strike, q.kind) for q in flat_snapshot.quotes_for(T1)}
        assert set(result.instruments) <= chain_keys
        assert result.p >= 20

    def test_moneyness_sides(self, flat_snapshot):
        result = select_candidates(flat_snapshot)
        k_atm = atm_strike(flat_snapshot.spot, [q.strike for q in flat_snapshot.quotes_for(T1)])
        for strike, kind in result.instruments:
            if kind == CALL:
                assert strike >= k_atm
            else:
                assert strike <= k_atm

    def test_separate_quantile_switch(self):
        # put volumes dwarf call volumes; joint medians kill every call,
        # per-kind medians keep the better half of each side
        quotes = [
            quote(100.0, CALL, 1, 4), quote(101.0, CALL, 2, 3),
            quote(102.0, CALL, 3, 2), quote(103.0, CALL, 4, 1),
            quote(100.0, PUT, 100, 400), quote(99.0, PUT, 200, 300),
            quote(98.0, PUT, 300, 200), quote(97.0, PUT, 400, 100),
        ]
        joint = select_candidates(snapshot_of(quotes))
        assert all(kind == PUT for _, kind in joint.instruments)
        split = select_candidates(snapshot_of(quotes), joint_quantiles=False)
        assert any(kind == CALL for _, kind in split.instruments)


class TestLoaders:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "options.csv"
        path.write_text(
            "trade_date,expiry,kind,strike,close,volume,open_interest\n"
            "2020-03-05,2020-03-12,C,100,2.5,10,20\n"
            "2020-03-05,2020-03-12,P,100,1.5,11,21\n"
        )
        quotes = load_options(path)
        assert len(quotes) == 2
        assert quotes[0].strike == 100.0 and quotes[0].icp == 1
        assert quotes[1].icp == -1

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "options.csv"
        path.write_text(
            "trade_date,expiry,kind,strike,close,volume,open_interest\n"
            "2020-03-05,2020-03-12,C,100,2.5,10,20\n"
            "2020-03-05,2020-03-12,C,not_a_number,2.5,10,20\n"
        )
        with pytest.raises(DataError, match=":3"):
            load_options(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "options.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(DataError, match="header"):
            load_options(path)

    def test_negative_strike_rejected(self, tmp_path):
        path = tmp_path / "options.csv"
        path.write_text(
            "trade_date,expiry,kind,strike,close,volume,open_interest\n"
            "2020-03-05,2020-03-12,C,-5,2.5,10,20\n"
        )
        with pytest.raises(DataError, match=":2"):
            load_options(path)

    def test_expiry_before_trade_date_rejected(self, tmp_path):
        path = tmp_path / "options.csv"
        path.write_text(
            "trade_date,expiry,kind,strike,close,volume,open_interest\n"
            "2020-03-12,2020-03-05,C,100,2.5,10,20\n"
        )
        with pytest.raises(DataError):
            load_options(path)

    def test_store_missing_file(self, tmp_path):
        with pytest.raises(MissingData):
            MarketDataStore.load(tmp_path)
