"""Shared fixtures: hand-sized synthetic chains priced under known vols."""
import datetime as dt
import math

import numpy as np
import pytest

from semistatic.market_data import CALL, PUT, MarketSnapshot, OptionQuote
from semistatic.pricing import price_vec

# a Thursday, the following Thursday, and the last Thursday of the month
T0 = dt.date(2020, 3, 5)
T1 = dt.date(2020, 3, 12)
T2 = dt.date(2020, 3, 26)

LIQ_VOLUME = 1000.0
LIQ_OI = 2000.0
WING_VOLUME = 10.0
WING_OI = 20.0


def bs_close(spot, strike, rate, carry, vol, tenor, kind):
    return float(price_vec(spot, strike, rate, carry, vol, tenor, 1 if kind == CALL else -1))


def make_chain(
    spot,
    rate,
    carry,
    as_of,
    expiry,
    vol_fn,
    strikes,
    liquid_band=0.08,
):
    """Quotes for one expiry, both kinds per strike, liquid inside |ln M| <= band."""
    tenor = (expiry - as_of).days / 365.0
    quotes = []
    for strike in strikes:
        m = spot / strike
        vol = vol_fn(m)
        liquid = abs(math.log(m)) <= liquid_band
        volume = LIQ_VOLUME if liquid else WING_VOLUME
        oi = LIQ_OI if liquid else WING_OI
        for kind in (CALL, PUT):
            close = bs_close(spot, strike, rate, carry, vol, tenor, kind)
            quotes.append(OptionQuote(as_of, expiry, kind, float(strike), close, volume, oi))
    return quotes


def make_snapshot(
    spot=100.0,
    rate=0.05,
    carry=0.01,
    as_of=T0,
    weekly_expiry=T1,
    monthly_expiry=T2,
    vol_fn=lambda m: 0.2,
    weekly_strikes=None,
    monthly_strikes=None,
    liquid_band=0.08,
):
    if weekly_strikes is None:
        weekly_strikes = np.arange(85.0, 116.0, 1.0)
    if monthly_strikes is None:
        monthly_strikes = np.arange(85.0, 116.0, 1.0)
    quotes = make_chain(spot, rate, carry, as_of, weekly_expiry, vol_fn, weekly_strikes, liquid_band)
    if monthly_expiry != weekly_expiry:
        quotes += make_chain(spot, rate, carry, as_of, monthly_expiry, vol_fn, monthly_strikes, liquid_band)
    futures = {}
    for expiry in {weekly_expiry, monthly_expiry}:
        tau = (expiry - as_of).days / 365.0
        futures[expiry] = spot * math.exp((rate - carry) * tau)
    return MarketSnapshot(
        as_of=as_of,
        spot=spot,
        futures_close=futures,
        risk_free_rate=rate,
        quotes=quotes,
        weekly_expiry=weekly_expiry,
        monthly_expiry=monthly_expiry,
    )


@pytest.fixture
def flat_snapshot():
    return make_snapshot()
