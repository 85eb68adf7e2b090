"""Black-Scholes valuation, analytic greeks and implied-volatility inversion.

All functions price European options on an asset paying a continuous carry
yield q, with ACT/365 tenors. Stateless and thread-safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

# Normal CDF: scipy's ndtr is the Cephes rational erf/erfc approximation with
# max error below 1e-15 across the real line; ndtri is its exact inverse.
from scipy.special import ndtr as norm_cdf

from .errors import InvalidInput, NoImpliedVol, ConvergenceFailure

CALL = "C"
PUT = "P"

IV_BRACKET = (1e-4, 5.0)
IV_TOL = 1e-10
IV_MAX_ITER = 200


def _icp(kind: str) -> int:
    if kind == CALL:
        return 1
    if kind == PUT:
        return -1
    raise InvalidInput(f"kind must be {CALL!r} or {PUT!r}, got {kind!r}")


@dataclass(frozen=True)
class BsInputs:
    spot: float
    strike: float
    rate: float
    carry_yield: float
    vol: float
    tenor: float
    kind: str

    def __post_init__(self):
        vals = (self.spot, self.strike, self.rate, self.carry_yield, self.vol, self.tenor)
        if any(not math.isfinite(v) for v in vals):
            raise InvalidInput(f"non-finite pricing input: {self}")
        if self.spot <= 0 or self.strike < 0 or self.vol < 0 or self.tenor < 0:
            raise InvalidInput(f"out-of-domain pricing input: {self}")
        _icp(self.kind)


@dataclass(frozen=True)
class Greeks:
    delta: float
    gamma: float
    vega: float
    volga: float
    theta: float  # per year; daily use divides by 365


def norm_pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def price_vec(spot, strike, rate, carry_yield, vol, tenor, icp):
    """Vectorized Black-Scholes price; degenerate cases fall back to the
    discounted-forward intrinsic limit max(icp*(S e^{-q tau} - K e^{-r tau}), 0)."""
    spot, strike, vol, tenor = np.broadcast_arrays(
        np.asarray(spot, dtype=float),
        np.asarray(strike, dtype=float),
        np.asarray(vol, dtype=float),
        np.asarray(tenor, dtype=float),
    )
    df_r = np.exp(-rate * tenor)
    df_q = np.exp(-carry_yield * tenor)
    fwd_leg = spot * df_q
    strike_leg = strike * df_r
    intrinsic = np.maximum(icp * (fwd_leg - strike_leg), 0.0)

    degenerate = (vol <= 0.0) | (tenor <= 0.0) | (strike <= 0.0)
    out = np.where(degenerate, np.where(strike <= 0.0, np.maximum(icp * fwd_leg, 0.0), intrinsic), 0.0)
    if not degenerate.all():
        safe_vol = np.where(degenerate, 1.0, vol)
        safe_tau = np.where(degenerate, 1.0, tenor)
        safe_k = np.where(degenerate, 1.0, strike)
        sig_rt = safe_vol * np.sqrt(safe_tau)
        d1 = (np.log(spot / safe_k) + (rate - carry_yield + 0.5 * safe_vol**2) * safe_tau) / sig_rt
        d2 = d1 - sig_rt
        live = icp * (fwd_leg * norm_cdf(icp * d1) - strike_leg * norm_cdf(icp * d2))
        out = np.where(degenerate, out, live)
    return out


def bs_price(inputs: BsInputs) -> float:
    return float(price_vec(inputs.spot, inputs.strike, inputs.rate, inputs.carry_yield,
                           inputs.vol, inputs.tenor, _icp(inputs.kind)))


def bs_greeks(inputs: BsInputs) -> Greeks:
    """Closed-form delta, gamma, vega, volga and per-year theta.

    At tau=0 or vol=0 the option is its intrinsic limit: delta collapses to
    the (carry-discounted) in-the-money indicator and all other greeks are 0.
    """
    s, k, r, q = inputs.spot, inputs.strike, inputs.rate, inputs.carry_yield
    vol, tau = inputs.vol, inputs.tenor
    icp = _icp(inputs.kind)
    df_q = math.exp(-q * tau)
    df_r = math.exp(-r * tau)
    if vol <= 0.0 or tau <= 0.0 or k <= 0.0:
        itm = icp * (s * df_q - k * df_r) > 0.0
        delta = icp * df_q if itm else 0.0
        return Greeks(delta=delta, gamma=0.0, vega=0.0, volga=0.0, theta=0.0)

    sig_rt = vol * math.sqrt(tau)
    d1 = (math.log(s / k) + (r - q + 0.5 * vol * vol) * tau) / sig_rt
    d2 = d1 - sig_rt
    pdf1 = float(norm_pdf(d1))
    nd1 = float(norm_cdf(icp * d1))
    nd2 = float(norm_cdf(icp * d2))

    delta = icp * df_q * nd1
    gamma = df_q * pdf1 / (s * sig_rt)
    vega = s * df_q * pdf1 * math.sqrt(tau)
    volga = vega * d1 * d2 / vol
    theta = (
        -s * df_q * pdf1 * vol / (2.0 * math.sqrt(tau))
        + icp * (q * s * df_q * nd1 - r * k * df_r * nd2)
    )
    return Greeks(delta=delta, gamma=gamma, vega=vega, volga=volga, theta=theta)


def _no_vol_bounds(spot, strike, rate, carry_yield, tenor, icp):
    df_r = math.exp(-rate * tenor)
    df_q = math.exp(-carry_yield * tenor)
    lower = max(icp * (spot * df_q - strike * df_r), 0.0)
    upper = spot * df_q if icp == 1 else strike * df_r
    return lower, upper


def implied_vol(
    market_price: float,
    spot: float,
    strike: float,
    rate: float,
    carry_yield: float,
    tenor: float,
    kind: str,
) -> float:
    """Volatility matching a market price by Brent's method on [1e-4, 5.0].

    The bracket's upper bound is doubled once if the root is not bracketed.
    Raises NoImpliedVol outside the static arbitrage bounds and
    ConvergenceFailure when no bracket can be established.
    """
    icp = _icp(kind)
    if not (market_price == market_price and spot > 0 and strike > 0 and tenor > 0):
        raise InvalidInput(
            f"implied_vol needs positive spot/strike/tenor and a finite price, got "
            f"S={spot} K={strike} tau={tenor} price={market_price}"
        )
    lower, upper = _no_vol_bounds(spot, strike, rate, carry_yield, tenor, icp)
    if market_price <= lower or market_price >= upper:
        raise NoImpliedVol(
            f"price {market_price:.6g} outside arbitrage bounds ({lower:.6g}, {upper:.6g})"
        )

    def objective(sigma: float) -> float:
        return float(price_vec(spot, strike, rate, carry_yield, sigma, tenor, icp)) - market_price

    lo, hi = IV_BRACKET
    f_lo, f_hi = objective(lo), objective(hi)
    if f_lo * f_hi > 0:
        hi *= 2.0
        f_hi = objective(hi)
    if f_lo * f_hi > 0:
        raise ConvergenceFailure(
            f"no volatility bracket in [{lo}, {hi}] for price {market_price:.6g}"
        )
    return float(brentq(objective, lo, hi, xtol=IV_TOL, maxiter=IV_MAX_ITER))
