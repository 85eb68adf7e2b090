"""Daily PnL decomposition into marginal and greek-based components.

Risk PnL follows a second-order expansion in spot and vol plus one calendar
day of theta: delta*dS + gamma*dS^2/2 + vega*dvol + volga*dvol^2/2 +
theta/365, with the residual reported as unexplained. Marginal PnL revalues
with a single factor advanced while everything else is held at the prior
day. Vega and volga are per absolute vol point; each instrument's vol change
is the change in its own implied vol read off the daily surfaces.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .errors import MissingData
from .hedge_builders import DynamicHedgeState, HedgePortfolio
from .pricing import BsInputs, Greeks, bs_greeks, bs_price

DAYS_PER_YEAR = 365.0

FACTORS = ("spot", "vol", "time")


@dataclass
class PnlBreakdown:
    date: dt.date
    full: float
    delta_pnl: float
    gamma_pnl: float
    vega_pnl: float
    volga_pnl: float
    theta_pnl: float
    unexplained: float
    marginal_spot: float
    marginal_vol: float
    marginal_time: float

    @property
    def explained(self) -> float:
        return self.delta_pnl + self.gamma_pnl + self.vega_pnl + self.volga_pnl + self.theta_pnl


def risk_pnl(prev_greeks: Greeks, d_spot: float, d_vol: float) -> dict[str, float]:
    """The five expansion terms from previous-day greeks and factor moves."""
    return {
        "delta": prev_greeks.delta * d_spot,
        "gamma": 0.5 * prev_greeks.gamma * d_spot**2,
        "vega": prev_greeks.vega * d_vol,
        "volga": 0.5 * prev_greeks.volga * d_vol**2,
        "theta": prev_greeks.theta / DAYS_PER_YEAR,
    }


def marginal_pnl(prev: BsInputs, factor: str, new_value: float) -> float:
    """Revaluation difference with only the named factor advanced."""
    if factor == "spot":
        bumped = BsInputs(new_value, prev.strike, prev.rate, prev.carry_yield,
                          prev.vol, prev.tenor, prev.kind)
    elif factor == "vol":
        bumped = BsInputs(prev.spot, prev.strike, prev.rate, prev.carry_yield,
                          new_value, prev.tenor, prev.kind)
    elif factor == "time":
        bumped = BsInputs(prev.spot, prev.strike, prev.rate, prev.carry_yield,
                          prev.vol, new_value, prev.kind)
    else:
        raise ValueError(f"factor must be one of {FACTORS}, got {factor!r}")
    return bs_price(bumped) - bs_price(prev)


def option_breakdown(prev: BsInputs, today: BsInputs, date: dt.date) -> PnlBreakdown:
    """Full decomposition of one option's day-over-day model PnL."""
    full = bs_price(today) - bs_price(prev)
    comps = risk_pnl(bs_greeks(prev), today.spot - prev.spot, today.vol - prev.vol)
    breakdown = PnlBreakdown(
        date=date,
        full=full,
        delta_pnl=comps["delta"],
        gamma_pnl=comps["gamma"],
        vega_pnl=comps["vega"],
        volga_pnl=comps["volga"],
        theta_pnl=comps["theta"],
        unexplained=0.0,
        marginal_spot=marginal_pnl(prev, "spot", today.spot),
        marginal_vol=marginal_pnl(prev, "vol", today.vol),
        marginal_time=marginal_pnl(prev, "time", today.tenor),
    )
    breakdown.unexplained = breakdown.full - breakdown.explained
    return breakdown


def portfolio_attribution(
    portfolio: HedgePortfolio,
    prev_inputs: dict[tuple[float, str], BsInputs],
    today_inputs: dict[tuple[float, str], BsInputs],
    date: dt.date,
    rate: float,
) -> PnlBreakdown:
    """Weight-scaled sum of constituent breakdowns plus cash carry.

    The cash leg's deterministic accrual enters the theta component and the
    time marginal (it is a pure passage-of-time effect).
    """
    total = PnlBreakdown(date, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    for strike, kind, weight in portfolio.positions:
        key = (strike, kind)
        if key not in prev_inputs or key not in today_inputs:
            raise MissingData(f"no pricing inputs for constituent {kind} {strike:g} on {date}")
        piece = option_breakdown(prev_inputs[key], today_inputs[key], date)
        total.full += weight * piece.full
        total.delta_pnl += weight * piece.delta_pnl
        total.gamma_pnl += weight * piece.gamma_pnl
        total.vega_pnl += weight * piece.vega_pnl
        total.volga_pnl += weight * piece.volga_pnl
        total.theta_pnl += weight * piece.theta_pnl
        total.marginal_spot += weight * piece.marginal_spot
        total.marginal_vol += weight * piece.marginal_vol
        total.marginal_time += weight * piece.marginal_time

    sample = next(iter(prev_inputs.values()), None)
    prev_tau = sample.tenor if sample is not None else 0.0
    cash_prev = portfolio.cash_at_expiry * math.exp(-rate * prev_tau)
    today_sample = next(iter(today_inputs.values()), None)
    today_tau = today_sample.tenor if today_sample is not None else 0.0
    cash_accrual = portfolio.cash_at_expiry * math.exp(-rate * today_tau) - cash_prev
    total.full += cash_accrual
    total.theta_pnl += cash_accrual
    total.marginal_time += cash_accrual

    total.unexplained = total.full - total.explained
    return total


def dynamic_attribution(
    prev_state: DynamicHedgeState,
    d_spot: float,
    rate: float,
    date: dt.date,
) -> PnlBreakdown:
    """Delta-position PnL plus money-market accrual; by construction the
    hedge carries no gamma, vega or volga exposure."""
    delta_pnl = prev_state.delta * d_spot
    carry = prev_state.money_market * (math.exp(rate / DAYS_PER_YEAR) - 1.0)
    return PnlBreakdown(
        date=date,
        full=delta_pnl + carry,
        delta_pnl=delta_pnl,
        gamma_pnl=0.0,
        vega_pnl=0.0,
        volga_pnl=0.0,
        theta_pnl=carry,
        unexplained=0.0,
        marginal_spot=delta_pnl,
        marginal_vol=0.0,
        marginal_time=carry,
    )


def attribution_regressions(target: np.ndarray, hedge: np.ndarray) -> dict:
    """OLS slope and R^2 of a hedge component on the matching target component."""
    x = np.asarray(target, dtype=float)
    y = np.asarray(hedge, dtype=float)
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 10:
        raise ValueError(f"need at least 10 paired observations, got {len(x)}")
    var_x = float(np.var(x))
    if var_x <= 0:
        return {"beta": float("nan"), "r_squared": float("nan"), "zero_variance": True}
    beta = float(np.cov(x, y, bias=True)[0, 1] / var_x)
    alpha = float(np.mean(y) - beta * np.mean(x))
    resid = y - alpha - beta * x
    var_y = float(np.var(y))
    r2 = float("nan") if var_y <= 0 else 1.0 - float(np.var(resid)) / var_y
    return {"beta": beta, "r_squared": r2, "zero_variance": False}
