"""Construction of the three hedge strategies.

* lasso hedge: simulate the index to the short expiry, price the target
  option there under a forward-volatility model, regress the target values
  on candidate-option payoffs with an L1 penalty, and read portfolio weights
  plus a cash leg off the selected fit.
* quadrature hedge: map Gauss-Hermite nodes to theoretical strikes and
  weights for a portfolio of shorter calls spanning the target, snapping
  each theoretical strike to the nearest liquid listed strike.
* dynamic hedge: daily delta position in the underlying plus a money-market
  account matching the target value.
"""
from __future__ import annotations

import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInput, MissingData
from .lasso import DesignMatrix, lambda_path
from .market_data import CALL, PUT, CandidateSet, MarketSnapshot, implied_carry, select_candidates
from .pricing import BsInputs, bs_greeks, price_vec
from .simulation import SimConfig, simulate_terminal
from .trading_calendar import year_fraction
from .vol_surface import VolSurface, forward_vol, vol_at

log = logging.getLogger(__name__)

SNAP_WARN_REL_DISTANCE = 0.20


@dataclass
class HedgePortfolio:
    as_of: dt.date
    expiry: dt.date
    positions: list[tuple[float, str, float]]  # (strike, kind, weight)
    cash: float  # present value at as_of of the cash leg paying cash_at_expiry
    cash_at_expiry: float
    setup_cost: float
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "as_of": self.as_of.isoformat(),
            "expiry": self.expiry.isoformat(),
            "positions": [
                {"strike": s, "kind": k, "weight": w} for s, k, w in self.positions
            ],
            "cash": self.cash,
            "cash_at_expiry": self.cash_at_expiry,
            "setup_cost": self.setup_cost,
            "diagnostics": self.diagnostics,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "HedgePortfolio":
        d = json.loads(text)
        return cls(
            as_of=dt.date.fromisoformat(d["as_of"]),
            expiry=dt.date.fromisoformat(d["expiry"]),
            positions=[(p["strike"], p["kind"], p["weight"]) for p in d["positions"]],
            cash=d["cash"],
            cash_at_expiry=d["cash_at_expiry"],
            setup_cost=d["setup_cost"],
            diagnostics=d.get("diagnostics", {}),
        )


@dataclass
class DynamicHedgeState:
    date: dt.date
    delta: float
    money_market: float  # target value minus delta * spot


@dataclass
class CarrWuConfig:
    target_strike: float
    t1: dt.date
    t2: dt.date
    n_nodes: int = 10

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError(f"n_nodes must be >= 1, got {self.n_nodes}")


def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for integrating f(x) e^{-x^2} dx; weights sum to sqrt(pi)."""
    return np.polynomial.hermite.hermgauss(n)


def _constituent_closes(snapshot: MarketSnapshot, expiry: dt.date) -> dict[tuple[float, str], float]:
    return {(q.strike, q.kind): q.close for q in snapshot.quotes_for(expiry)}


def _setup_cost(positions, closes, cash_pv, cost_rate, as_of):
    cost = cash_pv
    for strike, kind, weight in positions:
        close = closes.get((strike, kind))
        if close is None:
            raise MissingData(f"no close for constituent {kind} {strike:g} on {as_of}")
        cost += weight * close + cost_rate * abs(weight) * close
    return cost


def build_lasso_hedge(
    snapshot: MarketSnapshot,
    surface: VolSurface,
    fwd_model: str,
    sim_config: SimConfig | None = None,
    *,
    target_strike: float,
    target_kind: str = CALL,
    n_paths: int = 5000,
    seed: int = 0,
    cost_rate: float = 5e-4,
    candidates: CandidateSet | None = None,
    joint_quantiles: bool = True,
    penalize_intercept: bool = True,
    lasso_options: dict | None = None,
) -> HedgePortfolio:
    """Weekly replication portfolio for one target option.

    Steps: select liquid candidates, simulate terminal levels at the weekly
    expiry under GBM (drift from the futures-implied return, vol from the
    ATM weekly smile), price the target there under `fwd_model`, assemble
    the payoff design and run the penalty path, then convert the selected
    weights into positions, a discounted cash leg and a setup cost including
    proportional transaction costs.
    """
    t0, t1, t2 = snapshot.as_of, snapshot.weekly_expiry, snapshot.monthly_expiry
    if candidates is None:
        candidates = select_candidates(snapshot, joint_quantiles=joint_quantiles)

    tau1 = year_fraction(t0, t1)
    if sim_config is None:
        _, r_prime = implied_carry(snapshot, t1)
        atm_vol = vol_at(surface, 1.0, tau1)
        sim_config = SimConfig(
            n_paths=n_paths, seed=seed, drift=r_prime, vol=atm_vol, tenor=tau1, spot=snapshot.spot,
        )
    levels = simulate_terminal(sim_config)

    rate = snapshot.risk_free_rate
    try:
        carry_target, _ = implied_carry(snapshot, t2)
    except MissingData:
        carry_target, _ = implied_carry(snapshot, t1)
    sigma_t1 = forward_vol(surface, fwd_model, levels, snapshot.spot, target_strike, t0, t1, t2)
    icp = 1 if target_kind == CALL else -1
    target_values = price_vec(
        levels, target_strike, rate, carry_target, sigma_t1, year_fraction(t1, t2), icp,
    )

    columns = [np.ones(len(levels))]
    for strike, kind in candidates.instruments:
        sign = 1.0 if kind == CALL else -1.0
        columns.append(np.maximum(sign * (levels - strike), 0.0))
    design = DesignMatrix(X=np.column_stack(columns), Y=np.asarray(target_values, dtype=float))

    opts = dict(lasso_options or {})
    path = lambda_path(design, penalize_intercept=penalize_intercept, **opts)
    fit = path.selected_fit()

    positions = [
        (strike, kind, float(w))
        for (strike, kind), w in zip(candidates.instruments, fit.weights[1:])
        if w != 0.0
    ]
    cash_at_expiry = float(fit.weights[0])
    cash_pv = cash_at_expiry * math.exp(-rate * tau1)
    closes = _constituent_closes(snapshot, t1)
    setup_cost = _setup_cost(positions, closes, cash_pv, cost_rate, t0)
    mae = float(np.mean(np.abs(design.X @ fit.weights - design.Y)))
    return HedgePortfolio(
        as_of=t0, expiry=t1, positions=positions,
        cash=cash_pv, cash_at_expiry=cash_at_expiry, setup_cost=setup_cost,
        diagnostics={
            "builder": "lasso",
            "fwd_model": fwd_model,
            "scheme": surface.scheme,
            "selected_lambda": path.selected_lambda,
            "in_sample_mse": fit.in_sample_mse,
            "in_sample_mae": mae,
            "n_nonzero": fit.n_nonzero,
            "n_candidates": candidates.p,
            "seed": sim_config.seed,
            "n_paths": sim_config.n_paths,
            "transaction_cost_rate": cost_rate,
        },
    )


def carr_wu_nodes(
    config: CarrWuConfig,
    surface: VolSurface,
    spot: float,
    rate: float,
    carry: float,
    t0: dt.date,
) -> tuple[np.ndarray, np.ndarray]:
    """Theoretical strikes and portfolio weights from the quadrature rule.

    The spanning weight of strike K is the target option's second strike
    derivative, i.e. its spot-gamma at the short expiry; substituting
    d1(K) = sqrt(2) x turns the integral into a Gauss-Hermite form with
    strikes K(x) = K* exp(sigma sqrt(2 tau) x - (r - q + sigma^2/2) tau)
    and weights e^{-q tau} w_gh / sqrt(pi). The vol at each node is read
    off the calibrated short-tenor smile at the node's moneyness, solved
    by fixed-point iteration since the strike map itself depends on it.
    """
    x, w_gh = gauss_hermite(config.n_nodes)
    tau_t = year_fraction(config.t1, config.t2)
    tau_smile = year_fraction(t0, config.t1)
    if tau_t <= 0:
        raise InvalidInput(f"target tenor beyond constituents must be positive, got {tau_t}")
    sigma = np.full(config.n_nodes, vol_at(surface, 1.0, tau_smile))
    strikes = np.empty(config.n_nodes)
    for _ in range(20):
        strikes = config.target_strike * np.exp(
            sigma * math.sqrt(2.0 * tau_t) * x - (rate - carry + 0.5 * sigma**2) * tau_t
        )
        sigma_new = np.asarray(vol_at(surface, spot / strikes, tau_smile))
        if np.max(np.abs(sigma_new - sigma)) < 1e-12:
            sigma = sigma_new
            break
        sigma = sigma_new
    weights = w_gh * math.exp(-carry * tau_t) / math.sqrt(math.pi)
    return strikes, weights


def snap_to_listed(theoretical: float, listed: list[float]) -> float:
    """Nearest listed strike; equidistant ties break toward the lower strike."""
    return min(listed, key=lambda k: (abs(k - theoretical), k))


def build_carr_wu_hedge(
    snapshot: MarketSnapshot,
    surface: VolSurface,
    config: CarrWuConfig,
    *,
    snap: bool = True,
    cost_rate: float = 5e-4,
    joint_quantiles: bool = True,
) -> HedgePortfolio:
    """Static call-spanning portfolio with strikes snapped to liquid listings.

    Only call targets are supported; the spanning construction prices a call
    as a weighted continuum of shorter calls.
    """
    t0 = snapshot.as_of
    rate = snapshot.risk_free_rate
    try:
        carry, _ = implied_carry(snapshot, config.t2)
    except MissingData:
        carry, _ = implied_carry(snapshot, config.t1)
    strikes, weights = carr_wu_nodes(config, surface, snapshot.spot, rate, carry, t0)

    snapped_info = []
    if snap:
        candidates = select_candidates(snapshot, joint_quantiles=joint_quantiles)
        listed = sorted({s for s, kind in candidates.instruments if kind == CALL})
        if not listed:
            raise MissingData(f"no liquid call strikes to snap to on {t0}")
        aggregated: dict[float, float] = {}
        for k_th, w in zip(strikes, weights):
            k_snap = snap_to_listed(float(k_th), listed)
            rel = abs(k_snap - k_th) / k_th
            if rel > SNAP_WARN_REL_DISTANCE:
                log.warning(
                    "no liquid strike within %.0f%% of theoretical %.2f on %s; snapped to %.2f",
                    SNAP_WARN_REL_DISTANCE * 100, k_th, t0, k_snap,
                )
            snapped_info.append({"theoretical": float(k_th), "snapped": k_snap,
                                 "rel_distance": rel, "weight": float(w)})
            aggregated[k_snap] = aggregated.get(k_snap, 0.0) + float(w)
        positions = [(k, CALL, w) for k, w in sorted(aggregated.items())]
        closes = _constituent_closes(snapshot, config.t1)
        setup_cost = _setup_cost(positions, closes, 0.0, cost_rate, t0)
    else:
        positions = [(float(k), CALL, float(w)) for k, w in zip(strikes, weights)]
        setup_cost = float("nan")

    return HedgePortfolio(
        as_of=t0, expiry=config.t1, positions=positions,
        cash=0.0, cash_at_expiry=0.0, setup_cost=setup_cost,
        diagnostics={
            "builder": "carr_wu",
            "n_nodes": config.n_nodes,
            "target_strike": config.target_strike,
            "snapped": snapped_info,
            "transaction_cost_rate": cost_rate if snap else None,
        },
    )


def portfolio_model_value(
    portfolio: HedgePortfolio,
    surface: VolSurface,
    spot: float,
    rate: float,
    carry: float,
    as_of: dt.date,
) -> float:
    """Value of the constituents plus cash under the calibrated surface."""
    tau = year_fraction(as_of, portfolio.expiry)
    total = portfolio.cash_at_expiry * math.exp(-rate * tau)
    for strike, kind, weight in portfolio.positions:
        sigma = vol_at(surface, spot / strike, tau) if tau > 0 else 0.0
        icp = 1 if kind == CALL else -1
        total += weight * float(price_vec(spot, strike, rate, carry, sigma, tau, icp))
    return total


def rebalance_dynamic(
    snapshot: MarketSnapshot,
    surface: VolSurface,
    *,
    target_strike: float,
    target_kind: str,
    target_expiry: dt.date,
    target_value: float,
) -> DynamicHedgeState:
    """Daily delta position and money-market balance matching the target value."""
    tau = year_fraction(snapshot.as_of, target_expiry)
    sigma = vol_at(surface, snapshot.spot / target_strike, tau) if tau > 0 else 0.0
    try:
        carry, _ = implied_carry(snapshot, target_expiry)
    except MissingData:
        carry = 0.0
    greeks = bs_greeks(BsInputs(
        spot=snapshot.spot, strike=target_strike, rate=snapshot.risk_free_rate,
        carry_yield=carry, vol=sigma, tenor=tau, kind=target_kind,
    ))
    return DynamicHedgeState(
        date=snapshot.as_of,
        delta=greeks.delta,
        money_market=target_value - greeks.delta * snapshot.spot,
    )


def dynamic_day_pnl(prev: DynamicHedgeState, spot_change: float, rate: float) -> float:
    """One-day PnL: underlying move on yesterday's delta plus money-market accrual."""
    return prev.delta * spot_change + prev.money_market * (math.exp(rate / 365.0) - 1.0)


def save_portfolio(portfolio: HedgePortfolio, path: str | Path) -> None:
    Path(path).write_text(portfolio.to_json())
