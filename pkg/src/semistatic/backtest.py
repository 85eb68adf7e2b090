"""Weekly-rebalanced hedging protocol over a historical window.

Each Thursday the static hedges are rebuilt from that day's snapshot; marks
on every business day come from market closes and the frozen weekly weights
(never from a pricing model), the dynamic hedge re-delta-hedges daily, and
the monthly cycle restarts with a fresh target option at the configured
moneyness. Covid is available as a named window preset.
"""
from __future__ import annotations

import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MissingData, NoLiquidCandidates
from .hedge_builders import (
    CarrWuConfig,
    DynamicHedgeState,
    HedgePortfolio,
    build_carr_wu_hedge,
    build_lasso_hedge,
    dynamic_day_pnl,
    rebalance_dynamic,
)
from .market_data import CALL, PUT, MarketDataStore, MarketSnapshot, implied_carry, moneyness_target
from .pricing import price_vec
from .simulation import SimConfig
from .trading_calendar import business_days, monthly_expiries, weekly_expiries, year_fraction
from .vol_surface import INTERP_SCHEMES, FORWARD_VOL_MODELS, VolSurface, build_surface, vol_at

log = logging.getLogger(__name__)

COVID_WINDOW = (dt.date(2020, 2, 27), dt.date(2020, 7, 20))

MONEYNESS_BUCKETS = ("ATM", "ITM", "OTM")


def model_grid() -> list[str]:
    """All 21 model identifiers: 16 static, 4 dynamic, 1 quadrature benchmark."""
    static = [f"static:{fwd}:{scheme}" for fwd in FORWARD_VOL_MODELS for scheme in INTERP_SCHEMES]
    dynamic = [f"dynamic:{scheme}" for scheme in INTERP_SCHEMES]
    return static + dynamic + ["carr_wu"]


def parse_model_id(model_id: str) -> tuple[str, str, str]:
    """Split a model id into (family, forward-vol model, interpolation scheme)."""
    parts = model_id.split(":")
    if parts[0] == "static" and len(parts) == 3:
        fwd, scheme = parts[1], parts[2]
        if fwd in FORWARD_VOL_MODELS and scheme in INTERP_SCHEMES:
            return "static", fwd, scheme
    elif parts[0] == "dynamic" and len(parts) == 2 and parts[1] in INTERP_SCHEMES:
        return "dynamic", "", parts[1]
    elif model_id == "carr_wu":
        return "carr_wu", "", "linear"
    raise ValueError(f"unknown model id {model_id!r}")


@dataclass
class BacktestSpec:
    index: str
    option_kind: str  # C or P
    moneyness: str  # ATM / ITM / OTM
    start: dt.date
    end: dt.date
    models: list[str]
    n_paths: int = 5000
    seed: int = 0
    cost_rate: float = 5e-4
    carr_wu_nodes: int = 10
    joint_quantiles: bool = True
    penalize_intercept: bool = True
    lasso_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.option_kind not in (CALL, PUT):
            raise ValueError(f"option_kind must be C or P, got {self.option_kind!r}")
        if self.moneyness not in MONEYNESS_BUCKETS:
            raise ValueError(f"moneyness must be one of {MONEYNESS_BUCKETS}")
        for model_id in self.models:
            parse_model_id(model_id)

    @property
    def universe(self) -> str:
        kind = "call" if self.option_kind == CALL else "put"
        return f"{self.index}_{kind}_{self.moneyness}"


@dataclass
class PnlSeries:
    model_id: str
    dates: list[dt.date]
    pnl: np.ndarray


@dataclass
class WeeklyHedgeRecord:
    cycle_start: dt.date
    week_start: dt.date
    week_end: dt.date
    target_strike: float
    portfolio: HedgePortfolio


@dataclass
class BacktestResult:
    spec: BacktestSpec
    target: PnlSeries
    models: dict[str, PnlSeries]
    target_values: list[tuple[dt.date, float, bool]]  # (date, close, marked_from_model)
    model_values: dict[str, list[tuple[dt.date, float]]]
    hedges: list[WeeklyHedgeRecord]
    funding: dict[str, list[dict]]

    def hedge_errors(self, model_id: str) -> np.ndarray:
        return self.target.pnl - self.models[model_id].pnl


def week_seed(root_seed: int, day: dt.date) -> int:
    """Deterministic per-week simulation seed derived from the root seed."""
    seq = np.random.SeedSequence([int(root_seed), day.toordinal()])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def choose_target_strike(snapshot: MarketSnapshot, kind: str, bucket: str) -> float:
    """Listed strike of the monthly chain whose moneyness is nearest the
    bucket's level (ties toward the lower strike)."""
    chain = [q for q in snapshot.quotes_for(snapshot.monthly_expiry) if q.kind == kind]
    if not chain:
        raise MissingData(
            f"no monthly {kind} quotes on {snapshot.as_of} for expiry {snapshot.monthly_expiry}"
        )
    target_m = moneyness_target(bucket, kind)
    strikes = sorted({q.strike for q in chain})
    return min(strikes, key=lambda k: (abs(snapshot.spot / k - target_m), k))


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Slope and R^2 of y on x with intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    vx = np.var(x)
    if vx <= 0:
        return float("nan"), float("nan")
    beta = float(np.cov(x, y, bias=True)[0, 1] / vx)
    alpha = float(np.mean(y) - beta * np.mean(x))
    resid = y - alpha - beta * x
    vy = np.var(y)
    r2 = float("nan") if vy <= 0 else 1.0 - float(np.var(resid)) / vy
    return beta, r2


class _Engine:
    """Mutable state for one backtest run."""

    def __init__(self, spec: BacktestSpec, store: MarketDataStore):
        self.spec = spec
        self.store = store
        self.anchor_cache: dict[tuple[dt.date, tuple[dt.date, ...]], VolSurface] = {}
        self.target_dates: list[dt.date] = []
        self.target_pnl: list[float] = []
        self.target_values: list[tuple[dt.date, float, bool]] = []
        self.model_pnl: dict[str, dict[dt.date, float]] = {m: {} for m in spec.models}
        self.model_values: dict[str, list[tuple[dt.date, float]]] = {m: [] for m in spec.models}
        self.hedges: list[WeeklyHedgeRecord] = []
        self.funding: dict[str, list[dict]] = {m: [] for m in spec.models}

    # -- surfaces ------------------------------------------------------

    def day_surface(self, day: dt.date, expiries: list[dt.date], scheme: str) -> VolSurface:
        expiries = sorted({e for e in expiries if e > day})
        key = (day, tuple(expiries))
        base = self.anchor_cache.get(key)
        if base is None:
            snapshot = self.snapshot(day, expiries)
            base = build_surface(
                snapshot, expiries, "linear", joint_quantiles=self.spec.joint_quantiles
            )
            self.anchor_cache[key] = base
        return base if scheme == "linear" else base.with_scheme(scheme)

    def snapshot(self, day: dt.date, expiries: list[dt.date]) -> MarketSnapshot:
        weekly = min(e for e in expiries if e >= day)
        monthly = max(expiries)
        return self.store.snapshot(day, weekly, monthly)

    # -- marks ---------------------------------------------------------

    def target_close(self, day: dt.date, strike: float, expiry: dt.date) -> tuple[float, bool]:
        """Market close of the target, else a flagged model mark off the
        day's calibrated surface (quotes can be missing in real archives)."""
        try:
            return self.store.option_close(day, expiry, strike, self.spec.option_kind), False
        except MissingData:
            if day == expiry:
                spot = self.store.spot[day]
                icp = 1 if self.spec.option_kind == CALL else -1
                return max(icp * (spot - strike), 0.0), True
            surface = self.day_surface(day, [expiry], "linear")
            snapshot = self.store.snapshot(day, expiry, expiry)
            tau = year_fraction(day, expiry)
            sigma = vol_at(surface, snapshot.spot / strike, tau)
            try:
                carry, _ = implied_carry(snapshot, expiry)
            except MissingData:
                carry = 0.0
            icp = 1 if self.spec.option_kind == CALL else -1
            value = float(price_vec(
                snapshot.spot, strike, snapshot.risk_free_rate, carry, sigma, tau, icp
            ))
            log.warning("target close missing on %s; marked from surface", day)
            return value, True

    def static_value(self, portfolio: HedgePortfolio, day: dt.date, rate: float) -> float:
        tau = year_fraction(day, portfolio.expiry)
        value = portfolio.cash_at_expiry * math.exp(-rate * tau)
        for strike, kind, weight in portfolio.positions:
            close = self.store.option_close(day, portfolio.expiry, strike, kind)
            value += weight * close
        return value

    # -- main loop -----------------------------------------------------

    def run_cycle(self, cycle_start: dt.date, cycle_end: dt.date) -> None:
        spec = self.spec
        store = self.store
        thursdays = [cycle_start] + [
            d for d in weekly_expiries(
                cycle_start + dt.timedelta(days=1), cycle_end, store.holidays
            ) if cycle_start < d <= cycle_end
        ]
        snapshot0 = store.snapshot(cycle_start, thursdays[1], cycle_end)
        target_strike = choose_target_strike(snapshot0, spec.option_kind, spec.moneyness)

        days = business_days(cycle_start, cycle_end, store.holidays)
        days = [d for d in days if d in store.spot]

        # target marks across the cycle
        value_prev, _ = self.target_close(cycle_start, target_strike, cycle_end)
        self.target_values.append((cycle_start, value_prev, False))
        dynamic_models = [m for m in spec.models if parse_model_id(m)[0] == "dynamic"]
        dyn_state: dict[str, DynamicHedgeState] = {}
        for model_id in dynamic_models:
            _, _, scheme = parse_model_id(model_id)
            surface = self.day_surface(cycle_start, [cycle_end], scheme)
            dyn_state[model_id] = rebalance_dynamic(
                store.snapshot(cycle_start, cycle_end, cycle_end), surface,
                target_strike=target_strike, target_kind=spec.option_kind,
                target_expiry=cycle_end, target_value=value_prev,
            )
            self.model_values[model_id].append((cycle_start, value_prev))

        spot_prev = store.spot[cycle_start]
        rate_prev = store.rates[cycle_start]
        for day in days[1:]:
            value, flagged = self.target_close(day, target_strike, cycle_end)
            self.target_dates.append(day)
            self.target_pnl.append(value - value_prev)
            self.target_values.append((day, value, flagged))
            # dynamic marks: previous state carries, then re-hedge today
            for model_id in dynamic_models:
                state = dyn_state[model_id]
                pnl = dynamic_day_pnl(state, store.spot[day] - spot_prev, rate_prev)
                self.model_pnl[model_id][day] = pnl
                prev_val = self.model_values[model_id][-1][1]
                self.model_values[model_id].append((day, prev_val + pnl))
                if day < cycle_end:
                    _, _, scheme = parse_model_id(model_id)
                    surface = self.day_surface(day, [cycle_end], scheme)
                    dyn_state[model_id] = rebalance_dynamic(
                        store.snapshot(day, cycle_end, cycle_end), surface,
                        target_strike=target_strike, target_kind=spec.option_kind,
                        target_expiry=cycle_end, target_value=value,
                    )
            value_prev = value
            spot_prev = store.spot[day]
            rate_prev = store.rates[day]

        # weekly static builds and marks
        static_models = [m for m in spec.models if parse_model_id(m)[0] in ("static", "carr_wu")]
        for w_start, w_end in zip(thursdays, thursdays[1:]):
            self.run_week(w_start, w_end, cycle_start, cycle_end, target_strike, static_models, days)

    def run_week(self, w_start, w_end, cycle_start, cycle_end, target_strike, static_models, cycle_days):
        spec = self.spec
        store = self.store
        snapshot = store.snapshot(w_start, w_end, cycle_end)
        expiries = sorted({w_end, cycle_end})
        base_surface = self.day_surface(w_start, expiries, "linear")

        tau1 = year_fraction(w_start, w_end)
        _, r_prime = implied_carry(snapshot, w_end)
        sim = SimConfig(
            n_paths=spec.n_paths, seed=week_seed(spec.seed, w_start),
            drift=r_prime, vol=vol_at(base_surface, 1.0, tau1),
            tenor=tau1, spot=snapshot.spot,
        )

        week_days = [d for d in cycle_days if w_start < d <= w_end]
        for model_id in static_models:
            family, fwd, scheme = parse_model_id(model_id)
            surface = base_surface if scheme == "linear" else base_surface.with_scheme(scheme)
            try:
                if family == "static":
                    portfolio = build_lasso_hedge(
                        snapshot, surface, fwd, sim,
                        target_strike=target_strike, target_kind=spec.option_kind,
                        cost_rate=spec.cost_rate, joint_quantiles=spec.joint_quantiles,
                        penalize_intercept=spec.penalize_intercept,
                        lasso_options=spec.lasso_options,
                    )
                else:
                    if spec.option_kind != CALL:
                        continue  # spanning benchmark is defined for call targets
                    portfolio = build_carr_wu_hedge(
                        snapshot, surface,
                        CarrWuConfig(target_strike=target_strike, t1=w_end, t2=cycle_end,
                                     n_nodes=spec.carr_wu_nodes),
                        cost_rate=spec.cost_rate, joint_quantiles=spec.joint_quantiles,
                    )
            except NoLiquidCandidates:
                log.warning("%s: no liquid candidates on %s; week skipped", model_id, w_start)
                continue
            self.hedges.append(WeeklyHedgeRecord(cycle_start, w_start, w_end, target_strike, portfolio))

            value_prev = self.static_value(portfolio, w_start, snapshot.risk_free_rate)
            self.model_values[model_id].append((w_start, value_prev))
            for day in week_days:
                value = self.static_value(portfolio, day, store.rates[day])
                self.model_pnl[model_id][day] = value - value_prev
                self.model_values[model_id].append((day, value))
                value_prev = value

            proceeds = value_prev  # expiry payoff plus matured cash
            records = self.funding[model_id]
            prior = records[-1]["balance_after"] if records else 0.0
            accrued = prior * math.exp(store.rates[w_start] * tau1)
            records.append({
                "week_start": w_start.isoformat(),
                "week_end": w_end.isoformat(),
                "setup_cost": portfolio.setup_cost,
                "proceeds": proceeds,
                "balance_after": accrued - portfolio.setup_cost + proceeds,
            })


def run(spec: BacktestSpec, data_root: str | Path | MarketDataStore) -> BacktestResult:
    store = data_root if isinstance(data_root, MarketDataStore) else MarketDataStore.load(data_root)
    expiries = monthly_expiries(
        spec.start - dt.timedelta(days=40), spec.end + dt.timedelta(days=40), store.holidays
    )
    cycles = [
        (a, b) for a, b in zip(expiries, expiries[1:])
        if a >= spec.start and b <= spec.end and a in store.spot
    ]
    if not cycles:
        raise MissingData(
            f"window {spec.start}..{spec.end} does not cover a full monthly cycle"
        )
    engine = _Engine(spec, store)
    for cycle_start, cycle_end in cycles:
        engine.run_cycle(cycle_start, cycle_end)

    dates = engine.target_dates
    target = PnlSeries("target", dates, np.array(engine.target_pnl))
    models = {}
    for model_id in spec.models:
        marks = engine.model_pnl[model_id]
        if not marks and parse_model_id(model_id)[0] == "carr_wu" and spec.option_kind != CALL:
            continue
        pnl = np.array([marks.get(d, 0.0) for d in dates])
        models[model_id] = PnlSeries(model_id, dates, pnl)
    return BacktestResult(
        spec=spec, target=target, models=models,
        target_values=engine.target_values, model_values=engine.model_values,
        hedges=engine.hedges, funding=engine.funding,
    )


def resolve_window(
    window, store_dates: list[dt.date]
) -> tuple[dt.date, dt.date]:
    """Window preset: 'full', 'covid', or {'start': ..., 'end': ...}."""
    if window == "full" or window is None:
        return store_dates[0], store_dates[-1]
    if window == "covid":
        return COVID_WINDOW
    if isinstance(window, dict):
        return (dt.date.fromisoformat(window["start"]), dt.date.fromisoformat(window["end"]))
    if isinstance(window, (tuple, list)) and len(window) == 2:
        start, end = window
        if isinstance(start, str):
            start = dt.date.fromisoformat(start)
        if isinstance(end, str):
            end = dt.date.fromisoformat(end)
        return start, end
    raise ValueError(f"unrecognized window spec {window!r}")


def write_outputs(result: BacktestResult, outdir: str | Path) -> dict[str, Path]:
    """Per-universe PnL CSV, fit-summary JSON and weekly hedge JSONs."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    pnl_path = outdir / "pnl.csv"
    lines = ["date,target_pnl,model_id,model_pnl,hedge_error"]
    for model_id in sorted(result.models):
        series = result.models[model_id]
        for date, tgt, mdl in zip(result.target.dates, result.target.pnl, series.pnl):
            lines.append(f"{date.isoformat()},{tgt!r},{model_id},{mdl!r},{tgt - mdl!r}")
    pnl_path.write_text("\n".join(lines) + "\n")

    summary = {"universe": result.spec.universe, "seed": result.spec.seed,
               "window": [result.spec.start.isoformat(), result.spec.end.isoformat()],
               "models": {}}
    for model_id, series in sorted(result.models.items()):
        err = result.target.pnl - series.pnl
        beta, r2 = _ols(result.target.pnl, series.pnl)
        summary["models"][model_id] = {
            "rmse": float(np.sqrt(np.mean(err**2))),
            "mae": float(np.mean(np.abs(err))),
            "beta": beta,
            "r_squared": r2,
            "n_obs": int(len(err)),
        }
    summary_path = outdir / "summary.json"
    summary_path.write_text(json.dumps(summary, sort_keys=True, indent=2))

    hedge_dir = outdir / "hedges"
    hedge_dir.mkdir(exist_ok=True)
    for record in result.hedges:
        builder = record.portfolio.diagnostics.get("builder", "hedge")
        fwd = record.portfolio.diagnostics.get("fwd_model", "")
        scheme = record.portfolio.diagnostics.get("scheme", "")
        tag = "_".join(x for x in (builder, fwd, scheme) if x)
        path = hedge_dir / f"{record.week_start.isoformat()}_{tag}.json"
        path.write_text(record.portfolio.to_json())

    marks_path = outdir / "target_marks.csv"
    mark_lines = ["date,close,marked_from_model"]
    for date, value, flagged in result.target_values:
        mark_lines.append(f"{date.isoformat()},{value!r},{int(flagged)}")
    marks_path.write_text("\n".join(mark_lines) + "\n")

    funding_path = outdir / "funding.json"
    funding_path.write_text(json.dumps(result.funding, sort_keys=True, indent=2))
    return {"pnl": pnl_path, "summary": summary_path, "hedges": hedge_dir, "marks": marks_path}
