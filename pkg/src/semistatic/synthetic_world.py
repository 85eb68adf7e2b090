"""Fully consistent synthetic markets for oracle and acceptance testing.

Every option close is a Black-Scholes price under a known volatility rule,
futures carry the exact forward, and volumes/open interest are shaped so the
liquidity filters keep a controlled near-the-money band. The generated files
use the same CSV schemas the ingestion layer reads.
"""
from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .pricing import price_vec
from .trading_calendar import (
    DAYS_PER_YEAR,
    business_days,
    monthly_expiries,
    weekly_expiries,
    year_fraction,
)

LIQUID_VOLUME = 50_000.0
LIQUID_OI = 100_000.0
WING_VOLUME = 100.0
WING_OI = 200.0


@dataclass
class VolSpec:
    """Implied-volatility rule quoted by the synthetic exchange.

    kind "flat": sigma = level everywhere.
    kind "smile": sigma(M) = level + curvature * (M - 1)^2.
    kind "term": linear interpolation of vol across tenor anchors
                 [(tenor_years, vol), ...], flat outside.
    """

    kind: str = "flat"
    level: float = 0.2
    curvature: float = 0.0
    term_anchors: list[tuple[float, float]] = field(default_factory=list)

    def sigma(self, moneyness, tenor: float):
        if self.kind == "flat":
            return np.full_like(np.asarray(moneyness, dtype=float), self.level)
        if self.kind == "smile":
            m = np.asarray(moneyness, dtype=float)
            return self.level + self.curvature * np.square(m - 1.0)
        if self.kind == "term":
            taus = np.array([t for t, _ in self.term_anchors])
            vols = np.array([v for _, v in self.term_anchors])
            val = float(np.interp(tenor, taus, vols))
            return np.full_like(np.asarray(moneyness, dtype=float), val)
        raise ValueError(f"unknown vol rule {self.kind!r}")


@dataclass
class WorldSpec:
    index: str = "SYN"
    s0: float = 10_000.0
    rate: float = 0.05
    carry: float = 0.01
    vol: VolSpec = field(default_factory=VolSpec)
    path_vol: float | None = None  # realized spot vol; defaults to quoted ATM level
    strike_step_pct: float = 0.003
    moneyness_lo: float = 0.6
    moneyness_hi: float = 1.4
    liquid_half_band: float = 0.085  # |ln M| below which quotes are liquid
    start: dt.date = dt.date(2019, 7, 25)
    end: dt.date = dt.date(2020, 7, 30)
    seed: int = 12345

    def realized_vol(self) -> float:
        if self.path_vol is not None:
            return self.path_vol
        return float(np.asarray(self.vol.sigma(1.0, 28.0 / DAYS_PER_YEAR)).item())


def _spot_path(spec: WorldSpec, days: list[dt.date]) -> dict[dt.date, float]:
    gen = np.random.Generator(np.random.Philox(key=np.uint64(spec.seed)))
    vol = spec.realized_vol()
    drift = spec.rate - spec.carry
    spots = {days[0]: spec.s0}
    level = spec.s0
    for prev, day in zip(days, days[1:]):
        dtau = (day - prev).days / DAYS_PER_YEAR
        z = gen.standard_normal()
        level *= math.exp((drift - 0.5 * vol * vol) * dtau + vol * math.sqrt(dtau) * z)
        spots[day] = level
    return spots


def generate(spec: WorldSpec, data_root: str | Path) -> Path:
    """Write options/futures/spot/rates/holidays CSVs; returns the data root."""
    root = Path(data_root)
    root.mkdir(parents=True, exist_ok=True)
    holidays: set[dt.date] = set()

    days = business_days(spec.start, spec.end, holidays)
    horizon = spec.end + dt.timedelta(days=45)
    weekly = weekly_expiries(spec.start, horizon, holidays)
    monthly = monthly_expiries(spec.start, horizon, holidays)
    spots = _spot_path(spec, days)

    step = max(round(spec.s0 * spec.strike_step_pct), 1)

    def chain_strikes(spot: float) -> np.ndarray:
        # moneyness M = spot/K in [lo, hi]  =>  K in [spot/hi, spot/lo]
        k_lo = int(math.floor(spot / spec.moneyness_hi / step)) * step
        k_hi = int(math.ceil(spot / spec.moneyness_lo / step)) * step
        return np.arange(k_lo, k_hi + step, step, dtype=float)

    listed: dict[dt.date, set[float]] = {}
    option_rows: list[str] = []
    futures_rows: list[str] = []
    spot_rows: list[str] = []
    rate_rows: list[str] = []

    for day in days:
        spot = spots[day]
        spot_rows.append(f"{day.isoformat()},{spot!r}")
        rate_rows.append(f"{day.isoformat()},{spec.rate!r}")

        quoted_expiries: list[dt.date] = []
        for expiry in weekly:
            if 0 <= (expiry - day).days <= 7:
                quoted_expiries.append(expiry)
        for expiry in monthly:
            if 0 <= (expiry - day).days <= 40 and expiry not in quoted_expiries:
                quoted_expiries.append(expiry)

        for expiry in sorted(quoted_expiries):
            tau = year_fraction(day, expiry)
            future = spot * math.exp((spec.rate - spec.carry) * tau)
            futures_rows.append(f"{day.isoformat()},{expiry.isoformat()},{future!r}")

            strikes = listed.setdefault(expiry, set())
            strikes.update(chain_strikes(spot).tolist())
            ks = np.array(sorted(strikes))
            m = spot / ks
            sigma = np.asarray(spec.vol.sigma(m, tau), dtype=float)
            calls = price_vec(spot, ks, spec.rate, spec.carry, sigma, tau, 1)
            puts = price_vec(spot, ks, spec.rate, spec.carry, sigma, tau, -1)
            liquid = np.abs(np.log(m)) <= spec.liquid_half_band
            for k, c, p, liq in zip(ks, calls, puts, liquid):
                vol_flag = LIQUID_VOLUME if liq else WING_VOLUME
                oi_flag = LIQUID_OI if liq else WING_OI
                for kind, close in (("C", c), ("P", p)):
                    option_rows.append(
                        f"{day.isoformat()},{expiry.isoformat()},{kind},{k!r},{close!r},{vol_flag!r},{oi_flag!r}"
                    )

    (root / "options.csv").write_text(
        "trade_date,expiry,kind,strike,close,volume,open_interest\n" + "\n".join(option_rows) + "\n"
    )
    (root / "futures.csv").write_text(
        "trade_date,expiry,close\n" + "\n".join(futures_rows) + "\n"
    )
    (root / "spot.csv").write_text("trade_date,close\n" + "\n".join(spot_rows) + "\n")
    (root / "rates.csv").write_text("date,rate_decimal\n" + "\n".join(rate_rows) + "\n")
    (root / "holidays.txt").write_text("")

    manifest = asdict(spec)
    manifest["start"] = spec.start.isoformat()
    manifest["end"] = spec.end.isoformat()
    (root / "world.json").write_text(json.dumps(manifest, sort_keys=True, indent=2))
    return root
