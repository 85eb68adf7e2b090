"""Market data ingestion and candidate selection.

Loads option chains, futures, spot levels and rates from flat CSV files,
derives the carry implied by futures quotes, and applies the volume /
open-interest / moneyness filters that define the liquid candidate set for
hedge construction.

File schemas (ISO-8601 dates, kind in {C, P}):
    options.csv  trade_date,expiry,kind,strike,close,volume,open_interest
    futures.csv  trade_date,expiry,close
    spot.csv     trade_date,close
    rates.csv    date,rate_decimal
    holidays.txt one ISO date per line
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateTenor, MissingData, NoLiquidCandidates
from .trading_calendar import load_holidays, year_fraction

CALL = "C"
PUT = "P"


@dataclass(frozen=True)
class OptionQuote:
    """One exchange option record."""

    trade_date: dt.date
    expiry: dt.date
    kind: str  # CALL or PUT
    strike: float
    close: float
    volume: float
    open_interest: float

    @property
    def icp(self) -> int:
        """Payoff sign: +1 for calls, -1 for puts."""
        return 1 if self.kind == CALL else -1


@dataclass
class MarketSnapshot:
    """All observables needed to build hedges on one date."""

    as_of: dt.date
    spot: float
    futures_close: dict[dt.date, float]
    risk_free_rate: float
    quotes: list[OptionQuote]
    weekly_expiry: dt.date
    monthly_expiry: dt.date

    def __post_init__(self):
        if not (self.as_of <= self.weekly_expiry <= self.monthly_expiry):
            raise ValueError(
                f"expiry ordering violated: {self.as_of} / {self.weekly_expiry} / {self.monthly_expiry}"
            )
        if not (self.spot > 0 and math.isfinite(self.risk_free_rate)):
            raise ValueError("spot must be positive and rate finite")

    def quotes_for(self, expiry: dt.date) -> list[OptionQuote]:
        return [q for q in self.quotes if q.expiry == expiry]


@dataclass
class CandidateSet:
    """Liquid (strike, kind) pairs eligible for the hedge portfolio."""

    instruments: list[tuple[float, str]]

    @property
    def p(self) -> int:
        return len(self.instruments)


def _parse_date(value: str, ctx: str) -> dt.date:
    try:
        return dt.date.fromisoformat(value.strip())
    except ValueError as exc:
        raise DataError(f"{ctx}: bad date {value!r}") from exc


def _parse_float(value: str, ctx: str, minimum: float | None = None) -> float:
    try:
        out = float(value)
    except ValueError as exc:
        raise DataError(f"{ctx}: bad number {value!r}") from exc
    if not math.isfinite(out):
        raise DataError(f"{ctx}: non-finite number {value!r}")
    if minimum is not None and out < minimum:
        raise DataError(f"{ctx}: value {out} below {minimum}")
    return out


def _read_rows(path: Path, expected_header: list[str]):
    if not path.exists():
        raise MissingData(f"input file not found: {path}")
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != expected_header:
            raise DataError(f"{path}: expected header {expected_header}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(expected_header):
                raise DataError(f"{path}:{lineno}: expected {len(expected_header)} fields, got {len(row)}")
            yield lineno, row


def load_options(path: str | Path) -> list[OptionQuote]:
    path = Path(path)
    quotes = []
    header = ["trade_date", "expiry", "kind", "strike", "close", "volume", "open_interest"]
    for lineno, row in _read_rows(path, header):
        ctx = f"{path}:{lineno}"
        trade_date = _parse_date(row[0], ctx)
        expiry = _parse_date(row[1], ctx)
        kind = row[2].strip().upper()
        if kind not in (CALL, PUT):
            raise DataError(f"{ctx}: kind must be C or P, got {row[2]!r}")
        strike = _parse_float(row[3], ctx)
        if strike <= 0:
            raise DataError(f"{ctx}: strike must be positive, got {strike}")
        close = _parse_float(row[4], ctx, minimum=0.0)
        volume = _parse_float(row[5], ctx, minimum=0.0)
        open_interest = _parse_float(row[6], ctx, minimum=0.0)
        if expiry < trade_date:
            raise DataError(f"{ctx}: expiry {expiry} before trade date {trade_date}")
        quotes.append(OptionQuote(trade_date, expiry, kind, strike, close, volume, open_interest))
    return quotes


def load_futures(path: str | Path) -> dict[dt.date, dict[dt.date, float]]:
    """Returns {trade_date: {expiry: close}}."""
    path = Path(path)
    out: dict[dt.date, dict[dt.date, float]] = {}
    for lineno, row in _read_rows(path, ["trade_date", "expiry", "close"]):
        ctx = f"{path}:{lineno}"
        trade_date = _parse_date(row[0], ctx)
        expiry = _parse_date(row[1], ctx)
        close = _parse_float(row[2], ctx, minimum=0.0)
        out.setdefault(trade_date, {})[expiry] = close
    return out


def load_spot(path: str | Path) -> dict[dt.date, float]:
    path = Path(path)
    out = {}
    for lineno, row in _read_rows(path, ["trade_date", "close"]):
        ctx = f"{path}:{lineno}"
        out[_parse_date(row[0], ctx)] = _parse_float(row[1], ctx, minimum=0.0)
    return out


def load_rates(path: str | Path) -> dict[dt.date, float]:
    path = Path(path)
    out = {}
    for lineno, row in _read_rows(path, ["date", "rate_decimal"]):
        ctx = f"{path}:{lineno}"
        out[_parse_date(row[0], ctx)] = _parse_float(row[1], ctx)
    return out


@dataclass
class MarketDataStore:
    """All flat files of one data root, indexed for snapshot assembly."""

    options_by_date: dict[dt.date, list[OptionQuote]]
    futures: dict[dt.date, dict[dt.date, float]]
    spot: dict[dt.date, float]
    rates: dict[dt.date, float]
    holidays: set[dt.date] = field(default_factory=set)

    @classmethod
    def load(cls, data_root: str | Path) -> "MarketDataStore":
        root = Path(data_root)
        options_by_date: dict[dt.date, list[OptionQuote]] = {}
        for quote in load_options(root / "options.csv"):
            options_by_date.setdefault(quote.trade_date, []).append(quote)
        return cls(
            options_by_date=options_by_date,
            futures=load_futures(root / "futures.csv"),
            spot=load_spot(root / "spot.csv"),
            rates=load_rates(root / "rates.csv"),
            holidays=load_holidays(root / "holidays.txt"),
        )

    def dates(self) -> list[dt.date]:
        return sorted(self.spot)

    def snapshot(self, as_of: dt.date, weekly_expiry: dt.date, monthly_expiry: dt.date) -> MarketSnapshot:
        if as_of not in self.spot:
            raise MissingData(f"no spot close for {as_of}")
        if as_of not in self.rates:
            raise MissingData(f"no rate for {as_of}")
        return MarketSnapshot(
            as_of=as_of,
            spot=self.spot[as_of],
            futures_close=dict(self.futures.get(as_of, {})),
            risk_free_rate=self.rates[as_of],
            quotes=list(self.options_by_date.get(as_of, [])),
            weekly_expiry=weekly_expiry,
            monthly_expiry=monthly_expiry,
        )

    def option_close(self, date: dt.date, expiry: dt.date, strike: float, kind: str) -> float:
        for q in self.options_by_date.get(date, []):
            if q.expiry == expiry and q.kind == kind and abs(q.strike - strike) < 1e-9:
                return q.close
        raise MissingData(f"no close for {kind} {strike:g} exp {expiry} on {date}")


def implied_carry(snapshot: MarketSnapshot, expiry: dt.date) -> tuple[float, float]:
    """Dividend yield q and futures-implied return r' = r - q for one expiry.

    Inverts F = S * exp((r - q) * tau), so S * exp((r - q) * tau) round-trips
    to the futures close exactly.
    """
    future = snapshot.futures_close.get(expiry)
    if future is None:
        raise MissingData(f"no futures close for expiry {expiry} on {snapshot.as_of}")
    tau = year_fraction(snapshot.as_of, expiry)
    if tau <= 0:
        raise DegenerateTenor(f"non-positive tenor {tau} for expiry {expiry}")
    r_prime = math.log(future / snapshot.spot) / tau
    return snapshot.risk_free_rate - r_prime, r_prime


def atm_strike(spot: float, strikes) -> float:
    """Strike with moneyness spot/strike nearest 1; ties go to the lower strike."""
    uniq = sorted(set(float(k) for k in strikes))
    if not uniq:
        raise NoLiquidCandidates("no strikes available for ATM lookup")
    return min(uniq, key=lambda k: (abs(spot / k - 1.0), k))


def classify_moneyness(spot: float, strike: float, kind: str) -> str:
    """Bucket an option by moneyness M = spot/strike into ATM / ITM / OTM.

    Calls map the nearest of {0.9, 1.0, 1.1} to {OTM, ATM, ITM}; puts mirror.
    """
    if strike <= 0:
        raise ValueError(f"strike must be positive, got {strike}")
    m = spot / strike
    targets = (0.9, 1.0, 1.1)
    nearest = min(targets, key=lambda x: (abs(m - x), x))
    if nearest == 1.0:
        return "ATM"
    if kind == CALL:
        return "OTM" if nearest == 0.9 else "ITM"
    return "ITM" if nearest == 0.9 else "OTM"


def moneyness_target(bucket: str, kind: str) -> float:
    """Moneyness level a target option should start at for a given bucket."""
    if bucket == "ATM":
        return 1.0
    if kind == CALL:
        return 1.1 if bucket == "ITM" else 0.9
    return 0.9 if bucket == "ITM" else 1.1


def liquid_quotes(
    quotes: list[OptionQuote],
    spot: float,
    *,
    joint_quantiles: bool = True,
) -> list[OptionQuote]:
    """Quotes passing the three filters: volume, open interest, ATM/OTM moneyness.

    Volume and open interest must be strictly greater than the median across
    the full chain passed in (jointly over calls and puts by default, per
    kind otherwise). Medians use linear interpolation between order
    statistics. ATM strike is the minimal |spot/strike - 1| strike; calls at
    or above it and puts at or below it survive the moneyness filter.
    """
    if not quotes:
        raise NoLiquidCandidates("empty option chain")
    k_atm = atm_strike(spot, [q.strike for q in quotes])

    def medians(subset):
        vol = float(np.median([q.volume for q in subset]))
        oi = float(np.median([q.open_interest for q in subset]))
        return vol, oi

    if joint_quantiles:
        med = {CALL: medians(quotes), PUT: medians(quotes)}
    else:
        med = {}
        for kind in (CALL, PUT):
            sub = [q for q in quotes if q.kind == kind]
            med[kind] = medians(sub) if sub else (math.inf, math.inf)

    out = []
    for q in quotes:
        med_vol, med_oi = med[q.kind]
        if not (q.volume > med_vol and q.open_interest > med_oi):
            continue
        if q.kind == CALL and q.strike < k_atm:
            continue
        if q.kind == PUT and q.strike > k_atm:
            continue
        # an all-ITM chain makes the nearest-to-par strike ITM itself; drop it
        if classify_moneyness(spot, q.strike, q.kind) == "ITM":
            continue
        out.append(q)
    return out


def select_candidates(snapshot: MarketSnapshot, *, joint_quantiles: bool = True) -> CandidateSet:
    """Liquid weekly-expiry instruments eligible for hedge construction."""
    chain = snapshot.quotes_for(snapshot.weekly_expiry)
    if not chain:
        raise NoLiquidCandidates(f"no weekly-expiry quotes on {snapshot.as_of}")
    survivors = liquid_quotes(chain, snapshot.spot, joint_quantiles=joint_quantiles)
    seen = set()
    instruments = []
    for q in survivors:
        key = (q.strike, q.kind)
        if key not in seen:
            seen.add(key)
            instruments.append(key)
    if not instruments:
        raise NoLiquidCandidates(f"liquidity filters removed every weekly option on {snapshot.as_of}")
    instruments.sort()
    return CandidateSet(instruments=instruments)
