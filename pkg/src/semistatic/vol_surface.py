"""Implied-volatility smiles and the forward-volatility models built on them.

A surface holds, for one observation date, smile anchors per tenor in
moneyness M = spot/strike. Four within-smile schemes are supported: linear
interpolation, natural cubic spline, and least-squares quadratic / cubic
polynomial fits. Extrapolation is flat in both M and tenor; across tenors,
total variance sigma^2 * tau interpolates linearly in tau.
"""
from __future__ import annotations

import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InsufficientAnchors, NoImpliedVol, ConvergenceFailure
from .market_data import CALL, PUT, MarketSnapshot, atm_strike, implied_carry, liquid_quotes
from .pricing import implied_vol
from .trading_calendar import year_fraction

log = logging.getLogger(__name__)

INTERP_SCHEMES = ("linear", "cubic_spline", "quadratic_fit", "cubic_fit")
FORWARD_VOL_MODELS = ("constant_vol", "constant_smile", "constant_surface", "forward_smile")

FORWARD_VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class SmileAnchor:
    moneyness: float
    vol: float


@dataclass
class VolSurface:
    as_of: dt.date
    tenors: list[tuple[float, list[SmileAnchor]]]
    scheme: str = "linear"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.scheme not in INTERP_SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {INTERP_SCHEMES}")
        self.tenors = sorted(((float(t), list(a)) for t, a in self.tenors), key=lambda x: x[0])
        for tenor, anchors in self.tenors:
            if len(anchors) < 2:
                raise InsufficientAnchors(f"tenor {tenor:.6g} has {len(anchors)} anchors; need >= 2")
            ms = [a.moneyness for a in anchors]
            if sorted(set(ms)) != ms:
                raise ValueError(f"anchors for tenor {tenor:.6g} must be sorted and unique in moneyness")

    def with_scheme(self, scheme: str) -> "VolSurface":
        return replace(self, scheme=scheme, _cache={})

    def tenor_grid(self) -> list[float]:
        return [t for t, _ in self.tenors]

    def _smile_fn(self, idx: int):
        key = (idx, self.scheme)
        fn = self._cache.get(key)
        if fn is None:
            _, anchors = self.tenors[idx]
            fn = _make_smile_fn(anchors, self.scheme)
            self._cache[key] = fn
        return fn


def _make_smile_fn(anchors: list[SmileAnchor], scheme: str):
    m = np.array([a.moneyness for a in anchors])
    v = np.array([a.vol for a in anchors])
    lo, hi = m[0], m[-1]
    if scheme == "linear":
        def evaluate(x):
            return np.interp(np.clip(x, lo, hi), m, v)
    elif scheme == "cubic_spline":
        if len(m) == 2:
            def evaluate(x):
                return np.interp(np.clip(x, lo, hi), m, v)
        else:
            spline = CubicSpline(m, v, bc_type="natural")
            def evaluate(x):
                return spline(np.clip(x, lo, hi))
    else:
        degree = 2 if scheme == "quadratic_fit" else 3
        # least-squares over all anchors; degenerates to interpolation when
        # the anchor count does not exceed degree + 1
        degree = min(degree, len(m) - 1)
        coeffs = np.polyfit(m, v, degree)
        def evaluate(x):
            return np.polyval(coeffs, np.clip(x, lo, hi))
    return evaluate


def build_smile(
    snapshot: MarketSnapshot,
    expiry: dt.date,
    *,
    joint_quantiles: bool = True,
) -> list[SmileAnchor]:
    """Anchors for one expiry from liquid quotes: OTM calls below M=1, OTM
    puts above, and a single averaged call/put vol at the ATM strike."""
    chain = snapshot.quotes_for(expiry)
    if not chain:
        raise InsufficientAnchors(f"no quotes for expiry {expiry} on {snapshot.as_of}")
    liquid = liquid_quotes(chain, snapshot.spot, joint_quantiles=joint_quantiles)
    if not liquid:
        raise InsufficientAnchors(f"no liquid quotes for expiry {expiry} on {snapshot.as_of}")

    tenor = year_fraction(snapshot.as_of, expiry)
    try:
        carry, _ = implied_carry(snapshot, expiry)
    except Exception:
        carry = 0.0

    k_atm = atm_strike(snapshot.spot, [q.strike for q in liquid])

    def vol_of(quote):
        try:
            return implied_vol(
                quote.close, snapshot.spot, quote.strike, snapshot.risk_free_rate,
                carry, tenor, quote.kind,
            )
        except (NoImpliedVol, ConvergenceFailure) as exc:
            log.warning("dropping %s %g exp %s: %s", quote.kind, quote.strike, expiry, exc)
            return None

    anchors: dict[float, float] = {}
    atm_vols = []
    for q in liquid:
        m = snapshot.spot / q.strike
        if abs(q.strike - k_atm) < 1e-9:
            v = vol_of(q)
            if v is not None:
                atm_vols.append(v)
            continue
        if q.kind == CALL and m < 1.0:
            v = vol_of(q)
            if v is not None:
                anchors[m] = v
        elif q.kind == PUT and m > 1.0:
            v = vol_of(q)
            if v is not None:
                anchors[m] = v
    if atm_vols:
        anchors[snapshot.spot / k_atm] = sum(atm_vols) / len(atm_vols)

    if len(anchors) < 2:
        raise InsufficientAnchors(
            f"only {len(anchors)} anchors for expiry {expiry} on {snapshot.as_of}; need >= 2"
        )
    return [SmileAnchor(m, anchors[m]) for m in sorted(anchors)]


def build_surface(
    snapshot: MarketSnapshot,
    expiries: list[dt.date],
    scheme: str = "linear",
    *,
    joint_quantiles: bool = True,
) -> VolSurface:
    tenors = []
    for expiry in expiries:
        anchors = build_smile(snapshot, expiry, joint_quantiles=joint_quantiles)
        tenors.append((year_fraction(snapshot.as_of, expiry), anchors))
    return VolSurface(as_of=snapshot.as_of, tenors=tenors, scheme=scheme)


def vol_at(surface: VolSurface, moneyness, tenor: float):
    """Volatility at (M, tau); M may be an array. Flat extrapolation outside
    the anchor hull in M and outside the calibrated tenor range in tau;
    between tenors, total variance interpolates linearly in tau."""
    m = np.asarray(moneyness, dtype=float)
    grid = surface.tenor_grid()
    if tenor <= grid[0] or len(grid) == 1:
        out = surface._smile_fn(0)(m)
    elif tenor >= grid[-1]:
        out = surface._smile_fn(len(grid) - 1)(m)
    else:
        hi = next(i for i, t in enumerate(grid) if t >= tenor)
        lo = hi - 1
        t_lo, t_hi = grid[lo], grid[hi]
        w = (tenor - t_lo) / (t_hi - t_lo)
        var_tau = (1.0 - w) * np.square(surface._smile_fn(lo)(m)) * t_lo \
            + w * np.square(surface._smile_fn(hi)(m)) * t_hi
        out = np.sqrt(var_tau / tenor)
    if np.ndim(moneyness) == 0:
        return float(out)
    return out


def forward_vol(
    surface: VolSurface,
    model: str,
    s_t1,
    s_t0: float,
    k_star: float,
    t0: dt.date,
    t1: dt.date,
    t2: dt.date,
):
    """Volatility for pricing the target option at its shorter horizon.

    Four conventions: the target's own calibrated vol frozen at the build
    date (constant_vol), the build-date smile for the target's expiry read
    at the realized moneyness (constant_smile), the build-date smile for the
    remaining tenor (constant_surface), or the forward variance between the
    two tenors (forward_smile). s_t1 may be an array of simulated levels.
    """
    if model not in FORWARD_VOL_MODELS:
        raise ValueError(f"unknown forward-vol model {model!r}; expected one of {FORWARD_VOL_MODELS}")
    tau_full = year_fraction(t0, t2)
    tau_rem = year_fraction(t1, t2)
    scalar = np.ndim(s_t1) == 0

    if model == "constant_vol":
        sigma = vol_at(surface, s_t0 / k_star, tau_full)
        out = np.full_like(np.asarray(s_t1, dtype=float), sigma) if not scalar else sigma
        return out

    m1 = np.asarray(s_t1, dtype=float) / k_star
    if model == "constant_smile":
        out = vol_at(surface, m1, tau_full)
    elif model == "constant_surface":
        out = vol_at(surface, m1, tau_rem)
    else:  # forward_smile
        tau_short = year_fraction(t0, t1)
        var_full = np.square(vol_at(surface, m1, tau_full)) * tau_full
        var_short = np.square(vol_at(surface, m1, tau_short)) * tau_short
        fwd_var = var_full - var_short
        if np.any(fwd_var < -1e-12):
            log.warning(
                "negative forward variance (min %.3e) floored at %.1e on %s",
                float(np.min(fwd_var)), FORWARD_VARIANCE_FLOOR, surface.as_of,
            )
        if tau_rem <= 0:
            out = np.zeros_like(fwd_var)
        else:
            out = np.sqrt(np.maximum(fwd_var, FORWARD_VARIANCE_FLOOR) / tau_rem)
    if scalar:
        return float(out)
    return out


def surface_to_json(surface: VolSurface) -> str:
    payload = {
        "as_of": surface.as_of.isoformat(),
        "scheme": surface.scheme,
        "tenors": [
            {
                "tenor_years": tenor,
                "moneyness": [a.moneyness for a in anchors],
                "vols": [a.vol for a in anchors],
            }
            for tenor, anchors in surface.tenors
        ],
    }
    return json.dumps(payload, sort_keys=True, indent=2)


def surface_from_json(text: str) -> VolSurface:
    payload = json.loads(text)
    tenors = [
        (entry["tenor_years"],
         [SmileAnchor(m, v) for m, v in zip(entry["moneyness"], entry["vols"])])
        for entry in payload["tenors"]
    ]
    return VolSurface(
        as_of=dt.date.fromisoformat(payload["as_of"]),
        tenors=tenors,
        scheme=payload["scheme"],
    )


def save_surface(surface: VolSurface, path: str | Path) -> None:
    Path(path).write_text(surface_to_json(surface))


def load_surface(path: str | Path) -> VolSurface:
    return surface_from_json(Path(path).read_text())
