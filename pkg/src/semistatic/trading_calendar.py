"""Trading-calendar helpers: business days, weekly (Thursday) and monthly expiries.

Expiries fall on Thursdays; when a Thursday is a holiday the expiry shifts to
the previous business day. Year fractions are ACT/365 throughout.
"""
from __future__ import annotations

import datetime as dt
from pathlib import Path

THURSDAY = 3  # datetime.weekday() convention, Monday == 0

DAYS_PER_YEAR = 365.0


def year_fraction(start: dt.date, end: dt.date) -> float:
    return (end - start).days / DAYS_PER_YEAR


def load_holidays(path: str | Path) -> set[dt.date]:
    """Read a holiday file with one ISO date per line; blank lines ignored."""
    holidays: set[dt.date] = set()
    p = Path(path)
    if not p.exists():
        return holidays
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        text = line.strip()
        if not text:
            continue
        try:
            holidays.add(dt.date.fromisoformat(text))
        except ValueError as exc:
            raise ValueError(f"{p}:{lineno}: bad holiday date {text!r}") from exc
    return holidays


def is_business_day(day: dt.date, holidays: set[dt.date]) -> bool:
    return day.weekday() < 5 and day not in holidays


def prev_business_day(day: dt.date, holidays: set[dt.date]) -> dt.date:
    day -= dt.timedelta(days=1)
    while not is_business_day(day, holidays):
        day -= dt.timedelta(days=1)
    return day


def next_business_day(day: dt.date, holidays: set[dt.date]) -> dt.date:
    day += dt.timedelta(days=1)
    while not is_business_day(day, holidays):
        day += dt.timedelta(days=1)
    return day


def adjust_expiry(day: dt.date, holidays: set[dt.date]) -> dt.date:
    """Listed expiry day, shifted to the previous business day when closed."""
    while not is_business_day(day, holidays):
        day -= dt.timedelta(days=1)
    return day


def weekly_expiries(start: dt.date, end: dt.date, holidays: set[dt.date]) -> list[dt.date]:
    """Adjusted Thursday expiries whose listed Thursday lies in [start, end]."""
    first = start + dt.timedelta(days=(THURSDAY - start.weekday()) % 7)
    out = []
    day = first
    while day <= end:
        out.append(adjust_expiry(day, holidays))
        day += dt.timedelta(days=7)
    return out


def last_thursday(year: int, month: int) -> dt.date:
    if month == 12:
        nxt = dt.date(year + 1, 1, 1)
    else:
        nxt = dt.date(year, month + 1, 1)
    day = nxt - dt.timedelta(days=1)
    while day.weekday() != THURSDAY:
        day -= dt.timedelta(days=1)
    return day


def monthly_expiries(start: dt.date, end: dt.date, holidays: set[dt.date]) -> list[dt.date]:
    """Adjusted last-Thursday expiries within [start, end]."""
    out = []
    year, month = start.year, start.month
    while (year, month) <= (end.year, end.month):
        expiry = adjust_expiry(last_thursday(year, month), holidays)
        if start <= expiry <= end:
            out.append(expiry)
        month += 1
        if month == 13:
            year, month = year + 1, 1
    return out


def business_days(start: dt.date, end: dt.date, holidays: set[dt.date]) -> list[dt.date]:
    day = start
    out = []
    while day <= end:
        if is_business_day(day, holidays):
            out.append(day)
        day += dt.timedelta(days=1)
    return out
