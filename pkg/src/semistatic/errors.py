"""Exception types shared across the package."""


class HedgingError(Exception):
    """Base class for all package errors."""


class DataError(HedgingError):
    """Malformed input file content (carries file and row context)."""


class MissingData(HedgingError):
    """A required market observation is absent (instrument/date named in message)."""


class DegenerateTenor(HedgingError):
    """Zero or negative year fraction where a positive tenor is required."""


class NoLiquidCandidates(HedgingError):
    """Liquidity and moneyness filters removed every candidate instrument."""


class InvalidInput(HedgingError):
    """NaN or out-of-domain numeric input to a pricing routine."""


class NoImpliedVol(HedgingError):
    """Option price lies outside static arbitrage bounds; no vol can match it."""


class ConvergenceFailure(HedgingError):
    """An iterative solver exhausted its iteration budget."""


class InsufficientAnchors(HedgingError):
    """Fewer than two usable smile anchors survive calibration filters."""
