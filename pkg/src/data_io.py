"""
Daily datasets: percentage log-returns, realized variance from intraday bars,
joint (date, close|return, rv) CSV files and their validation.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from errors import DataError, InsufficientDataError
from model import JointSeries

logger = logging.getLogger("data_io")

RV_FLOOR = 1e-8
MAX_GAP_DAYS = 5
DATE_FORMAT = "%Y-%m-%d"
SCHEMAS = (("date", "close", "rv"), ("date", "return", "rv"))


@dataclass(frozen=True)
class PriceBar:
    timestamp: pd.Timestamp
    price: float

    def __post_init__(self):
        if not np.isfinite(self.price) or self.price <= 0.0:
            raise DataError(f"bar price must be positive, got {self.price!r} at {self.timestamp}")


@dataclass(frozen=True)
class DailyRecord:
    date: pd.Timestamp
    close: float
    rv: float

    def __post_init__(self):
        if self.close <= 0.0 or self.rv <= 0.0:
            raise DataError(f"close and rv must be positive on {self.date}, got ({self.close}, {self.rv})")


# -----------------------------
# Transformations
# -----------------------------
def _positive_prices(prices, what):
    p = np.asarray(prices, dtype=float)
    bad = np.flatnonzero(~np.isfinite(p) | (p <= 0.0))
    if bad.size:
        raise DataError(f"{what} must be positive and finite; offending positions {bad[:10].tolist()}", rows=bad.tolist())
    return p


def compute_returns(closes):
    """r_t = 100 (log C_t - log C_{t-1}); one element shorter than the input."""
    c = _positive_prices(closes, "closes")
    if len(c) < 2:
        raise InsufficientDataError(f"need at least 2 closes, got {len(c)}")
    return 100.0 * np.diff(np.log(c))


def compute_rv(prices):
    """Open-to-close realized variance: sum of squared intraday percentage log-returns."""
    p = _positive_prices(prices, "bar prices")
    if len(p) < 2:
        raise InsufficientDataError(f"realized variance needs at least 2 bars, got {len(p)}")
    return float(np.sum((100.0 * np.diff(np.log(p))) ** 2))


def build_daily_records(closes: pd.Series, bars: pd.DataFrame):
    """
    Daily (date, close, rv) frame from closing prices and intraday bars.

    `closes` is indexed by date; `bars` has `timestamp` and `price` columns. Days without
    enough bars are dropped; a zero RV is floored at RV_FLOOR.
    """
    if not {"timestamp", "price"} <= set(bars.columns):
        raise DataError(f"bars need columns timestamp and price, got {list(bars.columns)}")
    stamps = pd.to_datetime(bars["timestamp"])
    prices = bars["price"].astype(float)

    rv = {}
    for day, idx in stamps.groupby(stamps.dt.normalize()).groups.items():
        day_bars = [PriceBar(ts, p) for ts, p in zip(stamps.loc[idx], prices.loc[idx])]
        if any(b.timestamp <= a.timestamp for a, b in zip(day_bars, day_bars[1:])):
            raise DataError(f"bar timestamps on {day.date()} are not strictly increasing")
        try:
            value = compute_rv([b.price for b in day_bars])
        except InsufficientDataError:
            logger.warning("dropping %s: fewer than 2 intraday bars", day.date())
            continue
        if value <= 0.0:
            logger.warning("zero realized variance on %s floored at %g", day.date(), RV_FLOOR)
            value = RV_FLOOR
        rv[day] = value

    close = pd.Series(closes, dtype=float)
    close.index = pd.to_datetime(close.index).normalize()
    records = [DailyRecord(date, c, rv[date]) for date, c in close.items() if date in rv]
    dropped = len(close) - len(records)
    if dropped:
        logger.warning("%d close(s) without a realized variance were dropped", dropped)
    return pd.DataFrame(records, columns=["date", "close", "rv"])


# -----------------------------
# Files
# -----------------------------
def _parse_float(text):
    try:
        return float(text)
    except ValueError:
        return np.nan


def _read_frame(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    cols = tuple(c.strip().lower() for c in raw.columns)
    schema = next((s for s in SCHEMAS if cols == s), None)
    if schema is None:
        raise DataError(f"{path}: columns {list(raw.columns)} match neither schema {[list(s) for s in SCHEMAS]}")
    raw.columns = schema

    frame = pd.DataFrame({"date": pd.to_datetime(raw["date"], format="ISO8601", errors="coerce")})
    for col in schema[1:]:
        frame[col] = raw[col].map(_parse_float)
    bad = frame.isna().any(axis=1).to_numpy()
    if bad.any():
        lines = (np.flatnonzero(bad) + 2).tolist()
        raise DataError(f"{path}: unparseable rows at lines {lines[:10]}", rows=lines)
    return frame


@dataclass
class ValidationReport:
    """Row references are file line numbers (header is line 1)."""

    rows: int
    non_positive_rv: list = field(default_factory=list)
    duplicate_dates: list = field(default_factory=list)
    unordered_dates: list = field(default_factory=list)
    non_positive_close: list = field(default_factory=list)
    gaps: list = field(default_factory=list)

    @property
    def ok(self):
        # calendar gaps are informational
        return not (self.non_positive_rv or self.duplicate_dates or self.unordered_dates or self.non_positive_close)

    def to_json(self):
        return json.dumps({"ok": self.ok, **asdict(self)}, indent=2, default=str)


def validate(data):
    """Check a joint frame (or JointSeries) for non-positive rv, duplicate or unordered dates and gaps."""
    if isinstance(data, JointSeries):
        frame = pd.DataFrame({"date": data.dates, "return": data.r, "rv": data.x})
    else:
        frame = data.reset_index(drop=True)
    lines = np.arange(len(frame)) + 2
    dates = pd.Series(frame["date"])

    report = ValidationReport(rows=len(frame))
    report.non_positive_rv = lines[(frame["rv"] <= 0.0).to_numpy()].tolist()
    if "close" in frame:
        report.non_positive_close = lines[(frame["close"] <= 0.0).to_numpy()].tolist()
    report.duplicate_dates = lines[dates.duplicated(keep=False).to_numpy()].tolist()
    if pd.api.types.is_datetime64_any_dtype(dates):
        step = dates.diff()
        report.unordered_dates = lines[(step <= pd.Timedelta(0)).to_numpy() & ~dates.duplicated().to_numpy()].tolist()
        wide = np.flatnonzero((step > pd.Timedelta(days=MAX_GAP_DAYS)).to_numpy())
        report.gaps = [(dates.iloc[i - 1].strftime(DATE_FORMAT), dates.iloc[i].strftime(DATE_FORMAT)) for i in wide]
    return report


def _to_series(frame):
    if "close" in frame:
        returns = compute_returns(frame["close"].to_numpy())
        return JointSeries(dates=pd.DatetimeIndex(frame["date"].iloc[1:]), r=returns, x=frame["rv"].to_numpy()[1:])
    return JointSeries(dates=pd.DatetimeIndex(frame["date"]), r=frame["return"].to_numpy(), x=frame["rv"].to_numpy())


def load_joint_csv(path):
    """
    Read a (date, close, rv) or (date, return, rv) file into a JointSeries.

    Close files yield one return fewer than rows: rv on the first day is dropped.
    """
    frame = _read_frame(path)
    report = validate(frame)
    if not report.ok:
        raise DataError(f"{path} failed validation: {report.to_json()}", rows=sorted(
            report.non_positive_rv + report.duplicate_dates + report.unordered_dates + report.non_positive_close
        ))
    for start, stop in report.gaps:
        logger.info("%s: calendar gap %s -> %s", path, start, stop)
    series = _to_series(frame)
    logger.debug("loaded %d observations from %s", len(series), path)
    return series


def validate_file(path):
    return validate(_read_frame(path))


def save_joint_csv(data, path):
    """Canonical writer: ISO dates, shortest round-trip floats, (date, return, rv) for series."""
    if isinstance(data, JointSeries):
        dates = data.dates
        frame = pd.DataFrame({"return": data.r, "rv": data.x})
    else:
        dates = pd.Index(data["date"])
        frame = data.drop(columns="date").reset_index(drop=True)
    if isinstance(dates, pd.DatetimeIndex):
        dates = dates.strftime(DATE_FORMAT)
    frame.insert(0, "date", np.asarray(dates))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    return path


def series_name(path):
    return Path(path).stem
