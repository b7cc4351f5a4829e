"""Timestamp helpers. All instants are UTC unix seconds (int, second precision)."""

from __future__ import annotations

from datetime import date, datetime, timezone
from zoneinfo import ZoneInfo

DAY_S = 86400
WEEK_S = 7 * DAY_S


def parse_ts(text: str) -> int:
    """Parse an ISO-8601 instant such as '2017-01-15T10:00:00Z' to unix seconds."""
    t = text.strip()
    if t.endswith(("Z", "z")):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_ts(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def local_midnight(day: date, tz: str) -> int:
    """Unix seconds of midnight on `day` in the named zone."""
    return int(datetime(day.year, day.month, day.day, tzinfo=ZoneInfo(tz)).timestamp())
