"""Durable append-oriented time-series storage with range queries and calendar aggregation.

Each series is one append-only log file under the store directory plus an
in-memory index. Appends are flushed before they are acknowledged, so a killed
process loses nothing that was acked. Duplicate timestamps within a series are
resolved last-write-wins.
"""

from __future__ import annotations

import math
import os
import re
import threading
from bisect import bisect_left, insort
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from zoneinfo import ZoneInfo


class Timescale(Enum):
    DAILY = "daily"
    WEEKLY = "weekly"
    MONTHLY = "monthly"
    YEARLY = "yearly"


class Agg(Enum):
    SUM = "sum"
    MEAN = "mean"
    MIN = "min"
    MAX = "max"
    COUNT = "count"


@dataclass(frozen=True)
class Point:
    ts: int
    value: float
    seq: int


@dataclass(frozen=True)
class AggregateBucket:
    bucket_start: int
    timescale: Timescale
    agg: Agg
    value: float
    sample_count: int


class UnknownSeries(Exception):
    pass


class BadRange(Exception):
    pass


class StoreCorrupt(Exception):
    pass


SERIES_ID_RE = re.compile(r"^[a-z0-9._:-]+$")


def bucket_start(ts: int, timescale: Timescale, tz: ZoneInfo) -> int:
    """Calendar floor of `ts` in the given zone: local midnight of the day,
    ISO week (Monday), first of the month, or January 1st."""
    local = datetime.fromtimestamp(ts, tz)
    day = local.date()
    if timescale is Timescale.WEEKLY:
        day = day - timedelta(days=day.weekday())
    elif timescale is Timescale.MONTHLY:
        day = day.replace(day=1)
    elif timescale is Timescale.YEARLY:
        day = day.replace(month=1, day=1)
    return int(datetime(day.year, day.month, day.day, tzinfo=tz).timestamp())


def _fold(agg: Agg, values: list[float]) -> float:
    if agg is Agg.SUM:
        return math.fsum(values)
    if agg is Agg.MEAN:
        return math.fsum(values) / len(values)
    if agg is Agg.MIN:
        return min(values)
    if agg is Agg.MAX:
        return max(values)
    return float(len(values))


class _Series:
    __slots__ = ("ts_sorted", "by_ts", "next_seq", "fh", "lock")

    def __init__(self, fh):
        self.ts_sorted: list[int] = []
        self.by_ts: dict[int, tuple[float, int]] = {}
        self.next_seq = 1
        self.fh = fh
        self.lock = threading.Lock()


class SeriesStore:
    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self._lock = threading.Lock()
        self._series: dict[str, _Series] = {}
        self._load_existing()

    # -- lifecycle -----------------------------------------------------------

    def _path_for(self, series_id: str) -> str:
        return os.path.join(self.directory, series_id + ".log")

    def _load_existing(self) -> None:
        for fn in sorted(os.listdir(self.directory)):
            if fn.endswith(".log"):
                self._open_series(fn[:-4], must_exist=True)

    def _open_series(self, series_id: str, must_exist: bool = False) -> _Series:
        path = self._path_for(series_id)
        s = _Series(None)
        if os.path.exists(path):
            with open(path, "r", encoding="ascii") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        seq_s, ts_s, val_s = line.split(" ")
                        seq, ts, value = int(seq_s), int(ts_s), float(val_s)
                    except ValueError as exc:
                        raise StoreCorrupt(f"{path}:{lineno}: unreadable record") from exc
                    if ts not in s.by_ts:
                        insort(s.ts_sorted, ts)
                    s.by_ts[ts] = (value, seq)
                    s.next_seq = max(s.next_seq, seq + 1)
        elif must_exist:
            raise UnknownSeries(series_id)
        s.fh = open(path, "a", encoding="ascii")
        self._series[series_id] = s
        return s

    def create(self, series_id: str) -> None:
        if not SERIES_ID_RE.match(series_id):
            raise ValueError(f"bad series id {series_id!r}")
        with self._lock:
            if series_id not in self._series:
                self._open_series(series_id)

    def has(self, series_id: str) -> bool:
        return series_id in self._series

    def series_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._series)

    def close(self) -> None:
        with self._lock:
            for s in self._series.values():
                with s.lock:
                    if s.fh and not s.fh.closed:
                        s.fh.flush()
                        s.fh.close()

    def _get(self, series_id: str) -> _Series:
        try:
            return self._series[series_id]
        except KeyError:
            raise UnknownSeries(series_id) from None

    # -- writes --------------------------------------------------------------

    def append(self, series_id: str, ts: int, value: float) -> Point:
        """Durably append one point; returns it with its assigned sequence number.

        An existing point at the same timestamp is overwritten (last write
        wins) but still consumes a fresh sequence number.
        """
        s = self._get(series_id)
        with s.lock:
            seq = s.next_seq
            s.next_seq += 1
            s.fh.write(f"{seq} {ts} {value!r}\n")
            s.fh.flush()
            if ts not in s.by_ts:
                insort(s.ts_sorted, ts)
            s.by_ts[ts] = (value, seq)
        return Point(ts=ts, value=value, seq=seq)

    # -- reads ---------------------------------------------------------------

    def count(self, series_id: str) -> int:
        s = self._get(series_id)
        with s.lock:
            return len(s.ts_sorted)

    def latest(self, series_id: str) -> Point | None:
        s = self._get(series_id)
        with s.lock:
            if not s.ts_sorted:
                return None
            ts = s.ts_sorted[-1]
            value, seq = s.by_ts[ts]
            return Point(ts, value, seq)

    def last_at(self, series_id: str, ts_max: int) -> Point | None:
        """Most recent point with ts <= ts_max."""
        s = self._get(series_id)
        with s.lock:
            i = bisect_left(s.ts_sorted, ts_max + 1)
            if i == 0:
                return None
            ts = s.ts_sorted[i - 1]
            value, seq = s.by_ts[ts]
            return Point(ts, value, seq)

    def query_range(self, series_id: str, t0: int, t1: int) -> list[Point]:
        """Timestamp-sorted points in the half-open window [t0, t1)."""
        if t0 >= t1:
            raise BadRange(f"empty range [{t0}, {t1})")
        s = self._get(series_id)
        with s.lock:
            lo = bisect_left(s.ts_sorted, t0)
            hi = bisect_left(s.ts_sorted, t1)
            return [Point(ts, *s.by_ts[ts]) for ts in s.ts_sorted[lo:hi]]

    def aggregate(
        self,
        series_id: str,
        timescale: Timescale,
        agg: Agg,
        t0: int,
        t1: int,
        tz: str = "UTC",
    ) -> list[AggregateBucket]:
        """Calendar-bucketed aggregates over [t0, t1) in the building's zone.

        Days start at local midnight, weeks on ISO Monday, months and years on
        the calendar boundary. Buckets without samples are omitted. Sums use
        compensated summation.
        """
        points = self.query_range(series_id, t0, t1)
        zone = ZoneInfo(tz)
        groups: dict[int, list[float]] = {}
        for p in points:
            groups.setdefault(bucket_start(p.ts, timescale, zone), []).append(p.value)
        return [
            AggregateBucket(start, timescale, agg, _fold(agg, values), len(values))
            for start, values in sorted(groups.items())
        ]
