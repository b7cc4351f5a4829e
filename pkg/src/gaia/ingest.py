"""Validates and appends live IoT readings, participatory manual entries, and CSV uploads.

Every accepted reading lands in the series store and is handed to the rule
engine in per-series order. Series are identified one-to-one with
(resource_path, kind, source).
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Callable

from .model import (
    Action,
    KIND_SPECS,
    COMFORT_KINDS,
    ResourceTree,
    SensorKind,
    User,
    authorize,
    resolve_path,
    value_error,
)
from .model import NotFound as TreeNotFound
from .store import SeriesStore
from .timeutil import local_midnight, parse_ts

FUTURE_TOLERANCE_S = 300  # clock skew allowance on field devices
UPLOAD_INTERVALS = (900, 3600)
UPLOAD_HEADER = "timestamp,value"


class Source(Enum):
    IOT = "iot"
    MANUAL = "manual"
    FILE = "file"


def series_id_for(resource_path: str, kind: SensorKind, source: Source) -> str:
    return f"{resource_path.replace('/', '.')}.{kind.value}.{source.value}"


@dataclass(frozen=True)
class Reading:
    series_id: str
    resource_path: str
    kind: SensorKind
    ts: int
    value: float
    source: Source
    author: str | None = None


def make_reading(
    resource_path: str,
    kind: SensorKind,
    ts: int,
    value: float,
    source: Source = Source.IOT,
    author: str | None = None,
) -> Reading:
    return Reading(
        series_id=series_id_for(resource_path, kind, source),
        resource_path=resource_path,
        kind=kind,
        ts=ts,
        value=value,
        source=source,
        author=author,
    )


@dataclass(frozen=True)
class SeriesMeta:
    series_id: str
    resource_path: str
    kind: SensorKind
    unit: str
    source: Source
    nominal_interval_s: int | None = None


@dataclass(frozen=True)
class Ack:
    series_id: str
    seq: int


@dataclass
class UploadReport:
    series_id: str
    accepted_count: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)


class ValidationFailed(Exception):
    pass


class Unauthorized(Exception):
    pass


class UnknownResource(Exception):
    pass


class EmptyFile(Exception):
    pass


class BadHeader(Exception):
    pass


class Ingestor:
    """Validation and append pipeline in front of the series store.

    `clock` supplies ingest time for future-timestamp checks; `on_reading` is
    called after each durable append (the rule engine hook).
    """

    def __init__(
        self,
        store: SeriesStore,
        tree_provider: Callable[[], ResourceTree],
        clock: Callable[[], float] = time.time,
        on_reading: Callable[[Reading], None] | None = None,
    ):
        self.store = store
        self._tree = tree_provider
        self.clock = clock
        self.on_reading = on_reading
        self._meta: dict[str, SeriesMeta] = {}
        self._lock = threading.Lock()
        self._comfort_votes: dict[tuple[str, str, SensorKind], int] = {}

    # -- series registry -----------------------------------------------------

    def register_series(self, meta: SeriesMeta) -> SeriesMeta:
        with self._lock:
            existing = self._meta.get(meta.series_id)
            if existing is not None:
                if (existing.resource_path, existing.kind, existing.source) != (
                    meta.resource_path,
                    meta.kind,
                    meta.source,
                ):
                    raise ValidationFailed(
                        f"series {meta.series_id!r} already bound to "
                        f"({existing.resource_path}, {existing.kind.value}, {existing.source.value})"
                    )
                if meta.nominal_interval_s and not existing.nominal_interval_s:
                    self._meta[meta.series_id] = meta
                    return meta
                return existing
            # Create before publishing the meta so a concurrent reader of the
            # registry never appends to a series the store has not seen.
            self.store.create(meta.series_id)
            self._meta[meta.series_id] = meta
        return meta

    def ensure_series(
        self,
        resource_path: str,
        kind: SensorKind,
        source: Source,
        nominal_interval_s: int | None = None,
    ) -> SeriesMeta:
        return self.register_series(
            SeriesMeta(
                series_id=series_id_for(resource_path, kind, source),
                resource_path=resource_path,
                kind=kind,
                unit=KIND_SPECS[kind].unit,
                source=source,
                nominal_interval_s=nominal_interval_s,
            )
        )

    def series_meta(self, series_id: str) -> SeriesMeta | None:
        return self._meta.get(series_id)

    def series_for(self, resource_path: str, kind: SensorKind) -> list[SeriesMeta]:
        """All registered series carrying (resource_path, kind), any source."""
        with self._lock:
            return [
                m
                for m in self._meta.values()
                if m.resource_path == resource_path and m.kind == kind
            ]

    def all_series(self) -> list[SeriesMeta]:
        with self._lock:
            return sorted(self._meta.values(), key=lambda m: m.series_id)

    # -- single readings -----------------------------------------------------

    def ingest_reading(self, r: Reading, user: User | None = None) -> Ack:
        tree = self._tree()
        try:
            node = resolve_path(tree, r.resource_path)
        except TreeNotFound:
            raise UnknownResource(r.resource_path) from None

        reason = value_error(r.kind, r.value)
        if reason:
            raise ValidationFailed(reason)
        if r.ts > self.clock() + FUTURE_TOLERANCE_S:
            raise ValidationFailed("timestamp too far in the future")

        if r.source is Source.MANUAL:
            if user is None or not authorize(user, Action.INSERT_READING, node, tree):
                raise Unauthorized(f"insert_reading denied on {r.resource_path}")
            if r.kind in COMFORT_KINDS:
                self._check_comfort_vote(user.id, r)

        expected_id = series_id_for(r.resource_path, r.kind, r.source)
        if r.series_id != expected_id:
            raise ValidationFailed(
                f"series id {r.series_id!r} does not match ({r.resource_path}, "
                f"{r.kind.value}, {r.source.value})"
            )
        self.ensure_series(r.resource_path, r.kind, r.source)
        point = self.store.append(r.series_id, r.ts, float(r.value))
        if self.on_reading is not None:
            self.on_reading(r)
        return Ack(series_id=r.series_id, seq=point.seq)

    def _check_comfort_vote(self, user_id: str, r: Reading) -> None:
        # One comfort vote per user per resource per hour keeps ballots honest.
        key = (user_id, r.resource_path, r.kind)
        hour = r.ts // 3600
        with self._lock:
            if self._comfort_votes.get(key) == hour:
                raise ValidationFailed("comfort vote already recorded for this hour")
            self._comfort_votes[key] = hour

    # -- manual monthly meter readings ----------------------------------------

    def ingest_manual_monthly(
        self, series_id: str, day: date, cumulative_kwh: float, user: User
    ) -> Ack:
        """Store a cumulative meter reading taken on `day` (building-local midnight).

        A value below the previous reading is accepted; meter resets are
        flagged downstream when consumption is derived.
        """
        meta = self._meta.get(series_id)
        if meta is None:
            raise UnknownResource(f"series {series_id!r} not registered")
        if cumulative_kwh < 0:
            raise ValidationFailed("cumulative reading must be non-negative")
        tree = self._tree()
        node = resolve_path(tree, meta.resource_path)
        if not authorize(user, Action.INSERT_READING, node, tree):
            raise Unauthorized(f"insert_reading denied on {meta.resource_path}")
        building = tree.building_of(node.id)
        tz = building.metadata.timezone if building and building.metadata else "UTC"
        ts = local_midnight(day, tz)
        point = self.store.append(series_id, ts, float(cumulative_kwh))
        if self.on_reading is not None:
            self.on_reading(
                Reading(series_id, meta.resource_path, meta.kind, ts, float(cumulative_kwh),
                        meta.source, user.id)
            )
        return Ack(series_id=series_id, seq=point.seq)

    # -- CSV uploads -----------------------------------------------------------

    def ingest_file(self, content: bytes | str, meta: SeriesMeta, user: User) -> UploadReport:
        """Ingest an interval-energy CSV (`timestamp,value` header).

        Each row's value is the energy consumed during the interval ending at
        the row's timestamp; accepted rows are stored at the interval start so
        calendar buckets line up with the physical interval. Rows failing
        validation are reported individually; the rest are accepted.
        """
        if meta.nominal_interval_s not in UPLOAD_INTERVALS:
            raise ValidationFailed(
                f"upload interval must be one of {UPLOAD_INTERVALS}, got {meta.nominal_interval_s}"
            )
        tree = self._tree()
        try:
            node = resolve_path(tree, meta.resource_path)
        except TreeNotFound:
            raise UnknownResource(meta.resource_path) from None
        if not authorize(user, Action.INSERT_BUILDING_DATA, node, tree):
            raise Unauthorized(f"file upload denied on {meta.resource_path}")

        if isinstance(content, bytes):
            try:
                text = content.decode("utf-8-sig")
            except UnicodeDecodeError:
                raise BadHeader("file is not UTF-8 text") from None
        else:
            text = content.lstrip("﻿")

        lines = text.splitlines()
        header_idx = next((i for i, ln in enumerate(lines) if ln.strip()), None)
        if header_idx is None:
            raise EmptyFile("no rows in file")
        if lines[header_idx].strip().lower() != UPLOAD_HEADER:
            raise BadHeader(f"expected header {UPLOAD_HEADER!r}, got {lines[header_idx].strip()!r}")

        interval = meta.nominal_interval_s
        meta = self.register_series(meta)
        report = UploadReport(series_id=meta.series_id)
        rows = 0
        for lineno, line in enumerate(lines[header_idx + 1 :], start=header_idx + 2):
            if not line.strip():
                continue
            rows += 1
            fields = line.split(",")
            if len(fields) != 2:
                report.rejected.append((lineno, "malformed row"))
                continue
            try:
                ts = parse_ts(fields[0])
            except ValueError:
                report.rejected.append((lineno, "invalid timestamp"))
                continue
            if ts % interval != 0:
                report.rejected.append((lineno, "off-grid timestamp"))
                continue
            try:
                value = float(fields[1])
            except ValueError:
                report.rejected.append((lineno, "invalid value"))
                continue
            reason = value_error(meta.kind, value)
            if reason:
                report.rejected.append((lineno, reason))
                continue
            self.store.append(meta.series_id, ts - interval, value)
            report.accepted_count += 1
        if rows == 0:
            raise EmptyFile("no data rows after header")
        return report
