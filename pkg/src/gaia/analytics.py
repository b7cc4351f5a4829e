"""Historic and peer-building comparisons, meter-difference consumption, and anomaly detection.

All computations are pure reads over store snapshots. Anomalies use robust
statistics (median / MAD) against an hour-of-week profile, which tolerates the
schedule outliers school data is full of.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .model import BuildingMeta, ResourceKind, ResourceTree, SensorKind
from .store import Agg, SeriesStore, Timescale
from .timeutil import WEEK_S

PEER_SURFACE_BAND = 0.25  # peers are within +/-25% of the subject's floor area
MAD_CONSISTENCY = 1.4826  # scales MAD to the stddev of a normal distribution


class TooFewPoints(Exception):
    pass


class NoData(Exception):
    pass


class MissingMetadata(Exception):
    pass


class InsufficientHistory(Exception):
    pass


# -- meter differences -----------------------------------------------------------


@dataclass(frozen=True)
class ConsumptionInterval:
    start_ts: int
    end_ts: int
    kwh: float | None  # None when the interval straddles a meter reset
    reset: bool


def derive_consumption(readings: Sequence[tuple[int, float]]) -> list[ConsumptionInterval]:
    """Interval consumption from cumulative meter readings.

    consumption[i] = reading[i+1] - reading[i]; a negative step is a meter
    reset, flagged with an unknown value for that interval.
    """
    pts = sorted(readings)
    if len(pts) < 2:
        raise TooFewPoints("need at least two cumulative readings")
    out = []
    for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
        delta = v1 - v0
        if delta < 0:
            out.append(ConsumptionInterval(t0, t1, None, True))
        else:
            out.append(ConsumptionInterval(t0, t1, delta, False))
    return out


def consumption_total(intervals: Sequence[ConsumptionInterval]) -> float:
    return math.fsum(iv.kwh for iv in intervals if iv.kwh is not None)


# -- comparisons -------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonResult:
    subject: str
    baseline_descriptor: str
    metric: str
    subject_value: float
    baseline_value: float
    delta_pct: float | None  # None when the baseline is zero
    comments: str


def percent_delta(subject: float, baseline: float) -> float | None:
    if baseline == 0:
        return None
    return 100.0 * (subject - baseline) / baseline


def comparison_comment(delta_pct: float | None, baseline_descriptor: str) -> str:
    if delta_pct is None:
        return f"baseline ({baseline_descriptor}) is zero; percentage comparison undefined"
    if delta_pct == 0:
        return f"unchanged from {baseline_descriptor}"
    direction = "less" if delta_pct < 0 else "more"
    return f"{abs(delta_pct):.1f}% {direction} than {baseline_descriptor}"


def in_peer_band(subject: BuildingMeta, other: BuildingMeta) -> bool:
    """Same building type, floor area within the band relative to the subject.

    The band is one-sided by definition: A may accept B while B rejects A.
    """
    if subject.building_type != other.building_type:
        return False
    return abs(other.surface_m2 - subject.surface_m2) <= PEER_SURFACE_BAND * subject.surface_m2


def energy_intensity(total_kwh: float, meta: BuildingMeta | None) -> float:
    """kWh per square metre of floor area."""
    if meta is None or not meta.surface_m2:
        raise MissingMetadata("building has no surface area recorded")
    return total_kwh / meta.surface_m2


# -- anomalies -----------------------------------------------------------------------


@dataclass(frozen=True)
class AnomalyParams:
    baseline_weeks: int = 4
    threshold: float = 3.0
    zero_scale_floor: float = 1e-6  # stand-in scale when the baseline MAD is zero


@dataclass(frozen=True)
class Anomaly:
    ts: int
    observed: float
    expected: float
    score: float
    direction: str  # "high" | "low"
    series_id: str | None = None


def _hour_of_week(ts: int) -> int:
    return (ts // 3600) % 168


def detect_anomalies(
    points: Sequence[tuple[int, float]], params: AnomalyParams = AnomalyParams()
) -> list[Anomaly]:
    """Flag points that deviate from their hour-of-week profile.

    For each point, expected is the median of same hour-of-week values in the
    trailing baseline window, scale is 1.4826*MAD of those values, and the
    point is flagged when |observed - expected| / scale >= threshold. A zero
    MAD (perfectly repetitive baseline) substitutes the configured floor as
    the scale, so only deviations above an absolute floor flag.
    """
    pts = sorted(points)
    if len(pts) < 2:
        raise InsufficientHistory("need a multi-week series")
    gaps = sorted(b[0] - a[0] for a, b in zip(pts, pts[1:]))
    median_gap = gaps[len(gaps) // 2]
    span = pts[-1][0] - pts[0][0]
    if span + median_gap < params.baseline_weeks * WEEK_S:
        raise InsufficientHistory(
            f"series spans less than {params.baseline_weeks} weeks"
        )
    by_hour: dict[int, list[tuple[int, float]]] = {}
    for ts, v in pts:
        by_hour.setdefault(_hour_of_week(ts), []).append((ts, v))
    out = []
    horizon = params.baseline_weeks * WEEK_S
    for ts, v in pts:
        baseline = [
            bv for bts, bv in by_hour[_hour_of_week(ts)] if ts - horizon <= bts < ts
        ]
        if not baseline:
            continue
        expected = statistics.median(baseline)
        mad = statistics.median([abs(b - expected) for b in baseline])
        scale = MAD_CONSISTENCY * mad
        if scale == 0:
            scale = params.zero_scale_floor
        score = (v - expected) / scale
        if abs(score) >= params.threshold:
            out.append(
                Anomaly(
                    ts=ts,
                    observed=v,
                    expected=expected,
                    score=score,
                    direction="high" if v > expected else "low",
                )
            )
    return out


# -- store-backed service ------------------------------------------------------------


class Analytics:
    """Read-side computations over the series store and resource tree."""

    def __init__(
        self,
        store: SeriesStore,
        tree_provider: Callable[[], ResourceTree],
        series_for_node: Callable[[str, SensorKind], list],
    ):
        self.store = store
        self._tree = tree_provider
        self._series_for_node = series_for_node

    def _building(self, building_id: str):
        tree = self._tree()
        node = tree.node(building_id)
        if node.kind is not ResourceKind.BUILDING:
            raise NoData(f"{building_id!r} is not a building")
        return tree, node

    def building_total(
        self, building_id: str, kind: SensorKind, t0: int, t1: int
    ) -> tuple[float, int]:
        """Summed value of `kind` series on the building node and its meters."""
        tree, node = self._building(building_id)
        total = 0.0
        samples = 0
        for nid in tree.subtree_ids(node.id):
            sub = tree.nodes[nid]
            if sub.kind not in (ResourceKind.BUILDING, ResourceKind.METER):
                continue
            for meta in self._series_for_node(tree.canonical_path(nid), kind):
                pts = self.store.query_range(meta.series_id, t0, t1)
                total += math.fsum(p.value for p in pts)
                samples += len(pts)
        return total, samples

    def compare_periods(
        self,
        building_id: str,
        kind: SensorKind,
        period: tuple[int, int],
        baseline_period: tuple[int, int],
        baseline_descriptor: str = "baseline period",
    ) -> ComparisonResult:
        subject_value, n_subj = self.building_total(building_id, kind, *period)
        baseline_value, n_base = self.building_total(building_id, kind, *baseline_period)
        if n_subj == 0 or n_base == 0:
            raise NoData("one of the compared periods has no data")
        delta = percent_delta(subject_value, baseline_value)
        return ComparisonResult(
            subject=building_id,
            baseline_descriptor=baseline_descriptor,
            metric=kind.value,
            subject_value=subject_value,
            baseline_value=baseline_value,
            delta_pct=delta,
            comments=comparison_comment(delta, baseline_descriptor),
        )

    def compare_to_peers(
        self, building_id: str, kind: SensorKind, period: tuple[int, int]
    ) -> ComparisonResult:
        """Energy-intensity comparison against the mean of the peer group."""
        tree, node = self._building(building_id)
        peers = self.peer_group(building_id)
        if not peers:
            raise NoData("no peer buildings")
        subj_total, n_subj = self.building_total(building_id, kind, *period)
        if n_subj == 0:
            raise NoData("subject period has no data")
        subj_intensity = energy_intensity(subj_total, node.metadata)
        peer_intensities = []
        for peer in peers:
            total, n = self.building_total(peer.id, kind, *period)
            if n:
                peer_intensities.append(energy_intensity(total, peer.metadata))
        if not peer_intensities:
            raise NoData("no peer has data in the period")
        baseline = math.fsum(peer_intensities) / len(peer_intensities)
        delta = percent_delta(subj_intensity, baseline)
        descriptor = f"peer group mean ({len(peer_intensities)} buildings, kWh/m2)"
        return ComparisonResult(
            subject=building_id,
            baseline_descriptor=descriptor,
            metric=f"{kind.value}_per_m2",
            subject_value=subj_intensity,
            baseline_value=baseline,
            delta_pct=delta,
            comments=comparison_comment(delta, descriptor),
        )

    def peer_group(self, building_id: str) -> list:
        tree, node = self._building(building_id)
        if node.metadata is None:
            raise MissingMetadata(f"building {building_id!r} has no metadata")
        return [
            other
            for other in tree.buildings()
            if other.id != node.id
            and other.metadata is not None
            and in_peer_band(node.metadata, other.metadata)
        ]

    def building_intensity(self, building_id: str, kind: SensorKind, t0: int, t1: int) -> float:
        tree, node = self._building(building_id)
        total, _ = self.building_total(building_id, kind, t0, t1)
        return energy_intensity(total, node.metadata)

    def anomalies(
        self,
        series_id: str,
        t0: int,
        t1: int,
        params: AnomalyParams = AnomalyParams(),
    ) -> list[Anomaly]:
        pts = [(p.ts, p.value) for p in self.store.query_range(series_id, t0, t1)]
        return [replace(a, series_id=series_id) for a in detect_anomalies(pts, params)]
