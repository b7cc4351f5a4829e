"""Deterministic simulator of a school-building sensor fleet.

Replaces the physical installation: emits per-room environment and power
readings plus a whole-building power series on a fixed interval. All noise
comes from splitmix64 keyed on (seed, room, kind, tick), so identical
(config, t0, t1) produce byte-identical streams, and scenario injection can
recreate the classic misuse situations (lights left on, standby loads) for
end-to-end tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from typing import Iterator
from zoneinfo import ZoneInfo

from .ingest import Reading, Source, make_reading
from .model import ResourceKind, ResourceTree, SensorKind, resolve_path
from .model import NotFound as TreeNotFound
from .store import BadRange
from .timeutil import format_ts

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

ROOM_KINDS = (
    SensorKind.TEMPERATURE_C,
    SensorKind.HUMIDITY_PCT,
    SensorKind.NOISE_DB,
    SensorKind.ACTIVITY_COUNT,
    SensorKind.OCCUPANCY_COUNT,
    SensorKind.LIGHT_STATE,
    SensorKind.POWER_W,
)

CSV_HEADER = "series_id,timestamp,kind,value"


def splitmix64(seed: int, index: int) -> int:
    """index-th output of the splitmix64 sequence for `seed` (stateless form)."""
    z = (seed + (index + 1) * _GAMMA) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def unit_float(seed: int, index: int) -> float:
    """Uniform in [0, 1) with 53-bit resolution."""
    return (splitmix64(seed, index) >> 11) * (2.0**-53)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


class ScenarioKind(Enum):
    LIGHTS_LEFT_ON = "lights_left_on"
    STANDBY_LOAD = "standby_load"
    HEATING_SPIKE = "heating_spike"


class UnknownRoom(Exception):
    pass


class OverlappingScenario(Exception):
    pass


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind
    target: str  # room path
    start: int
    end: int
    magnitude: float = 0.0

    def active(self, ts: int) -> bool:
        return self.start <= ts < self.end


@dataclass(frozen=True)
class RoomProfile:
    base_power_w: float = 120.0
    occupied_extra_w: float = 900.0
    lighting_w: float = 400.0
    occupied_start_h: int = 8
    occupied_end_h: int = 16
    occupants: int = 22
    temp_base_c: float = 21.0
    temp_amplitude_c: float = 2.5

    def __post_init__(self):
        if not (0 <= self.occupied_start_h <= 24 and 0 <= self.occupied_end_h <= 24):
            raise ValueError("schedule hours must be within 0-24")


@dataclass(frozen=True)
class SimConfig:
    tree: ResourceTree
    profiles: dict[str, RoomProfile]
    interval_s: int = 60
    seed: int = 1
    rng: str = "splitmix64"
    scenarios: tuple[Scenario, ...] = ()

    def __post_init__(self):
        if self.interval_s <= 0:
            raise ValueError("interval_s must be positive")
        if self.rng != "splitmix64":
            raise ValueError(f"unsupported rng {self.rng!r}")


def inject(cfg: SimConfig, scenario: Scenario) -> SimConfig:
    """Return a config with the scenario added; scenarios on one room must not overlap."""
    if scenario.target not in cfg.profiles:
        raise UnknownRoom(scenario.target)
    if scenario.start >= scenario.end:
        raise ValueError("scenario start must precede end")
    for existing in cfg.scenarios:
        if existing.target == scenario.target and not (
            scenario.end <= existing.start or existing.end <= scenario.start
        ):
            raise OverlappingScenario(
                f"{scenario.target}: [{scenario.start}, {scenario.end}) overlaps "
                f"[{existing.start}, {existing.end})"
            )
    return replace(cfg, scenarios=cfg.scenarios + (scenario,))


def _room_zone(tree: ResourceTree, room_path: str) -> ZoneInfo:
    node = resolve_path(tree, room_path)
    building = tree.building_of(node.id)
    tz = building.metadata.timezone if building and building.metadata else "UTC"
    return ZoneInfo(tz)


def _scheduled_occupied(ts: int, profile: RoomProfile, zone: ZoneInfo) -> bool:
    local = datetime.fromtimestamp(ts, zone)
    if local.weekday() >= 5:
        return False
    hour = local.hour + local.minute / 60.0
    return profile.occupied_start_h <= hour < profile.occupied_end_h


def simulate(cfg: SimConfig, t0: int, t1: int) -> Iterator[Reading]:
    """Generate the reading stream for [t0, t1), timestamp-ordered.

    Per room and tick: temperature rides a daily sinusoid with seeded noise,
    noise/activity/occupancy follow the weekday schedule, light_state tracks
    occupancy, and power is base + occupied extra + lighting. A whole-building
    power reading equal to the sum of its room powers closes each tick.
    """
    if t0 >= t1:
        raise BadRange(f"empty simulation window [{t0}, {t1})")
    tree = cfg.tree
    rooms = sorted(cfg.profiles)
    zones = {path: _room_zone(tree, path) for path in rooms}
    building_paths: dict[str, str] = {}
    for path in rooms:
        node = resolve_path(tree, path)
        building = tree.building_of(node.id)
        if building is None:
            raise UnknownRoom(f"{path} has no containing building")
        building_paths[path] = tree.canonical_path(building.id)
    streams = {
        (path, kind): splitmix64(cfg.seed, fnv1a64(f"{path}:{kind.value}") & 0x7FFFFFFF)
        for path in rooms
        for kind in ROOM_KINDS
    }

    for tick, ts in enumerate(range(t0, t1, cfg.interval_s)):
        building_power: dict[str, list[float]] = {}
        for path in rooms:
            profile = cfg.profiles[path]
            occupied = _scheduled_occupied(ts, profile, zones[path])
            light = 1 if occupied else 0
            extra_power = 0.0
            temp_gain = 1.0
            for sc in cfg.scenarios:
                if sc.target != path or not sc.active(ts):
                    continue
                if sc.kind is ScenarioKind.LIGHTS_LEFT_ON:
                    occupied = False
                    light = 1
                elif sc.kind is ScenarioKind.STANDBY_LOAD:
                    occupied = False
                    light = 0
                    extra_power += sc.magnitude
                elif sc.kind is ScenarioKind.HEATING_SPIKE:
                    temp_gain = sc.magnitude

            def rnd(kind: SensorKind) -> float:
                return unit_float(streams[(path, kind)], tick)

            sod = ts % 86400
            drift = profile.temp_amplitude_c * math.sin(2 * math.pi * (sod - 21600) / 86400)
            temperature = profile.temp_base_c + temp_gain * drift + (rnd(SensorKind.TEMPERATURE_C) - 0.5) * 0.6
            humidity = 45.0 + 8.0 * math.sin(2 * math.pi * sod / 86400) + (rnd(SensorKind.HUMIDITY_PCT) - 0.5) * 4.0
            if occupied:
                noise = 52.0 + 12.0 * rnd(SensorKind.NOISE_DB)
                activity = float(int(20 + 40 * rnd(SensorKind.ACTIVITY_COUNT)))
                occupancy = float(profile.occupants + int(4 * rnd(SensorKind.OCCUPANCY_COUNT)))
            else:
                noise = 30.0 + 4.0 * rnd(SensorKind.NOISE_DB)
                activity = 0.0
                occupancy = 0.0
            power = (
                profile.base_power_w
                + (profile.occupied_extra_w if occupied else 0.0)
                + light * profile.lighting_w
                + extra_power
            )
            power *= 1.0 + (rnd(SensorKind.POWER_W) - 0.5) * 0.04

            values = {
                SensorKind.TEMPERATURE_C: round(max(-50.0, min(60.0, temperature)), 3),
                SensorKind.HUMIDITY_PCT: round(max(0.0, min(100.0, humidity)), 3),
                SensorKind.NOISE_DB: round(max(0.0, min(140.0, noise)), 3),
                SensorKind.ACTIVITY_COUNT: activity,
                SensorKind.OCCUPANCY_COUNT: occupancy,
                SensorKind.LIGHT_STATE: float(light),
                SensorKind.POWER_W: round(max(0.0, power), 3),
            }
            building_power.setdefault(building_paths[path], []).append(values[SensorKind.POWER_W])
            for kind in ROOM_KINDS:
                yield make_reading(path, kind, ts, values[kind], Source.IOT)
        for bpath in sorted(building_power):
            yield make_reading(
                bpath, SensorKind.POWER_W, ts, math.fsum(building_power[bpath]), Source.IOT
            )


def write_csv(readings, fh) -> int:
    """Write readings as `series_id,timestamp,kind,value` rows; returns the count."""
    fh.write(CSV_HEADER + "\n")
    n = 0
    for r in readings:
        fh.write(f"{r.series_id},{format_ts(r.ts)},{r.kind.value},{r.value!r}\n")
        n += 1
    return n


def profile_from_doc(doc: dict) -> RoomProfile:
    return RoomProfile(
        base_power_w=float(doc.get("base_power_w", 120.0)),
        occupied_extra_w=float(doc.get("occupied_extra_w", 900.0)),
        lighting_w=float(doc.get("lighting_w", 400.0)),
        occupied_start_h=int(doc.get("occupied_start_h", 8)),
        occupied_end_h=int(doc.get("occupied_end_h", 16)),
        occupants=int(doc.get("occupants", 22)),
        temp_base_c=float(doc.get("temp_base_c", 21.0)),
        temp_amplitude_c=float(doc.get("temp_amplitude_c", 2.5)),
    )


def scenario_from_doc(doc: dict) -> Scenario:
    from .timeutil import parse_ts

    start = doc["start"] if isinstance(doc["start"], int) else parse_ts(doc["start"])
    end = doc["end"] if isinstance(doc["end"], int) else parse_ts(doc["end"])
    return Scenario(
        kind=ScenarioKind(doc["kind"]),
        target=doc["target"],
        start=start,
        end=end,
        magnitude=float(doc.get("magnitude", 0.0)),
    )


def config_from_doc(doc: dict, tree: ResourceTree) -> SimConfig:
    """Build a SimConfig from a parsed sim config document plus the tree."""
    profiles = {path: profile_from_doc(p) for path, p in doc.get("rooms", {}).items()}
    for path in profiles:
        try:
            node = resolve_path(tree, path)
        except TreeNotFound:
            raise UnknownRoom(path) from None
        if node.kind is not ResourceKind.ROOM:
            raise UnknownRoom(f"{path} is not a room")
    cfg = SimConfig(
        tree=tree,
        profiles=profiles,
        interval_s=int(doc.get("interval_s", 60)),
        seed=int(doc.get("seed", 1)),
        rng=doc.get("rng", "splitmix64"),
    )
    for sdoc in doc.get("scenarios", []):
        cfg = inject(cfg, scenario_from_doc(sdoc))
    return cfg
