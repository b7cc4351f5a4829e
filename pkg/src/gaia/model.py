"""Resource tree, users, roles, sensor kinds, and authorization shared by every module.

Resources form a site -> building -> floor -> room/meter tree. Node names are
lowercase slugs and must be unique among siblings so every node has exactly one
canonical slash-separated path.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from enum import Enum


class ResourceKind(Enum):
    SITE = "site"
    BUILDING = "building"
    FLOOR = "floor"
    ROOM = "room"
    METER = "meter"


# Which kinds a node may be parented under. A site is always a root.
# Meters and rooms may sit directly under a building (whole-building metering)
# or under a floor.
ALLOWED_PARENTS: dict[ResourceKind, frozenset[ResourceKind]] = {
    ResourceKind.SITE: frozenset(),
    ResourceKind.BUILDING: frozenset({ResourceKind.SITE}),
    ResourceKind.FLOOR: frozenset({ResourceKind.BUILDING}),
    ResourceKind.ROOM: frozenset({ResourceKind.FLOOR, ResourceKind.BUILDING}),
    ResourceKind.METER: frozenset({ResourceKind.FLOOR, ResourceKind.BUILDING}),
}

NAME_RE = re.compile(r"^[a-z0-9-]+$")


class EnergyType(Enum):
    ELECTRICITY = "electricity"
    HEATING_FUEL = "heating_fuel"
    GAS = "gas"
    DISTRICT_HEAT = "district_heat"


class SensorKind(Enum):
    POWER_W = "power_w"
    ENERGY_KWH = "energy_kwh"
    TEMPERATURE_C = "temperature_c"
    HUMIDITY_PCT = "humidity_pct"
    NOISE_DB = "noise_db"
    ACTIVITY_COUNT = "activity_count"
    LUMINOSITY_LUX = "luminosity_lux"
    LIGHT_STATE = "light_state"
    OCCUPANCY_COUNT = "occupancy_count"
    COMFORT_THERMAL = "comfort_thermal"
    COMFORT_LUMINOSITY = "comfort_luminosity"
    FUEL_CONSUMPTION_L = "fuel_consumption_l"


@dataclass(frozen=True)
class KindSpec:
    unit: str
    lo: float
    hi: float
    integral: bool = False
    cumulative: bool = False  # values accumulate (sum-aggregated) rather than sample a level


KIND_SPECS: dict[SensorKind, KindSpec] = {
    SensorKind.POWER_W: KindSpec("W", 0.0, 1e7),
    SensorKind.ENERGY_KWH: KindSpec("kWh", 0.0, 1e9, cumulative=True),
    SensorKind.TEMPERATURE_C: KindSpec("degC", -50.0, 60.0),
    SensorKind.HUMIDITY_PCT: KindSpec("%", 0.0, 100.0),
    SensorKind.NOISE_DB: KindSpec("dB", 0.0, 140.0),
    SensorKind.ACTIVITY_COUNT: KindSpec("count", 0.0, 1e6, integral=True),
    SensorKind.LUMINOSITY_LUX: KindSpec("lx", 0.0, 2e5),
    SensorKind.LIGHT_STATE: KindSpec("on/off", 0.0, 1.0, integral=True),
    SensorKind.OCCUPANCY_COUNT: KindSpec("people", 0.0, 1e4, integral=True),
    SensorKind.COMFORT_THERMAL: KindSpec("vote", 1.0, 5.0, integral=True),
    SensorKind.COMFORT_LUMINOSITY: KindSpec("vote", 1.0, 5.0, integral=True),
    SensorKind.FUEL_CONSUMPTION_L: KindSpec("L", 0.0, 1e9, cumulative=True),
}

COMFORT_KINDS = frozenset({SensorKind.COMFORT_THERMAL, SensorKind.COMFORT_LUMINOSITY})


def value_error(kind: SensorKind, value: float) -> str | None:
    """Return a rejection reason if `value` is invalid for `kind`, else None."""
    spec = KIND_SPECS[kind]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        return "value must be numeric"
    if value != value or value in (float("inf"), float("-inf")):
        return "value not finite"
    if not spec.lo <= value <= spec.hi:
        return f"value out of range [{spec.lo:g}, {spec.hi:g}] for {kind.value}"
    if spec.integral and float(value) != int(value):
        return f"{kind.value} requires an integer value"
    return None


def default_aggregation(kind: SensorKind) -> str:
    """Energy-like kinds aggregate with sum; instantaneous kinds with mean."""
    return "sum" if KIND_SPECS[kind].cumulative else "mean"


class Role(Enum):
    BUILDING_MANAGER = "building_manager"
    TEACHER = "teacher"
    STUDENT = "student"


class Action(Enum):
    INSERT_BUILDING_DATA = "insert_building_data"
    CONFIGURE_FACILITY = "configure_facility"
    INSERT_READING = "insert_reading"
    EDIT_RULE = "edit_rule"
    VIEW = "view"


MANAGER_ONLY_ACTIONS = frozenset(
    {Action.INSERT_BUILDING_DATA, Action.CONFIGURE_FACILITY, Action.EDIT_RULE}
)


@dataclass(frozen=True)
class BuildingMeta:
    surface_m2: float
    energy_types: frozenset[EnergyType] = frozenset()
    building_type: str = "school"
    construction_year: int = 0
    occupant_count: int = 1
    timezone: str = "UTC"

    def validate(self) -> None:
        if self.surface_m2 <= 0:
            raise ValueError("surface_m2 must be positive")
        if self.occupant_count < 1:
            raise ValueError("occupant_count must be >= 1")


@dataclass(frozen=True)
class ResourceNode:
    id: str
    kind: ResourceKind
    name: str
    parent: str | None = None
    metadata: BuildingMeta | None = None


@dataclass(frozen=True)
class User:
    id: str
    role: Role
    class_id: str | None = None
    building_ids: frozenset[str] = frozenset()

    def validate(self) -> None:
        if self.role in (Role.STUDENT, Role.TEACHER) and not self.class_id:
            raise ValueError(f"user {self.id}: {self.role.value} requires a class_id")
        if self.role is Role.BUILDING_MANAGER and not self.building_ids:
            raise ValueError(f"user {self.id}: manager requires at least one building_id")


class TreeError(Exception):
    """Base for tree construction/lookup failures; names the offending node."""

    def __init__(self, message: str, node_id: str | None = None):
        super().__init__(message)
        self.node_id = node_id


class DuplicateId(TreeError):
    pass


class UnknownParent(TreeError):
    pass


class BadParentKind(TreeError):
    pass


class CycleDetected(TreeError):
    pass


class AmbiguousName(TreeError):
    pass


class InvalidName(TreeError):
    pass


class NotFound(Exception):
    pass


class ResourceTree:
    """Validated, immutable view of the resource forest.

    Built via build_resource_tree(); do not mutate after construction.
    """

    def __init__(self, nodes: dict[str, ResourceNode]):
        self.nodes = nodes
        self.children: dict[str, tuple[str, ...]] = {}
        self.roots: tuple[str, ...] = ()
        self._paths: dict[str, str] = {}
        self._by_path: dict[str, str] = {}
        self._index()

    def _index(self) -> None:
        kids: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        roots = []
        for node in self.nodes.values():
            if node.parent is None:
                roots.append(node.id)
            else:
                kids[node.parent].append(node.id)
        self.roots = tuple(sorted(roots))
        self.children = {nid: tuple(sorted(c)) for nid, c in kids.items()}
        for nid in self.nodes:
            path = self.canonical_path(nid)
            self._paths[nid] = path
            self._by_path[path] = nid

    def canonical_path(self, node_id: str) -> str:
        if node_id in self._paths:
            return self._paths[node_id]
        parts = []
        cur: str | None = node_id
        while cur is not None:
            node = self.nodes[cur]
            parts.append(node.name)
            cur = node.parent
        return "/".join(reversed(parts))

    def node(self, node_id: str) -> ResourceNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NotFound(f"no node with id {node_id!r}") from None

    def node_at(self, path: str) -> ResourceNode | None:
        nid = self._by_path.get(path)
        return self.nodes[nid] if nid else None

    def has_path(self, path: str) -> bool:
        return path in self._by_path

    def building_of(self, node_id: str) -> ResourceNode | None:
        """Nearest ancestor-or-self of kind building, if any."""
        cur: str | None = node_id
        while cur is not None:
            node = self.nodes[cur]
            if node.kind is ResourceKind.BUILDING:
                return node
            cur = node.parent
        return None

    def subtree_ids(self, node_id: str) -> list[str]:
        out = []
        stack = [node_id]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(self.children.get(nid, ()))
        return out

    def buildings(self) -> list[ResourceNode]:
        return [n for n in self.nodes.values() if n.kind is ResourceKind.BUILDING]

    def walk(self):
        for nid in sorted(self._paths, key=self._paths.get):
            yield self.nodes[nid]


def _node_from_def(d) -> ResourceNode:
    if isinstance(d, ResourceNode):
        return d
    meta = d.get("metadata")
    if meta is not None and not isinstance(meta, BuildingMeta):
        meta = BuildingMeta(
            surface_m2=meta["surface_m2"],
            energy_types=frozenset(EnergyType(e) for e in meta.get("energy_types", [])),
            building_type=meta.get("building_type", "school"),
            construction_year=meta.get("construction_year", 0),
            occupant_count=meta.get("occupant_count", 1),
            timezone=meta.get("timezone", "UTC"),
        )
    return ResourceNode(
        id=d["id"],
        kind=ResourceKind(d["kind"]),
        name=d["name"],
        parent=d.get("parent"),
        metadata=meta,
    )


def build_resource_tree(defs) -> ResourceTree:
    """Validate node definitions (dicts or ResourceNodes) and build the tree.

    Raises DuplicateId, UnknownParent, BadParentKind, CycleDetected,
    AmbiguousName, or InvalidName; each exception carries the offending node id.
    """
    defs = list(defs)
    if not defs:
        raise ValueError("node definitions must be non-empty")
    nodes: dict[str, ResourceNode] = {}
    for d in defs:
        node = _node_from_def(d)
        if node.id in nodes:
            raise DuplicateId(f"duplicate node id {node.id!r}", node.id)
        if not NAME_RE.match(node.name):
            raise InvalidName(f"node {node.id!r}: name {node.name!r} must match [a-z0-9-]+", node.id)
        nodes[node.id] = node

    for node in nodes.values():
        if node.kind is ResourceKind.SITE:
            if node.parent is not None:
                raise BadParentKind(f"site {node.id!r} must be a root", node.id)
        elif node.parent is None:
            raise BadParentKind(f"node {node.id!r} ({node.kind.value}) requires a parent", node.id)
        elif node.parent not in nodes:
            raise UnknownParent(f"node {node.id!r}: parent {node.parent!r} not defined", node.id)

    # Parent links must be acyclic: walk each chain to a root. Runs before the
    # kind table so a self-parented node reports the cycle, not the kind.
    for node in nodes.values():
        seen = {node.id}
        cur = node.parent
        while cur is not None:
            if cur in seen:
                raise CycleDetected(f"cycle through node {node.id!r}", node.id)
            seen.add(cur)
            cur = nodes[cur].parent

    for node in nodes.values():
        if node.kind is ResourceKind.SITE:
            continue
        pkind = nodes[node.parent].kind
        if pkind not in ALLOWED_PARENTS[node.kind]:
            raise BadParentKind(
                f"node {node.id!r}: {node.kind.value} may not sit under {pkind.value}", node.id
            )
        if node.kind is ResourceKind.BUILDING:
            if node.metadata is not None:
                node.metadata.validate()
        elif node.metadata is not None:
            raise ValueError(f"node {node.id!r}: only buildings carry metadata")

    # Sibling (and root) names must be unique so paths are unambiguous.
    seen_names: dict[tuple[str | None, str], str] = {}
    for node in nodes.values():
        key = (node.parent, node.name)
        if key in seen_names:
            raise AmbiguousName(
                f"node {node.id!r}: name {node.name!r} duplicates sibling {seen_names[key]!r}",
                node.id,
            )
        seen_names[key] = node.id

    return ResourceTree(nodes)


def resolve_path(tree: ResourceTree, path: str) -> ResourceNode:
    """Walk slash-separated names from a root. Raises NotFound or AmbiguousName."""
    if not path or not path.strip("/"):
        raise NotFound("empty path")
    parts = path.strip("/").split("/")
    candidates = [nid for nid in tree.roots if tree.nodes[nid].name == parts[0]]
    if len(candidates) > 1:
        raise AmbiguousName(f"multiple roots named {parts[0]!r}", candidates[0])
    if not candidates:
        raise NotFound(f"no root named {parts[0]!r}")
    cur = candidates[0]
    for part in parts[1:]:
        matches = [cid for cid in tree.children.get(cur, ()) if tree.nodes[cid].name == part]
        if len(matches) > 1:
            raise AmbiguousName(f"siblings share the name {part!r} under {tree.canonical_path(cur)}", matches[0])
        if not matches:
            raise NotFound(f"no node named {part!r} under {tree.canonical_path(cur)}")
        cur = matches[0]
    return tree.nodes[cur]


def authorize(user: User, action: Action, target: ResourceNode, tree: ResourceTree) -> bool:
    """Role/scope check. Returns allow/deny, never raises.

    Managers alone may insert building data, configure the facility, or edit
    rules, and only on buildings they manage. Any role may insert readings
    within its own building; viewing is open to all authenticated roles.
    """
    if action is Action.VIEW:
        return True
    building = tree.building_of(target.id)
    if building is not None:
        scope = {building.id}
    else:
        # Site-level target: scope is every building underneath it.
        scope = {
            nid
            for nid in tree.subtree_ids(target.id)
            if tree.nodes[nid].kind is ResourceKind.BUILDING
        }
    in_scope = bool(scope & user.building_ids)
    if action in MANAGER_ONLY_ACTIONS:
        return user.role is Role.BUILDING_MANAGER and in_scope
    if action is Action.INSERT_READING:
        return in_scope
    return False


class SiteRegistry:
    """Read-mostly holder for the current tree and user set.

    Mutations swap in a complete new snapshot under a lock; readers grab the
    current reference without locking.
    """

    def __init__(self, tree: ResourceTree, users: dict[str, User] | None = None):
        self._lock = threading.Lock()
        self._tree = tree
        self._users = dict(users or {})

    @property
    def tree(self) -> ResourceTree:
        return self._tree

    def user(self, user_id: str) -> User | None:
        return self._users.get(user_id)

    def users(self) -> dict[str, User]:
        return dict(self._users)

    def replace_tree(self, tree: ResourceTree) -> None:
        with self._lock:
            self._tree = tree

    def upsert_user(self, user: User) -> None:
        user.validate()
        with self._lock:
            users = dict(self._users)
            users[user.id] = user
            self._users = users
