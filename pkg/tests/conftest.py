"""Shared fixtures: a small two-building campus, users, and a wired pipeline rig."""

from __future__ import annotations

import json
import os

import pytest

from gaia.analytics import Analytics
from gaia.engagement import Engagement
from gaia.engine import RuleEngine
from gaia.ingest import Ingestor
from gaia.model import Role, SiteRegistry, User, build_resource_tree
from gaia.notify import Notifier
from gaia.store import SeriesStore
from gaia.timeutil import parse_ts

# Ingest-time clock pinned well after the 2017 fixture data so nothing is "future".
FIXED_NOW = parse_ts("2018-01-01T00:00:00Z")


def demo_node_defs():
    return [
        {"id": "s1", "kind": "site", "name": "campus"},
        {
            "id": "ba",
            "kind": "building",
            "name": "school-a",
            "parent": "s1",
            "metadata": {
                "surface_m2": 1200.0,
                "energy_types": ["electricity", "heating_fuel"],
                "building_type": "school",
                "construction_year": 1981,
                "occupant_count": 300,
                "timezone": "Europe/Athens",
            },
        },
        {"id": "ba-f1", "kind": "floor", "name": "floor-1", "parent": "ba"},
        {"id": "lab-x", "kind": "room", "name": "lab-x", "parent": "ba-f1"},
        {"id": "room-b", "kind": "room", "name": "room-b", "parent": "ba-f1"},
        {"id": "ba-meter", "kind": "meter", "name": "main-meter", "parent": "ba"},
        {
            "id": "bb",
            "kind": "building",
            "name": "school-b",
            "parent": "s1",
            "metadata": {
                "surface_m2": 1100.0,
                "energy_types": ["electricity"],
                "building_type": "school",
                "construction_year": 1995,
                "occupant_count": 250,
                "timezone": "Europe/Athens",
            },
        },
        {"id": "bb-f1", "kind": "floor", "name": "floor-1", "parent": "bb"},
        {"id": "room-c", "kind": "room", "name": "room-c", "parent": "bb-f1"},
        {"id": "bb-meter", "kind": "meter", "name": "main-meter", "parent": "bb"},
    ]


def demo_users():
    return {
        "mgr-a": User("mgr-a", Role.BUILDING_MANAGER, building_ids=frozenset({"ba"})),
        "mgr-b": User("mgr-b", Role.BUILDING_MANAGER, building_ids=frozenset({"bb"})),
        "teacher-a": User("teacher-a", Role.TEACHER, "c-1", frozenset({"ba"})),
        "student-a": User("student-a", Role.STUDENT, "c-1", frozenset({"ba"})),
    }


@pytest.fixture
def tree():
    return build_resource_tree(demo_node_defs())


@pytest.fixture
def users():
    return demo_users()


@pytest.fixture
def store(tmp_path):
    s = SeriesStore(str(tmp_path / "store"))
    yield s
    s.close()


class Rig:
    """In-process pipeline: ingest -> store -> engine -> notifier."""

    def __init__(self, tmp_path, tree, users, dwell_s=900, staleness_s=900):
        self.tree = tree
        self.users = users
        self.registry = SiteRegistry(tree, users)
        self.store = SeriesStore(str(tmp_path / "store"))
        self.ingestor = Ingestor(self.store, lambda: self.registry.tree, clock=lambda: FIXED_NOW)
        self.engine = RuleEngine(
            self.store,
            lambda: self.registry.tree,
            self.ingestor.series_for,
            default_dwell_s=dwell_s,
            default_staleness_s=staleness_s,
        )
        self.notifier = Notifier(
            str(tmp_path / "notifications.jsonl"),
            scope_exists=lambda p: self.registry.tree.has_path(p),
        )
        self.events = []
        self.notifications = []
        self.ingestor.on_reading = self._pump

    def _pump(self, reading):
        for ev in self.engine.on_reading(reading):
            self.events.append(ev)
            rule = self.engine.get(ev.rule_id)
            if rule is not None:
                self.notifications.append(self.notifier.notify(ev, rule))

    def feed(self, readings, user=None):
        for r in readings:
            self.ingestor.ingest_reading(r, user)

    def close(self):
        self.store.close()
        self.notifier.close()


@pytest.fixture
def rig(tmp_path, tree, users):
    r = Rig(tmp_path, tree, users)
    yield r
    r.close()


def write_service_config(dirpath, port=0, extra=None, rules=None, quests=None):
    """Materialize a runnable service config directory; returns the config path."""
    os.makedirs(dirpath, exist_ok=True)
    tree_doc = {
        "nodes": demo_node_defs(),
        "users": [
            {"id": "mgr-a", "role": "building_manager", "building_ids": ["ba"]},
            {"id": "mgr-b", "role": "building_manager", "building_ids": ["bb"]},
            {"id": "teacher-a", "role": "teacher", "class_id": "c-1", "building_ids": ["ba"]},
            {"id": "student-a", "role": "student", "class_id": "c-1", "building_ids": ["ba"]},
        ],
    }
    with open(os.path.join(dirpath, "tree.json"), "w") as fh:
        json.dump(tree_doc, fh, indent=2)
    cfg_doc = {
        "listen_host": "127.0.0.1",
        "listen_port": port,
        "store_dir": "store",
        "tree_file": "tree.json",
        "staleness_s": 900,
        "dwell_s": 900,
        "cooldown_s": 3600,
        "log_level": "warning",
    }
    if rules is not None:
        with open(os.path.join(dirpath, "rules.json"), "w") as fh:
            json.dump(rules, fh, indent=2)
        cfg_doc["rules_file"] = "rules.json"
    if quests is not None:
        with open(os.path.join(dirpath, "quests.json"), "w") as fh:
            json.dump(quests, fh, indent=2)
        cfg_doc["quests_file"] = "quests.json"
    if extra:
        cfg_doc.update(extra)
    cfg_path = os.path.join(dirpath, "gaia.json")
    with open(cfg_path, "w") as fh:
        json.dump(cfg_doc, fh, indent=2)
    return cfg_path
