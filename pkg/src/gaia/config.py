"""Service configuration: one JSON file referencing the tree, rules, and quest documents.

load_config validates everything it can reach and reports every problem in one
go rather than failing on the first.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .engine import Rule
from .model import (
    Role,
    ResourceTree,
    TreeError,
    User,
    build_resource_tree,
)


class ConfigError(Exception):
    """Carries every validation error found, each as 'file: message'."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class ServiceConfig:
    path: str
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    store_dir: str = "store"
    tree_file: str = "tree.json"
    rules_file: str | None = None
    quests_file: str | None = None
    staleness_s: int = 900
    dwell_s: int = 900
    cooldown_s: int = 3600
    log_level: str = "info"
    ui_dir: str | None = None  # optional static dashboard build to serve at /ui
    # parsed payloads
    tree: ResourceTree | None = None
    users: dict[str, User] = field(default_factory=dict)
    initial_rules: list[Rule] = field(default_factory=list)
    quest_defs: dict = field(default_factory=dict)

    def resolve(self, rel: str) -> str:
        return os.path.join(os.path.dirname(os.path.abspath(self.path)), rel)


def _load_json(path: str, errors: list[str]):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        errors.append(f"{path}: file not found")
    except json.JSONDecodeError as exc:
        errors.append(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    return None


def _parse_users(doc, path: str, errors: list[str]) -> dict[str, User]:
    users: dict[str, User] = {}
    for i, u in enumerate(doc.get("users", [])):
        try:
            user = User(
                id=u["id"],
                role=Role(u["role"]),
                class_id=u.get("class_id"),
                building_ids=frozenset(u.get("building_ids", [])),
            )
            user.validate()
            users[user.id] = user
        except (KeyError, ValueError) as exc:
            errors.append(f"{path}: users[{i}]: {exc}")
    return users


def load_config(path: str) -> ServiceConfig:
    """Read and fully validate a service config; raises ConfigError listing
    every problem found across the config and its referenced files."""
    errors: list[str] = []
    doc = _load_json(path, errors)
    if doc is None:
        raise ConfigError(errors)

    cfg = ServiceConfig(path=path)
    cfg.listen_host = doc.get("listen_host", cfg.listen_host)
    cfg.store_dir = doc.get("store_dir", cfg.store_dir)
    cfg.tree_file = doc.get("tree_file", cfg.tree_file)
    cfg.rules_file = doc.get("rules_file")
    cfg.quests_file = doc.get("quests_file")
    cfg.log_level = doc.get("log_level", cfg.log_level)
    cfg.ui_dir = doc.get("ui_dir")
    if cfg.ui_dir and not os.path.isdir(cfg.resolve(cfg.ui_dir)):
        errors.append(f"{path}: ui_dir {cfg.ui_dir!r} is not a directory")

    for key in ("listen_port", "staleness_s", "dwell_s", "cooldown_s"):
        if key in doc:
            value = doc[key]
            # listen_port 0 asks the OS for an ephemeral port.
            if not isinstance(value, int) or value < 0 or (key == "listen_port" and value >= 65536):
                errors.append(f"{path}: {key} must be a {'port number' if key == 'listen_port' else 'non-negative integer'}")
            else:
                setattr(cfg, key, value)

    tree_path = cfg.resolve(cfg.tree_file)
    tree_doc = _load_json(tree_path, errors)
    if tree_doc is not None:
        try:
            cfg.tree = build_resource_tree(tree_doc.get("nodes", []))
        except (TreeError, ValueError, KeyError) as exc:
            errors.append(f"{tree_path}: {exc}")
        cfg.users = _parse_users(tree_doc, tree_path, errors)

    if cfg.rules_file:
        rules_path = cfg.resolve(cfg.rules_file)
        rules_doc = _load_json(rules_path, errors)
        if rules_doc is not None:
            for i, rdoc in enumerate(rules_doc):
                try:
                    cfg.initial_rules.append(Rule.from_doc(rdoc))
                except (KeyError, ValueError) as exc:
                    errors.append(f"{rules_path}: rules[{i}]: {exc}")

    if cfg.quests_file:
        quests_path = cfg.resolve(cfg.quests_file)
        quests_doc = _load_json(quests_path, errors)
        if quests_doc is not None:
            if not isinstance(quests_doc, dict):
                errors.append(f"{quests_path}: expected an object with quests/classes/students")
            else:
                cfg.quest_defs = quests_doc

    if errors:
        raise ConfigError(errors)
    return cfg
