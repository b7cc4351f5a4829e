"""Resource-scoped rules, edge-triggered on incoming readings, editable at runtime.

A rule fires when its condition transitions from a definite false to a
definite true, and then only if the last firing is at least one cooldown in
the past; an edge suppressed by cooldown is lost, not deferred. Evaluation
time is the triggering reading's timestamp, so replays are deterministic.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

from .conditions import (
    ConditionSyntaxError,
    StateSnapshot,
    Truth,
    UnknownKind,
    UnknownPath,
    evaluate_with_bindings,
    parse_condition,
    referenced_metrics,
)
from .ingest import Reading
from .model import Action, ResourceTree, SensorKind, User, authorize
from .store import SeriesStore

DEFAULT_COOLDOWN_S = 3600


class Category(Enum):
    BEHAVIORAL = "behavioral"
    ALERT = "alert"
    TECHNICAL = "technical"
    RENEWAL = "renewal"


@dataclass(frozen=True)
class Rule:
    id: str
    name: str
    target: str
    condition: str  # canonical storage form; the AST is derived
    category: Category
    suggestion_template: str
    cooldown_s: int = DEFAULT_COOLDOWN_S
    enabled: bool = True

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "target": self.target,
            "condition": self.condition,
            "category": self.category.value,
            "suggestion": self.suggestion_template,
            "cooldown_s": self.cooldown_s,
            "enabled": self.enabled,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Rule":
        return cls(
            id=doc["id"],
            name=doc["name"],
            target=doc["target"],
            condition=doc["condition"],
            category=Category(doc.get("category", "behavioral")),
            suggestion_template=doc["suggestion"],
            cooldown_s=int(doc.get("cooldown_s", DEFAULT_COOLDOWN_S)),
            enabled=bool(doc.get("enabled", True)),
        )


@dataclass(frozen=True)
class TriggerEvent:
    rule_id: str
    target: str
    fired_at: int
    bindings: dict[str, tuple[float, int]] = field(default_factory=dict)


class ValidationFailed(Exception):
    pass


class Unauthorized(Exception):
    pass


class NotFound(Exception):
    pass


@dataclass
class _RuleState:
    last_definite: bool = False  # last definite truth; unknown evaluations leave it alone
    last_fired: int | None = None


class RuleEngine:
    """Holds the rule set, evaluates on readings, emits trigger events.

    CRUD publishes a fresh rule-set snapshot; evaluation walks the snapshot it
    started with. All evaluation is serialized under one lock, which trivially
    satisfies the per-subtree ordering contract at desk scale.
    """

    def __init__(
        self,
        store: SeriesStore,
        tree_provider: Callable[[], ResourceTree],
        series_lookup: Callable[[str, SensorKind], list],
        default_dwell_s: int = 900,
        default_staleness_s: int = 900,
        persist_path: str | None = None,
    ):
        self.store = store
        self._tree = tree_provider
        self.series_lookup = series_lookup
        self.default_dwell_s = default_dwell_s
        self.default_staleness_s = default_staleness_s
        self.persist_path = persist_path
        self._lock = threading.RLock()
        self._rules: dict[str, Rule] = {}
        self._asts: dict[str, object] = {}
        self._index: dict[tuple[str, SensorKind], set[str]] = {}
        self._state: dict[str, _RuleState] = {}
        self._broken: dict[str, str] = {}

    # -- rule set --------------------------------------------------------------

    def rules(self) -> list[Rule]:
        with self._lock:
            return sorted(self._rules.values(), key=lambda r: r.id)

    def get(self, rule_id: str) -> Rule | None:
        return self._rules.get(rule_id)

    def rules_for(self, path: str) -> list[tuple[Rule, str]]:
        """Rules attached at `path` or inherited from an ancestor, with provenance."""
        out = []
        for rule in self.rules():
            if path == rule.target or path.startswith(rule.target + "/"):
                out.append((rule, rule.target))
        return out

    def upsert_rule(self, rule: Rule, user: User | None = None) -> Rule:
        """Validate, authorize, and install a rule; effective for the next reading."""
        tree = self._tree()
        target = tree.node_at(rule.target)
        if target is None:
            raise ValidationFailed(f"unknown target path {rule.target!r}")
        if user is not None and not authorize(user, Action.EDIT_RULE, target, tree):
            raise Unauthorized(f"edit_rule denied on {rule.target}")
        if rule.cooldown_s < 0:
            raise ValidationFailed("cooldown_s must be non-negative")
        try:
            ast = parse_condition(rule.condition, tree, rule.target)
        except (ConditionSyntaxError, UnknownKind, UnknownPath) as exc:
            raise ValidationFailed(str(exc)) from exc
        with self._lock:
            rules = dict(self._rules)
            rules[rule.id] = rule
            self._rules = rules
            self._asts = {**self._asts, rule.id: ast}
            self._state[rule.id] = _RuleState()
            self._broken.pop(rule.id, None)
            self._reindex()
            self._persist()
        return rule

    def delete_rule(self, rule_id: str, user: User | None = None) -> None:
        with self._lock:
            rule = self._rules.get(rule_id)
            if rule is None:
                raise NotFound(rule_id)
            tree = self._tree()
            target = tree.node_at(rule.target)
            if user is not None and target is not None and not authorize(user, Action.EDIT_RULE, target, tree):
                raise Unauthorized(f"edit_rule denied on {rule.target}")
            rules = dict(self._rules)
            del rules[rule_id]
            self._rules = rules
            self._asts.pop(rule_id, None)
            self._state.pop(rule_id, None)
            self._broken.pop(rule_id, None)
            self._reindex()
            self._persist()

    def load_rules(self, rules: list[Rule]) -> None:
        """Install an initial rule set; malformed rules are kept but skipped
        from evaluation and surfaced via health()."""
        tree = self._tree()
        with self._lock:
            for rule in rules:
                self._rules[rule.id] = rule
                self._state[rule.id] = _RuleState()
                try:
                    self._asts[rule.id] = parse_condition(rule.condition, tree, rule.target)
                except (ConditionSyntaxError, UnknownKind, UnknownPath) as exc:
                    self._broken[rule.id] = str(exc)
            self._reindex()

    def _reindex(self) -> None:
        index: dict[tuple[str, SensorKind], set[str]] = {}
        for rid, ast in self._asts.items():
            if rid not in self._rules:
                continue
            for ref in referenced_metrics(ast):
                index.setdefault(ref, set()).add(rid)
        self._index = index

    def _persist(self) -> None:
        if not self.persist_path:
            return
        docs = [r.to_doc() for r in sorted(self._rules.values(), key=lambda r: r.id)]
        tmp = self.persist_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(docs, fh, indent=2)
        os.replace(tmp, self.persist_path)

    @staticmethod
    def load_persisted(path: str) -> list[Rule]:
        with open(path, encoding="utf-8") as fh:
            return [Rule.from_doc(d) for d in json.load(fh)]

    # -- evaluation --------------------------------------------------------------

    def on_reading(self, r: Reading) -> list[TriggerEvent]:
        """Re-evaluate the enabled rules referencing (resource_path, kind).

        Emits an event per rule whose condition edges from definite false to
        definite true, provided the rule's cooldown has elapsed.
        """
        with self._lock:
            rule_ids = sorted(self._index.get((r.resource_path, r.kind), ()))
            if not rule_ids:
                return []
            snap = StateSnapshot(
                self.store, self.series_lookup, r.ts, self.default_staleness_s
            )
            events: list[TriggerEvent] = []
            for rid in rule_ids:
                rule = self._rules.get(rid)
                ast = self._asts.get(rid)
                if rule is None or ast is None or not rule.enabled:
                    continue
                truth, bindings = evaluate_with_bindings(ast, snap, self.default_dwell_s)
                if truth is Truth.UNKNOWN:
                    continue
                state = self._state.setdefault(rid, _RuleState())
                is_edge = truth is Truth.TRUE and not state.last_definite
                state.last_definite = truth is Truth.TRUE
                if not is_edge:
                    continue
                if state.last_fired is not None and r.ts - state.last_fired < rule.cooldown_s:
                    continue
                state.last_fired = r.ts
                events.append(
                    TriggerEvent(rule_id=rid, target=rule.target, fired_at=r.ts, bindings=dict(bindings))
                )
            return events

    # -- health --------------------------------------------------------------------

    def health(self) -> dict:
        with self._lock:
            return {
                "rule_count": len(self._rules),
                "enabled_count": sum(1 for r in self._rules.values() if r.enabled),
                "malformed": [{"id": rid, "error": err} for rid, err in sorted(self._broken.items())],
            }
