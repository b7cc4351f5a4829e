"""Composes recommendation messages from trigger events and fans them out to subscribers.

Delivery to live subscribers is at-most-once; the append-only notification log
is the authoritative at-least-once record. Publishing is serialized through a
single fan-out stage so every subscriber observes the global emitted_at order.
"""

from __future__ import annotations

import json
import os
import queue
import string
import threading
from dataclasses import dataclass, field

from .engine import Category, Rule, TriggerEvent
from .timeutil import format_ts, parse_ts

ALLOWED_PLACEHOLDERS = {"metric", "value", "resource"}
DEFAULT_QUEUE_CAP = 256


class TemplateError(Exception):
    pass


class UnknownScope(Exception):
    pass


@dataclass(frozen=True)
class Notification:
    id: int
    rule_id: str
    resource_path: str
    category: Category
    suggestion: str
    event_description: str
    emitted_at: int

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "rule_id": self.rule_id,
            "resource": self.resource_path,
            "category": self.category.value,
            "suggestion": self.suggestion,
            "event_description": self.event_description,
            "emitted_at": format_ts(self.emitted_at),
        }


def _fmt_value(v: float) -> str:
    return f"{v:g}"


def render_suggestion(template: str, ev: TriggerEvent) -> str:
    """Substitute {metric}/{value}/{resource} from the event's first binding."""
    fields = [f for _, f, _, _ in string.Formatter().parse(template) if f is not None]
    unknown = [f for f in fields if f not in ALLOWED_PLACEHOLDERS]
    if unknown:
        raise TemplateError(f"unbound placeholder {{{unknown[0]}}} in suggestion template")
    subst: dict[str, str] = {"resource": ev.target}
    if ev.bindings:
        first_key, (value, _) = next(iter(ev.bindings.items()))
        subst["metric"] = first_key.split("@", 1)[0]
        subst["value"] = _fmt_value(value)
    missing = [f for f in fields if f not in subst]
    if missing:
        raise TemplateError(f"no binding available for {{{missing[0]}}}")
    return template.format(**subst)


def describe_event(ev: TriggerEvent) -> str:
    """One `kind@path=value (timestamp)` clause per bound metric."""
    if not ev.bindings:
        return f"condition satisfied at {format_ts(ev.fired_at)}"
    return "; ".join(
        f"{key}={_fmt_value(value)} ({format_ts(ts)})"
        for key, (value, ts) in ev.bindings.items()
    )


@dataclass
class Subscription:
    client_id: str
    scope: str
    categories: frozenset[Category] | None
    deliver: object  # callable(Notification) -> bool; False drops the client
    active: bool = True

    def matches(self, n: Notification) -> bool:
        if self.categories is not None and n.category not in self.categories:
            return False
        return n.resource_path == self.scope or n.resource_path.startswith(self.scope + "/")


class SubscriptionHandle:
    """Queue-backed live stream for in-process subscribers."""

    def __init__(self, notifier: "Notifier", sub: Subscription, q: queue.Queue):
        self._notifier = notifier
        self._sub = sub
        self._queue = q

    def get(self, timeout: float | None = None) -> Notification | None:
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None

    def drain(self) -> list[Notification]:
        out = []
        while True:
            try:
                out.append(self._queue.get_nowait())
            except queue.Empty:
                return out

    def close(self) -> None:
        self._notifier.unsubscribe(self._sub.client_id)


class Notifier:
    def __init__(self, log_path: str, scope_exists=None, queue_cap: int = DEFAULT_QUEUE_CAP):
        self.log_path = log_path
        self.scope_exists = scope_exists
        self.queue_cap = queue_cap
        self._fanout_lock = threading.Lock()
        self._subs: dict[str, Subscription] = {}
        self._next_id = 1
        self._dropped: list[str] = []
        self._restore_counter()
        self._log_fh = open(log_path, "a", encoding="utf-8")

    def _restore_counter(self) -> None:
        if os.path.exists(self.log_path):
            with open(self.log_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._next_id = max(self._next_id, json.loads(line)["id"] + 1)

    # -- composition ---------------------------------------------------------

    def compose_notification(self, ev: TriggerEvent, rule: Rule) -> Notification:
        """Render the rule's suggestion plus a description of what triggered it."""
        with self._fanout_lock:
            nid = self._next_id
            self._next_id += 1
        return Notification(
            id=nid,
            rule_id=rule.id,
            resource_path=ev.target,
            category=rule.category,
            suggestion=render_suggestion(rule.suggestion_template, ev),
            event_description=describe_event(ev),
            emitted_at=ev.fired_at,
        )

    # -- delivery ----------------------------------------------------------------

    def publish(self, n: Notification) -> int:
        """Log the notification, then deliver to every matching live subscriber.

        A failed log write raises (the log is authoritative); a subscriber that
        cannot accept the message is dropped with a record in health().
        """
        with self._fanout_lock:
            self._log_fh.write(json.dumps(n.to_doc()) + "\n")
            self._log_fh.flush()
            delivered = 0
            for client_id in list(self._subs):
                sub = self._subs[client_id]
                if not sub.active or not sub.matches(n):
                    continue
                try:
                    ok = sub.deliver(n)
                except Exception:
                    ok = False
                if ok:
                    delivered += 1
                else:
                    sub.active = False
                    del self._subs[client_id]
                    self._dropped.append(client_id)
            return delivered

    def notify(self, ev: TriggerEvent, rule: Rule) -> Notification:
        n = self.compose_notification(ev, rule)
        self.publish(n)
        return n

    # -- subscriptions --------------------------------------------------------------

    def _check_scope(self, scope: str) -> None:
        if self.scope_exists is not None and not self.scope_exists(scope):
            raise UnknownScope(scope)

    def subscribe(
        self,
        client_id: str,
        scope: str,
        categories: set[Category] | None = None,
    ) -> SubscriptionHandle:
        """Queue-backed subscription; receives matching notifications published
        after this call (no replay — clients reconcile through the log)."""
        self._check_scope(scope)
        q: queue.Queue = queue.Queue(maxsize=self.queue_cap)

        def deliver(n: Notification) -> bool:
            try:
                q.put_nowait(n)
                return True
            except queue.Full:
                return False

        sub = Subscription(client_id, scope, frozenset(categories) if categories else None, deliver)
        with self._fanout_lock:
            self._subs[client_id] = sub
        return SubscriptionHandle(self, sub, q)

    def attach(
        self,
        client_id: str,
        scope: str,
        categories: set[Category] | None,
        deliver,
    ) -> Subscription:
        """Subscription with a caller-supplied delivery callable (transport bridge)."""
        self._check_scope(scope)
        sub = Subscription(client_id, scope, frozenset(categories) if categories else None, deliver)
        with self._fanout_lock:
            self._subs[client_id] = sub
        return sub

    def unsubscribe(self, client_id: str) -> None:
        with self._fanout_lock:
            self._subs.pop(client_id, None)

    def subscriber_count(self) -> int:
        with self._fanout_lock:
            return len(self._subs)

    # -- log ---------------------------------------------------------------------

    def query_log(
        self,
        scope: str | None = None,
        since: int | None = None,
        limit: int | None = None,
    ) -> list[dict]:
        """Logged notifications in emitted order, filtered by scope prefix and
        emitted_at >= since; `limit` keeps the most recent entries."""
        out = []
        self._log_fh.flush()
        with open(self.log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                if scope is not None:
                    res = doc["resource"]
                    if not (res == scope or res.startswith(scope + "/")):
                        continue
                if since is not None and parse_ts(doc["emitted_at"]) < since:
                    continue
                out.append(doc)
        if limit is not None:
            out = out[-limit:]
        return out

    def health(self) -> dict:
        with self._fanout_lock:
            return {
                "subscribers": len(self._subs),
                "next_id": self._next_id,
                "dropped_clients": list(self._dropped),
            }

    def close(self) -> None:
        with self._fanout_lock:
            if not self._log_fh.closed:
                self._log_fh.flush()
                self._log_fh.close()
