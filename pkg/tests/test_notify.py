"""Notification composition, fan-out matching, ordering, and the log."""

import itertools
import threading

import pytest

from gaia.engine import Category, Rule, TriggerEvent
from gaia.notify import (
    Notifier,
    TemplateError,
    UnknownScope,
    describe_event,
    render_suggestion,
)
from gaia.timeutil import parse_ts

LAB = "campus/school-a/floor-1/lab-x"
FIRED = parse_ts("2017-01-16T17:12:00Z")


def light_rule(template="Turn-off the light when leaving", category=Category.BEHAVIORAL):
    return Rule(
        id="r-light",
        name="turn-off-the-light",
        target=LAB,
        condition="empty(lab-x) AND light(lab-x) is on",
        category=category,
        suggestion_template=template,
    )


def light_event(target=LAB, fired_at=FIRED):
    return TriggerEvent(
        rule_id="r-light",
        target=target,
        fired_at=fired_at,
        bindings={
            f"light_state@{target}": (1.0, fired_at - 12),
            f"occupancy_count@{target}": (0.0, fired_at - 40),
        },
    )


@pytest.fixture
def notifier(tmp_path, tree):
    n = Notifier(str(tmp_path / "log.jsonl"), scope_exists=tree.has_path)
    yield n
    n.close()


def test_compose_light_notification(notifier):
    n = notifier.compose_notification(light_event(), light_rule())
    assert n.suggestion == "Turn-off the light when leaving"
    assert f"light_state@{LAB}=1" in n.event_description
    assert "2017-01-16T17:11:48Z" in n.event_description
    assert n.emitted_at == FIRED
    assert n.category is Category.BEHAVIORAL


def test_compose_with_placeholders(notifier):
    rule = light_rule(template="{metric} at {resource} reads {value}; switch it off")
    n = notifier.compose_notification(light_event(), rule)
    assert n.suggestion == f"light_state at {LAB} reads 1; switch it off"


def test_unbound_placeholder(notifier):
    with pytest.raises(TemplateError):
        notifier.compose_notification(light_event(), light_rule(template="do {bogus}"))


def test_placeholder_without_bindings():
    ev = TriggerEvent(rule_id="r", target=LAB, fired_at=FIRED, bindings={})
    with pytest.raises(TemplateError):
        render_suggestion("{value}", ev)
    assert render_suggestion("check {resource}", ev) == f"check {LAB}"
    assert describe_event(ev) == "condition satisfied at 2017-01-16T17:12:00Z"


def test_rendering_is_pure(notifier):
    a = notifier.compose_notification(light_event(), light_rule())
    b = notifier.compose_notification(light_event(), light_rule())
    assert a.id != b.id
    assert (a.suggestion, a.event_description, a.emitted_at, a.resource_path, a.category) == (
        b.suggestion,
        b.event_description,
        b.emitted_at,
        b.resource_path,
        b.category,
    )


# -- delivery -------------------------------------------------------------------------


def test_scope_prefix_delivery_counts(notifier):
    notifier.subscribe("c1", "campus/school-a")
    notifier.subscribe("c2", "campus/school-a/floor-1")
    notifier.subscribe("c3", "campus/school-b")
    delivered = notifier.publish(notifier.compose_notification(light_event(), light_rule()))
    assert delivered == 2


def test_subscription_matching_oracle(notifier):
    """Brute-force matching over every (scope, category-filter, resource) combo."""
    scopes = ["campus", "campus/school-a", "campus/school-a/floor-1/lab-x", "campus/school-b"]
    filters = [None, {Category.ALERT}, {Category.BEHAVIORAL, Category.ALERT}]
    resources = [LAB, "campus/school-b/floor-1/room-c"]
    categories = [Category.BEHAVIORAL, Category.ALERT]
    handles = {}
    for i, (scope, filt) in enumerate(itertools.product(scopes, filters)):
        handles[(scope, frozenset(filt) if filt else None)] = notifier.subscribe(
            f"c{i}", scope, filt
        )
    for resource, category in itertools.product(resources, categories):
        ev = TriggerEvent(rule_id="r", target=resource, fired_at=FIRED, bindings={})
        rule = Rule("r", "n", resource, "light(x) is on", category, "s")
        delivered = notifier.publish(notifier.compose_notification(ev, rule))
        expected = sum(
            1
            for (scope, filt) in handles
            if (resource == scope or resource.startswith(scope + "/"))
            and (filt is None or category in filt)
        )
        assert delivered == expected
        for (scope, filt), handle in handles.items():
            should = (resource == scope or resource.startswith(scope + "/")) and (
                filt is None or category in filt
            )
            got = handle.drain()
            assert (len(got) == 1) is should


def test_no_subscribers_still_logged(notifier):
    delivered = notifier.publish(notifier.compose_notification(light_event(), light_rule()))
    assert delivered == 0
    assert len(notifier.query_log()) == 1


def test_category_filter_excludes(notifier):
    handle = notifier.subscribe("c1", "campus/school-a", {Category.ALERT})
    notifier.publish(notifier.compose_notification(light_event(), light_rule()))
    assert handle.drain() == []


def test_subscribe_then_trigger_receives(notifier):
    handle = notifier.subscribe("c1", "campus/school-a")
    sent = notifier.notify(light_event(), light_rule())
    got = handle.get(timeout=1)
    assert got is not None and got.id == sent.id


def test_subscribe_after_trigger_no_replay(notifier):
    notifier.notify(light_event(), light_rule())
    handle = notifier.subscribe("c1", "campus/school-a")
    assert handle.drain() == []
    log = notifier.query_log(scope="campus/school-a")
    assert len(log) == 1


def test_unknown_scope(notifier):
    with pytest.raises(UnknownScope):
        notifier.subscribe("c1", "campus/ghost")


def test_concurrent_publish_ordered_delivery(notifier):
    handle = notifier.subscribe("c1", "campus")
    rule = light_rule()

    def blast(offset):
        for i in range(25):
            notifier.notify(light_event(fired_at=FIRED + offset + i), rule)

    threads = [threading.Thread(target=blast, args=(k * 1000,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    got = handle.drain()
    assert len(got) == 100
    # Per-subscriber order matches the global fan-out (= log) order.
    log_ids = [doc["id"] for doc in notifier.query_log()]
    assert [n.id for n in got] == log_ids
    assert len(notifier.query_log()) == 100


def test_log_completeness_per_event(notifier):
    notifier.subscribe("c1", "campus")
    notifier.subscribe("c2", "campus/school-a")
    notifier.notify(light_event(), light_rule())
    assert len(notifier.query_log()) == 1  # one entry regardless of fan-out


def test_query_log_since_and_limit(notifier):
    rule = light_rule()
    for i in range(5):
        notifier.notify(light_event(fired_at=FIRED + i * 60), rule)
    per_since = notifier.query_log(since=FIRED + 120)
    assert [doc["id"] for doc in per_since] == [3, 4, 5]
    assert [doc["id"] for doc in notifier.query_log(limit=2)] == [4, 5]


def test_slow_client_dropped_on_overflow(tmp_path, tree):
    n = Notifier(str(tmp_path / "log.jsonl"), scope_exists=tree.has_path, queue_cap=4)
    try:
        n.subscribe("slow", "campus")
        rule = light_rule()
        for i in range(10):
            n.notify(light_event(fired_at=FIRED + i), rule)
        assert n.subscriber_count() == 0
        assert n.health()["dropped_clients"] == ["slow"]
        assert len(n.query_log()) == 10  # the log never drops
    finally:
        n.close()


def test_id_counter_survives_restart(tmp_path, tree):
    path = str(tmp_path / "log.jsonl")
    n1 = Notifier(path, scope_exists=tree.has_path)
    n1.notify(light_event(), light_rule())
    n1.close()
    n2 = Notifier(path, scope_exists=tree.has_path)
    n = n2.notify(light_event(), light_rule())
    assert n.id == 2
    n2.close()
