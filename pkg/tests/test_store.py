"""Series store: range queries, calendar aggregation, durability."""

import itertools
import math
import random
from datetime import datetime, timedelta
from zoneinfo import ZoneInfo

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaia.store import Agg, BadRange, SeriesStore, Timescale, UnknownSeries
from gaia.timeutil import parse_ts

T0 = parse_ts("2017-01-01T00:00:00Z")


@pytest.fixture
def series(store):
    store.create("demo")
    return "demo"


def test_append_then_latest(store, series):
    p = store.append(series, T0, 21.5)
    assert store.latest(series) == p
    assert p.seq == 1


def test_out_of_order_appends_sorted_on_read(store, series):
    store.append(series, T0 + 100, 2.0)
    store.append(series, T0, 1.0)
    pts = store.query_range(series, T0, T0 + 200)
    assert [p.ts for p in pts] == [T0, T0 + 100]


def test_bulk_append_count(store, series):
    for i in range(10_000):
        store.append(series, T0 + i, float(i))
    assert len(store.query_range(series, T0, T0 + 10_000)) == 10_000


def test_half_open_boundary(store, series):
    store.append(series, T0, 1.0)
    store.append(series, T0 + 10, 2.0)
    pts = store.query_range(series, T0, T0 + 10)
    assert [p.ts for p in pts] == [T0]


def test_empty_series_empty_range(store, series):
    assert store.query_range(series, T0, T0 + 1) == []


def test_errors(store, series):
    with pytest.raises(UnknownSeries):
        store.query_range("nope", T0, T0 + 1)
    with pytest.raises(UnknownSeries):
        store.append("nope", T0, 1.0)
    with pytest.raises(BadRange):
        store.query_range(series, T0 + 1, T0)


def test_duplicate_timestamp_last_write_wins(store, series):
    store.append(series, T0, 1.0)
    store.append(series, T0, 2.0)
    pts = store.query_range(series, T0, T0 + 1)
    assert len(pts) == 1
    assert pts[0].value == 2.0
    assert pts[0].seq == 2


def test_random_windows_match_linear_scan(store, series):
    rng = random.Random(7)
    data = {}
    for _ in range(200):
        ts = T0 + rng.randrange(0, 50_000)
        value = rng.uniform(-10, 10)
        store.append(series, ts, value)
        data[ts] = value
    for _ in range(100):
        a = T0 + rng.randrange(-100, 50_100)
        b = a + rng.randrange(1, 20_000)
        got = store.query_range(series, a, b)
        want = sorted((ts, v) for ts, v in data.items() if a <= ts < b)
        assert [(p.ts, p.value) for p in got] == want


@given(
    st.lists(
        st.tuples(st.integers(0, 10_000), st.floats(-1e6, 1e6)),
        min_size=1,
        max_size=60,
    )
)
@settings(max_examples=50, deadline=None)
def test_last_write_wins_property(tmp_path_factory, pairs):
    store = SeriesStore(str(tmp_path_factory.mktemp("lww")))
    store.create("s")
    final = {}
    for dt, v in pairs:
        store.append("s", T0 + dt, v)
        final[T0 + dt] = v
    pts = store.query_range("s", T0, T0 + 20_000)
    assert {p.ts: p.value for p in pts} == final
    store.close()


# -- aggregation ------------------------------------------------------------------


def _fill_quarter_hours(store, series, days, value=0.25, start=T0):
    """days*96 points, one per 15 min, stored at interval starts."""
    for i in range(days * 96):
        store.append(series, start + i * 900, value)


def test_daily_sum_96_quarter_hours(store, series):
    _fill_quarter_hours(store, series, 1)
    buckets = store.aggregate(series, Timescale.DAILY, Agg.SUM, T0, T0 + 86400, "UTC")
    assert len(buckets) == 1
    assert buckets[0].value == 24.0
    assert buckets[0].sample_count == 96


def test_monthly_sum_30_days(store, series):
    _fill_quarter_hours(store, series, 30)
    buckets = store.aggregate(series, Timescale.MONTHLY, Agg.SUM, T0, T0 + 31 * 86400, "UTC")
    assert [b.value for b in buckets] == [720.0]


def _oracle_bucket_key(ts: int, timescale: Timescale, tz: str):
    """Independent calendar grouping used as the oracle."""
    local = datetime.fromtimestamp(ts, ZoneInfo(tz))
    if timescale is Timescale.DAILY:
        return local.year, local.month, local.day
    if timescale is Timescale.WEEKLY:
        iso = local.isocalendar()
        return iso.year, iso.week
    if timescale is Timescale.MONTHLY:
        return local.year, local.month
    return (local.year,)


def _oracle_fold(agg: Agg, values):
    if agg is Agg.SUM:
        return math.fsum(values)
    if agg is Agg.MEAN:
        return math.fsum(values) / len(values)
    if agg is Agg.MIN:
        return min(values)
    if agg is Agg.MAX:
        return max(values)
    return float(len(values))


@pytest.mark.parametrize("tz", ["UTC", "Europe/Athens"])
def test_aggregate_matches_group_by_oracle(store, tz):
    series = f"oracle-{tz.lower().replace('/', '-')}"
    store.create(series)
    rng = random.Random(13)
    # Spans a EU DST transition (last Sunday of March 2017) on purpose.
    base = parse_ts("2017-02-15T00:00:00Z")
    data = []
    for _ in range(1500):
        ts = base + rng.randrange(0, 120 * 86400)
        value = rng.uniform(0, 50)
        store.append(series, ts, value)
        data.append((ts, value))
    data = {ts: v for ts, v in data}
    t0, t1 = base, base + 120 * 86400
    for timescale, agg in itertools.product(Timescale, Agg):
        got = store.aggregate(series, timescale, agg, t0, t1, tz)
        groups = {}
        for ts, v in data.items():
            groups.setdefault(_oracle_bucket_key(ts, timescale, tz), []).append(v)
        assert len(got) == len(groups)
        got_by_key = {_oracle_bucket_key(b.bucket_start, timescale, tz): b for b in got}
        for key, values in groups.items():
            bucket = got_by_key[key]
            want = _oracle_fold(agg, values)
            assert bucket.value == pytest.approx(want, rel=1e-9)
            assert bucket.sample_count == len(values)


def test_buckets_sorted_and_nonoverlapping(store, series):
    _fill_quarter_hours(store, series, 10)
    buckets = store.aggregate(series, Timescale.DAILY, Agg.SUM, T0, T0 + 45 * 86400, "Europe/Athens")
    starts = [b.bucket_start for b in buckets]
    assert starts == sorted(starts)
    assert len(set(starts)) == len(starts)
    assert all(b.sample_count >= 1 for b in buckets)


def test_daily_buckets_align_to_local_midnight(store, series):
    # 2017-03-26 is the EU spring-forward day; local midnights stay the anchor.
    t0 = parse_ts("2017-03-25T00:00:00+02:00")
    for i in range(3 * 24):
        store.append(series, t0 + i * 3600, 1.0)
    buckets = store.aggregate(series, Timescale.DAILY, Agg.COUNT, t0, t0 + 4 * 86400, "Europe/Athens")
    zone = ZoneInfo("Europe/Athens")
    for b in buckets:
        local = datetime.fromtimestamp(b.bucket_start, zone)
        assert (local.hour, local.minute, local.second) == (0, 0, 0)
    # The spring-forward day has only 23 local hours.
    assert [b.value for b in buckets] == [24.0, 23.0, 24.0, 1.0]


def test_sum_of_daily_equals_monthly_exactly(store, series):
    """Conservation on dyadic-rational values, where compensated sums are exact."""
    rng = random.Random(99)
    jan1 = parse_ts("2017-01-01T00:00:00+02:00")
    for i in range(31 * 24):
        store.append(series, jan1 + i * 3600, rng.randrange(0, 4096) / 1024.0)
    t1 = parse_ts("2017-02-01T00:00:00+02:00")
    daily = store.aggregate(series, Timescale.DAILY, Agg.SUM, jan1, t1, "Europe/Athens")
    monthly = store.aggregate(series, Timescale.MONTHLY, Agg.SUM, jan1, t1, "Europe/Athens")
    assert len(monthly) == 1
    assert math.fsum(b.value for b in daily) == monthly[0].value


def test_count_aggregate_matches_range_cardinality(store, series):
    rng = random.Random(5)
    for _ in range(400):
        store.append(series, T0 + rng.randrange(0, 40 * 86400), 1.0)
    t1 = T0 + 40 * 86400
    counts = store.aggregate(series, Timescale.WEEKLY, Agg.COUNT, T0, t1, "UTC")
    assert math.fsum(b.value for b in counts) == len(store.query_range(series, T0, t1))


def test_persistence_roundtrip(tmp_path):
    path = str(tmp_path / "persist")
    s1 = SeriesStore(path)
    s1.create("a")
    s1.append("a", T0 + 5, 1.25)
    s1.append("a", T0 + 1, 7.5)
    s1.append("a", T0 + 5, 2.5)  # overwrite
    before = s1.query_range("a", T0, T0 + 10)
    s1.close()

    s2 = SeriesStore(path)
    assert s2.series_ids() == ["a"]
    assert s2.query_range("a", T0, T0 + 10) == before
    # Sequence numbering continues after reopen.
    p = s2.append("a", T0 + 9, 3.0)
    assert p.seq == 4
    s2.close()


def test_reopen_without_close_loses_nothing(tmp_path):
    """Acks imply a flush, so dropping the handle must not lose points."""
    path = str(tmp_path / "crashy")
    s1 = SeriesStore(path)
    s1.create("a")
    for i in range(50):
        s1.append("a", T0 + i, float(i))
    del s1  # no close(): simulates a killed process
    s2 = SeriesStore(path)
    assert len(s2.query_range("a", T0, T0 + 50)) == 50
    s2.close()
