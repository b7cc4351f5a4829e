import { describe, expect, it } from "vitest";

import { ChartController, Store, initialState, mergeBackfill, prependNotification } from "../src/state.js";
import type { NotificationMsg } from "../src/types.js";
import { fakeApi, notification } from "./helpers.js";

const LAB = "campus/school-a/floor-1/lab-x";
const SERIES = { series_id: "s-energy", kind: "energy_kwh", source: "file", unit: "kWh", nominal_interval_s: 900 };

function chartResponder(buckets = [{ start: "2017-01-16T00:00:00Z", value: 24.0, count: 96 }]) {
  return (url: string) => {
    if (url.includes("/series/") && url.includes("/agg")) {
      return { status: 200, body: { series_id: "s-energy", scale: "daily", agg: "sum", tz: "UTC", buckets } };
    }
    if (url.includes("/series/") && url.includes("/range")) {
      return { status: 200, body: { points: [{ ts: "2017-01-16T10:00:00Z", value: 0.25, seq: 1 }] } };
    }
    if (url.includes("/resources/")) {
      return { status: 200, body: { series: [SERIES] } };
    }
    if (url.includes("/peers")) {
      return {
        status: 200,
        body: { peers: [{ id: "bb", name: "school-b", path: "campus/school-b", surface_m2: 1100, building_type: "school" }] },
      };
    }
    if (url.includes("/compare")) {
      return {
        status: 200,
        body: {
          subject: "ba", metric: "energy_kwh", subject_value: 648.0,
          baseline_value: 720.0, delta_pct: -10.0, comments: "10.0% less than baseline period",
        },
      };
    }
    return undefined;
  };
}

const TREE = [
  { id: "s1", kind: "site", name: "campus", parent: null, path: "campus" },
  { id: "ba", kind: "building", name: "school-a", parent: "s1", path: "campus/school-a" },
] as never[];

describe("Store", () => {
  it("notifies subscribers through the single update path", () => {
    const store = new Store();
    const seen: string[] = [];
    store.subscribe((s) => seen.push(s.timescale));
    store.update({ timescale: "monthly" });
    store.update((s) => ({ timescale: s.timescale === "monthly" ? "yearly" : "daily" }));
    expect(seen).toEqual(["monthly", "yearly"]);
  });
});

describe("ChartController", () => {
  it("loads charts on selection", async () => {
    const { api } = fakeApi(chartResponder());
    const store = new Store();
    const ctl = new ChartController(api, store);
    await ctl.select(LAB);
    const s = store.get();
    expect(s.energy.buckets).toHaveLength(1);
    expect(s.energy.buckets[0].value).toBe(24.0);
    expect(s.energy.stale).toBe(false);
    expect(s.energy.loaded).toBe(true);
  });

  it("loads the comparison panel for the containing building", async () => {
    const { api } = fakeApi(chartResponder());
    const store = new Store();
    store.update({ tree: TREE });
    const ctl = new ChartController(api, store);
    await ctl.select(LAB);
    const s = store.get();
    expect(s.peers.map((p) => p.id)).toEqual(["bb"]);
    expect(s.comparison?.delta_pct).toBe(-10.0);
    expect(s.comparison?.comments).toContain("10.0% less");
  });

  it("leaves the comparison empty when no building contains the selection", async () => {
    const { api } = fakeApi(chartResponder());
    const store = new Store(); // empty tree: nothing to compare against
    const ctl = new ChartController(api, store);
    await ctl.select(LAB);
    expect(store.get().comparison).toBeNull();
    expect(store.get().peers).toEqual([]);
  });

  it("issues exactly one refetch per timescale switch", async () => {
    const { api, calls } = fakeApi(chartResponder());
    const store = new Store();
    const ctl = new ChartController(api, store);
    await ctl.select(LAB, "monthly");
    const aggCallsAfterFirst = calls.filter((c) => c.url.includes("/agg")).length;
    await ctl.select(LAB, "daily");
    const aggCallsAfterSecond = calls.filter((c) => c.url.includes("/agg")).length;
    expect(ctl.fetches).toBe(2);
    expect(aggCallsAfterSecond - aggCallsAfterFirst).toBe(aggCallsAfterFirst);
    // Re-selecting the same resource and timescale does not refetch.
    await ctl.select(LAB, "daily");
    expect(ctl.fetches).toBe(2);
  });

  it("keeps the last good chart and flags stale on fetch failure", async () => {
    let fail = false;
    const base = chartResponder();
    const { api } = fakeApi((url, init) => {
      if (fail && url.includes("/agg")) return { status: 500, body: { detail: "boom" } };
      return base(url);
    });
    const store = new Store();
    const ctl = new ChartController(api, store);
    await ctl.select(LAB);
    expect(store.get().energy.buckets).toHaveLength(1);

    fail = true;
    await ctl.refresh();
    const s = store.get();
    expect(s.energy.buckets).toHaveLength(1); // still the last successful fetch
    expect(s.energy.stale).toBe(true);

    fail = false;
    await ctl.refresh();
    expect(store.get().energy.stale).toBe(false);
  });

  it("discards responses from superseded selections", async () => {
    const gates = new Map<string, () => void>();
    let gated = false;
    const base = chartResponder();
    const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
      const url = String(input);
      if (!gated && url.includes("room-slow") && url.includes("/resources/")) {
        gated = true; // park only the first series lookup for the slow room
        await new Promise<void>((resolve) => gates.set("slow", resolve));
        return new Response(JSON.stringify({ series: [] }), { status: 200 });
      }
      const scripted = base(url) ?? { status: 404, body: {} };
      return new Response(JSON.stringify(scripted.body), { status: scripted.status });
    }) as typeof fetch;
    const { ApiClient } = await import("../src/api.js");
    const api = new ApiClient({ baseUrl: "http://test", fetchFn });
    const store = new Store();
    const ctl = new ChartController(api, store);

    const slow = ctl.select("campus/school-a/floor-1/room-slow");
    await ctl.select(LAB);
    expect(store.get().energy.buckets).toHaveLength(1);
    gates.get("slow")?.();
    await slow;
    // The stale response for room-slow must not clobber the lab charts.
    expect(store.get().selectedPath).toBe(LAB);
    expect(store.get().energy.buckets).toHaveLength(1);
  });
});

describe("notification list helpers", () => {
  it("prepends newest first and dedupes by id", () => {
    const a = notification(1) as NotificationMsg;
    const b = notification(2) as NotificationMsg;
    let list: NotificationMsg[] = [];
    list = prependNotification(list, a);
    list = prependNotification(list, b);
    list = prependNotification(list, b);
    expect(list.map((n) => n.id)).toEqual([2, 1]);
  });

  it("merges backfill in emitted order", () => {
    const live = [notification(5)] as NotificationMsg[];
    const fetched = [notification(3), notification(4), notification(5)] as NotificationMsg[];
    expect(mergeBackfill(live, fetched).map((n) => n.id)).toEqual([5, 4, 3]);
  });
});

describe("initialState", () => {
  it("starts with the documented defaults", () => {
    const s = initialState();
    expect(s.timescale).toBe("daily");
    expect(s.notifications).toEqual([]);
    expect(s.energy.loaded).toBe(false);
  });
});
