// View state and the single update path every mutation goes through.
//
// Charts always hold the last successfully fetched data; a failed refresh
// only flips the stale flag. Each (resource, timescale) change issues exactly
// one refetch, tracked with an epoch counter so a slow response for an old
// selection can never clobber a newer one.

import { ApiClient, seriesIdFor } from "./api.js";
import type {
  AggResponse,
  Bucket,
  ComparisonResult,
  NotificationMsg,
  PeerRow,
  PointRow,
  RuleDoc,
  Timescale,
  TreeNode,
} from "./types.js";

export interface ChartData {
  seriesId: string | null;
  buckets: Bucket[];
  latest: PointRow[];
  stale: boolean;
  loaded: boolean;
}

export interface ViewState {
  tree: TreeNode[];
  selectedPath: string | null;
  timescale: Timescale;
  energy: ChartData;
  environment: ChartData;
  comparison: ComparisonResult | null;
  peers: PeerRow[];
  notifications: NotificationMsg[]; // newest first
  feedOffline: boolean;
  rules: RuleDoc[];
  canEdit: boolean;
  lastError: string | null;
}

export function initialState(): ViewState {
  const empty: ChartData = { seriesId: null, buckets: [], latest: [], stale: false, loaded: false };
  return {
    tree: [],
    selectedPath: null,
    timescale: "daily",
    energy: { ...empty },
    environment: { ...empty },
    comparison: null,
    peers: [],
    notifications: [],
    feedOffline: false,
    rules: [],
    canEdit: false,
    lastError: null,
  };
}

export type Listener = (s: ViewState) => void;

export class Store {
  private state: ViewState;
  private listeners: Listener[] = [];

  constructor(state: ViewState = initialState()) {
    this.state = state;
  }

  get(): ViewState {
    return this.state;
  }

  update(patch: Partial<ViewState> | ((s: ViewState) => Partial<ViewState>)): void {
    const delta = typeof patch === "function" ? patch(this.state) : patch;
    this.state = { ...this.state, ...delta };
    for (const l of this.listeners) l(this.state);
  }

  subscribe(l: Listener): () => void {
    this.listeners.push(l);
    return () => {
      this.listeners = this.listeners.filter((x) => x !== l);
    };
  }
}

// Window fetched for charts, per timescale, ending at `now`.
const WINDOW_DAYS: Record<Timescale, number> = {
  daily: 14,
  weekly: 12 * 7,
  monthly: 366,
  yearly: 3 * 366,
};

export function chartWindow(timescale: Timescale, now: Date): { from: string; to: string } {
  const to = new Date(now.getTime() + 24 * 3600 * 1000);
  const from = new Date(now.getTime() - WINDOW_DAYS[timescale] * 24 * 3600 * 1000);
  return { from: from.toISOString().replace(/\.\d{3}Z$/, "Z"), to: to.toISOString().replace(/\.\d{3}Z$/, "Z") };
}

export class ChartController {
  private epoch = 0;
  fetches = 0; // instrumentation: one per (selection, timescale) change

  constructor(
    private api: ApiClient,
    private store: Store,
    private now: () => Date = () => new Date(),
  ) {}

  async select(path: string | null, timescale?: Timescale): Promise<void> {
    const s = this.store.get();
    const nextScale = timescale ?? s.timescale;
    if (path === s.selectedPath && nextScale === s.timescale && s.energy.loaded) {
      return; // nothing changed: no refetch
    }
    this.store.update({ selectedPath: path, timescale: nextScale });
    await this.refresh();
  }

  async refresh(): Promise<void> {
    const s = this.store.get();
    if (!s.selectedPath) return;
    const epoch = ++this.epoch;
    this.fetches += 1;
    const { from, to } = chartWindow(s.timescale, this.now());
    const path = s.selectedPath;

    const energyId = await this.pickSeries(path, ["energy_kwh", "power_w"]);
    const envId = await this.pickSeries(path, ["temperature_c", "humidity_pct", "comfort_thermal"]);

    const energy = await this.fetchChart(energyId, s.timescale, from, to);
    const environment = await this.fetchChart(envId, s.timescale, from, to);
    const { comparison, peers } = await this.fetchComparison(path, s.tree);
    if (epoch !== this.epoch) return; // a newer selection superseded this fetch
    this.store.update((cur) => ({
      energy: energy ?? { ...cur.energy, stale: true },
      environment: environment ?? { ...cur.environment, stale: true },
      comparison,
      peers,
    }));
  }

  private async fetchComparison(
    path: string,
    tree: TreeNode[],
  ): Promise<{ comparison: ComparisonResult | null; peers: PeerRow[] }> {
    const building = tree.find(
      (n) => n.kind === "building" && (path === n.path || path.startsWith(n.path + "/")),
    );
    if (!building) return { comparison: null, peers: [] };
    let peers: PeerRow[] = [];
    try {
      peers = await this.api.peers(building.id);
    } catch {
      peers = [];
    }
    // Last 30 days against the 30 days before them.
    const now = this.now().getTime();
    const iso = (ms: number) => new Date(ms).toISOString().replace(/\.\d{3}Z$/, "Z");
    let comparison: ComparisonResult | null = null;
    try {
      comparison = await this.api.compare(
        building.id,
        "energy_kwh",
        [iso(now - 30 * 864e5), iso(now)],
        [iso(now - 60 * 864e5), iso(now - 30 * 864e5)],
      );
    } catch {
      comparison = null; // one side of the window has no data yet
    }
    return { comparison, peers };
  }

  private async pickSeries(path: string, kinds: string[]): Promise<string | null> {
    try {
      const series = await this.api.getSeries(path);
      for (const kind of kinds) {
        const hit = series.find((x) => x.kind === kind);
        if (hit) return hit.series_id;
      }
      // Fall back to the conventional id so fresh deployments still chart
      // data that arrives after page load.
      return series.length ? series[0].series_id : seriesIdFor(path, kinds[0], "iot");
    } catch {
      return null;
    }
  }

  private async fetchChart(
    seriesId: string | null,
    timescale: Timescale,
    from: string,
    to: string,
  ): Promise<ChartData | null> {
    if (!seriesId) {
      return { seriesId: null, buckets: [], latest: [], stale: false, loaded: true };
    }
    try {
      const agg: AggResponse = await this.api.getAgg(seriesId, timescale, from, to);
      let latest: PointRow[] = [];
      try {
        latest = (await this.api.getRange(seriesId, from, to)).slice(-50);
      } catch {
        latest = [];
      }
      return { seriesId, buckets: agg.buckets, latest, stale: false, loaded: true };
    } catch {
      return null; // caller keeps the previous data and sets the stale flag
    }
  }
}

export function prependNotification(
  list: NotificationMsg[],
  msg: NotificationMsg,
): NotificationMsg[] {
  if (list.some((n) => n.id === msg.id)) return list;
  return [msg, ...list];
}

export function mergeBackfill(
  list: NotificationMsg[],
  fetched: NotificationMsg[],
): NotificationMsg[] {
  const seen = new Set(list.map((n) => n.id));
  const missing = fetched.filter((n) => !seen.has(n.id));
  return [...list, ...missing].sort((a, b) => b.id - a.id);
}
