// Typed client for the gaia API. The dashboard talks to the server only
// through this module, so every server mutation goes over the documented
// endpoints.

import type {
  Ack,
  AggResponse,
  ComparisonResult,
  LeaderboardRow,
  NotificationMsg,
  PeerRow,
  PointRow,
  RuleBody,
  RuleDoc,
  SeriesInfo,
  Timescale,
  TreeNode,
} from "./types.js";

export interface ApiErrorBody {
  error?: string;
  detail?: string;
  token_index?: number;
  offset?: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: ApiErrorBody,
  ) {
    super(body.detail ?? `HTTP ${status}`);
  }
}

type FetchFn = typeof fetch;

export interface ApiOptions {
  baseUrl: string;
  token?: string;
  fetchFn?: FetchFn;
}

export class ApiClient {
  readonly baseUrl: string;
  readonly token?: string;
  private fetchFn: FetchFn;

  constructor(opts: ApiOptions) {
    this.baseUrl = opts.baseUrl.replace(/\/$/, "");
    this.token = opts.token;
    this.fetchFn = opts.fetchFn ?? fetch.bind(globalThis);
  }

  private headers(extra?: Record<string, string>): Record<string, string> {
    const h: Record<string, string> = { ...extra };
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async req<T>(method: string, path: string, body?: unknown, contentType?: string): Promise<T> {
    const init: RequestInit = { method, headers: this.headers() };
    if (body !== undefined) {
      if (contentType === "text/csv") {
        init.body = body as string;
        (init.headers as Record<string, string>)["Content-Type"] = "text/csv";
      } else {
        init.body = JSON.stringify(body);
        (init.headers as Record<string, string>)["Content-Type"] = "application/json";
      }
    }
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const text = await resp.text();
    let parsed: unknown = {};
    if (text) {
      try {
        parsed = JSON.parse(text);
      } catch {
        parsed = { detail: text };
      }
    }
    if (!resp.ok) throw new ApiError(resp.status, parsed as ApiErrorBody);
    return parsed as T;
  }

  // -- discovery ------------------------------------------------------------

  async getTree(): Promise<TreeNode[]> {
    const data = await this.req<{ nodes: TreeNode[] }>("GET", "/api/v1/tree");
    return data.nodes;
  }

  async getSeries(path: string): Promise<SeriesInfo[]> {
    const data = await this.req<{ series: SeriesInfo[] }>(
      "GET",
      `/api/v1/resources/${path}/series`,
    );
    return data.series;
  }

  async health(): Promise<{ status: string }> {
    return this.req("GET", "/api/v1/health");
  }

  // -- series reads ------------------------------------------------------------

  async getRange(seriesId: string, from: string, to: string): Promise<PointRow[]> {
    const q = new URLSearchParams({ from, to });
    const data = await this.req<{ points: PointRow[] }>(
      "GET",
      `/api/v1/series/${seriesId}/range?${q}`,
    );
    return data.points;
  }

  async getAgg(
    seriesId: string,
    scale: Timescale,
    from: string,
    to: string,
    agg?: string,
  ): Promise<AggResponse> {
    const q = new URLSearchParams({ scale, from, to });
    if (agg) q.set("agg", agg);
    return this.req("GET", `/api/v1/series/${seriesId}/agg?${q}`);
  }

  // -- ingestion ----------------------------------------------------------------

  async postManual(body: Record<string, unknown>): Promise<Ack> {
    const data = await this.req<{ ack: Ack }>("POST", "/api/v1/manual", body);
    return data.ack;
  }

  async postReadings(batch: Record<string, unknown>[]): Promise<unknown[]> {
    const data = await this.req<{ acks: unknown[] }>("POST", "/api/v1/readings", batch);
    return data.acks;
  }

  // -- rules ----------------------------------------------------------------------

  async listRules(path: string): Promise<RuleDoc[]> {
    const data = await this.req<{ rules: RuleDoc[] }>("GET", `/api/v1/resources/${path}/rules`);
    return data.rules;
  }

  async putRule(path: string, id: string, body: RuleBody): Promise<RuleDoc> {
    return this.req("PUT", `/api/v1/resources/${path}/rules/${id}`, body);
  }

  async deleteRule(path: string, id: string): Promise<void> {
    await this.req("DELETE", `/api/v1/resources/${path}/rules/${id}`);
  }

  // -- notifications ------------------------------------------------------------------

  async getNotifications(
    scope?: string,
    since?: string,
    limit?: number,
  ): Promise<NotificationMsg[]> {
    const q = new URLSearchParams();
    if (scope) q.set("scope", scope);
    if (since) q.set("since", since);
    if (limit !== undefined) q.set("limit", String(limit));
    const suffix = q.toString() ? `?${q}` : "";
    const data = await this.req<{ notifications: NotificationMsg[] }>(
      "GET",
      `/api/v1/notifications${suffix}`,
    );
    return data.notifications;
  }

  wsUrl(scope: string, categories?: string[]): string {
    const ws = this.baseUrl.replace(/^http/, "ws");
    const q = new URLSearchParams({ scope });
    if (categories && categories.length) q.set("categories", categories.join(","));
    return `${ws}/ws/notifications?${q}`;
  }

  // -- analytics / engagement -------------------------------------------------------------

  async compare(
    buildingId: string,
    metric: string,
    period: [string, string],
    baseline: [string, string],
  ): Promise<ComparisonResult> {
    const q = new URLSearchParams({
      metric,
      period: `${period[0]}/${period[1]}`,
      baseline: `${baseline[0]}/${baseline[1]}`,
    });
    return this.req("GET", `/api/v1/buildings/${buildingId}/compare?${q}`);
  }

  async peers(buildingId: string): Promise<PeerRow[]> {
    const data = await this.req<{ peers: PeerRow[] }>("GET", `/api/v1/buildings/${buildingId}/peers`);
    return data.peers;
  }

  async leaderboard(scope: "classes" | "schools"): Promise<LeaderboardRow[]> {
    const data = await this.req<{ rows: LeaderboardRow[] }>(
      "GET",
      `/api/v1/leaderboard?scope=${scope}`,
    );
    return data.rows;
  }
}

export function seriesIdFor(path: string, kind: string, source: string): string {
  return `${path.replaceAll("/", ".")}.${kind}.${source}`;
}
