// Wire types for the gaia HTTP/WebSocket API.

export type Timescale = "daily" | "weekly" | "monthly" | "yearly";
export const TIMESCALES: Timescale[] = ["daily", "weekly", "monthly", "yearly"];

export type RuleCategory = "behavioral" | "alert" | "technical" | "renewal";

export interface TreeNode {
  id: string;
  kind: "site" | "building" | "floor" | "room" | "meter";
  name: string;
  parent: string | null;
  path: string;
  metadata?: {
    surface_m2: number;
    energy_types: string[];
    building_type: string;
    construction_year: number;
    occupant_count: number;
    timezone: string;
  };
}

export interface SeriesInfo {
  series_id: string;
  kind: string;
  source: string;
  unit: string;
  nominal_interval_s: number | null;
}

export interface PointRow {
  ts: string;
  value: number;
  seq: number;
}

export interface Bucket {
  start: string;
  value: number;
  count: number;
}

export interface AggResponse {
  series_id: string;
  scale: Timescale;
  agg: string;
  tz: string;
  buckets: Bucket[];
}

export interface NotificationMsg {
  id: number;
  rule_id: string;
  resource: string;
  category: RuleCategory;
  suggestion: string;
  event_description: string;
  emitted_at: string;
}

export interface RuleDoc {
  id: string;
  name: string;
  target: string;
  condition: string;
  category: RuleCategory;
  suggestion: string;
  cooldown_s: number;
  enabled: boolean;
  inherited_from?: string | null;
}

export interface RuleBody {
  name: string;
  condition: string;
  category: RuleCategory;
  suggestion: string;
  cooldown_s: number;
  enabled: boolean;
}

export interface ComparisonResult {
  subject: string;
  metric: string;
  subject_value: number;
  baseline_value: number;
  delta_pct: number | null;
  comments: string;
}

export interface PeerRow {
  id: string;
  name: string;
  path: string;
  surface_m2: number;
  building_type: string;
}

export interface LeaderboardRow {
  entity_id: string;
  score: number;
  last_scored_at: string | null;
}

export interface Ack {
  series_id: string;
  seq: number;
}
