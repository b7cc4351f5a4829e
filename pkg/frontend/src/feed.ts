// Live notification feed: one socket per session, reconnect with exponential
// backoff, and reconciliation through the notification log after a gap (the
// channel itself never replays).

import type { ApiClient } from "./api.js";
import { mergeBackfill, prependNotification } from "./state.js";
import type { NotificationMsg } from "./types.js";

// Structural subset of both the browser WebSocket and the `ws` client.
export interface WebSocketLike {
  onopen: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
  close(): void;
}

export type WsFactory = (url: string) => WebSocketLike;

export interface FeedOptions {
  api: ApiClient;
  scope: string;
  categories?: string[];
  wsFactory: WsFactory;
  onChange: (notifications: NotificationMsg[], offline: boolean) => void;
  backoffBaseMs?: number;
  backoffMaxMs?: number;
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
}

export class NotificationFeed {
  notifications: NotificationMsg[] = [];
  offline = true;
  attempts = 0;

  private ws: WebSocketLike | null = null;
  private stopped = false;
  private timer: unknown = null;
  private lastEmitted: string | null = null;
  private everConnected = false;

  constructor(private opts: FeedOptions) {}

  start(): void {
    this.stopped = false;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) (this.opts.clearTimer ?? clearTimeout)(this.timer as never);
    this.timer = null;
    if (this.ws) {
      const ws = this.ws;
      this.ws = null;
      ws.onclose = null;
      ws.close();
    }
  }

  backoffMs(attempt: number): number {
    const base = this.opts.backoffBaseMs ?? 1000;
    const cap = this.opts.backoffMaxMs ?? 30_000;
    return Math.min(base * 2 ** attempt, cap);
  }

  private emit(): void {
    this.opts.onChange([...this.notifications], this.offline);
  }

  private connect(): void {
    const url = this.opts.api.wsUrl(this.opts.scope, this.opts.categories);
    const ws = this.opts.wsFactory(url);
    this.ws = ws;
    ws.onopen = () => {
      this.offline = false;
      this.attempts = 0;
      if (this.everConnected) {
        // Reconnected after a gap: pull anything the log saw meanwhile.
        void this.reconcile();
      }
      this.everConnected = true;
      this.emit();
    };
    ws.onmessage = (ev) => {
      let msg: NotificationMsg;
      try {
        msg = JSON.parse(String(ev.data)) as NotificationMsg;
      } catch {
        return;
      }
      this.notifications = prependNotification(this.notifications, msg);
      this.lastEmitted = msg.emitted_at;
      this.emit();
    };
    ws.onerror = () => {
      // close follows; nothing to do here
    };
    ws.onclose = () => {
      if (this.ws === ws) this.ws = null;
      this.offline = true;
      this.emit();
      this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    if (this.stopped) return;
    const delay = this.backoffMs(this.attempts);
    this.attempts += 1;
    const setTimer = this.opts.setTimer ?? ((fn: () => void, ms: number) => setTimeout(fn, ms));
    this.timer = setTimer(() => {
      this.timer = null;
      if (!this.stopped) this.connect();
    }, delay);
  }

  async reconcile(): Promise<void> {
    try {
      const fetched = await this.opts.api.getNotifications(
        this.opts.scope,
        this.lastEmitted ?? undefined,
      );
      const matching = this.opts.categories?.length
        ? fetched.filter((n) => this.opts.categories!.includes(n.category))
        : fetched;
      this.notifications = mergeBackfill(this.notifications, matching);
      if (this.notifications.length) {
        this.lastEmitted = this.notifications[0].emitted_at;
      }
      this.emit();
    } catch {
      // Reconciliation is best-effort; the next message or reconnect retries.
    }
  }
}
