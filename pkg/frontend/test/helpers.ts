// Shared fakes: a scripted fetch and a controllable WebSocket.

import { ApiClient } from "../src/api.js";
import type { WebSocketLike } from "../src/feed.js";

export interface RecordedCall {
  url: string;
  method: string;
  headers: Record<string, string>;
  body?: string;
}

export type Responder = (url: string, init: RequestInit) => { status: number; body: unknown } | undefined;

export function fakeApi(responder: Responder, token?: string): { api: ApiClient; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    calls.push({
      url,
      method: init?.method ?? "GET",
      headers: (init?.headers as Record<string, string>) ?? {},
      body: typeof init?.body === "string" ? init.body : undefined,
    });
    const scripted = responder(url, init ?? {});
    const status = scripted?.status ?? 404;
    const body = scripted?.body ?? { detail: `no responder for ${url}` };
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }) as typeof fetch;
  return { api: new ApiClient({ baseUrl: "http://test", token, fetchFn }), calls };
}

export class FakeSocket implements WebSocketLike {
  onopen: ((ev: any) => void) | null = null;
  onmessage: ((ev: any) => void) | null = null;
  onclose: ((ev: any) => void) | null = null;
  onerror: ((ev: any) => void) | null = null;
  closedByClient = false;

  constructor(public url: string) {}

  close(): void {
    this.closedByClient = true;
  }

  serverOpen(): void {
    this.onopen?.(undefined);
  }

  serverSend(doc: unknown): void {
    this.onmessage?.({ data: JSON.stringify(doc) });
  }

  serverClose(): void {
    this.onclose?.(undefined);
  }
}

export function notification(id: number, overrides: Record<string, unknown> = {}) {
  return {
    id,
    rule_id: "r-light",
    resource: "campus/school-a/floor-1/lab-x",
    category: "behavioral",
    suggestion: "Turn-off the light when leaving",
    event_description: `light_state@campus/school-a/floor-1/lab-x=1 (2017-01-16T17:0${id}:00Z)`,
    emitted_at: `2017-01-16T17:0${id}:00Z`,
    ...overrides,
  };
}
