// Browser bootstrap: the only module that touches the real DOM. State flows
// one way: events -> controller/store update -> re-render.

import { ApiClient } from "./api.js";
import { NotificationFeed } from "./feed.js";
import { submitManual } from "./forms.js";
import { RuleEditor, type RuleForm } from "./rules.js";
import { ChartController, Store } from "./state.js";
import type { RuleCategory, Timescale } from "./types.js";
import { renderApp } from "./view.js";

function param(name: string, fallback = ""): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

async function main(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");

  const api = new ApiClient({
    baseUrl: param("api", window.location.origin),
    token: param("token") || undefined,
  });
  const store = new Store();
  const charts = new ChartController(api, store);

  store.subscribe((state) => {
    root.innerHTML = renderApp(state);
  });

  const tree = await api.getTree();
  const scope = param("scope", tree.length ? tree[0].path : "");
  // The session's role comes with the session (auth is upstream); anything
  // but a manager gets the read-only rules panel, and the server enforces
  // the same restriction on PUT regardless.
  const canEdit = param("role", "") === "manager";
  store.update({ tree, canEdit });
  if (tree.length) await charts.select(scope);

  const feed = new NotificationFeed({
    api,
    scope,
    wsFactory: (url) => new WebSocket(url),
    onChange: (notifications, offline) => store.update({ notifications, feedOffline: offline }),
  });
  feed.start();

  async function reloadRules(): Promise<void> {
    const path = store.get().selectedPath;
    if (!path) return;
    try {
      store.update({ rules: await new RuleEditor(api, path).load() });
    } catch {
      store.update({ rules: [] });
    }
  }
  await reloadRules();

  root.addEventListener("click", (ev) => {
    const target = (ev.target as HTMLElement).closest("[data-action]") as HTMLElement | null;
    if (!target) return;
    const action = target.dataset.action;
    if (action === "select") {
      void charts.select(target.dataset.path ?? null).then(reloadRules);
    } else if (action === "timescale") {
      void charts.select(store.get().selectedPath, target.dataset.scale as Timescale);
    } else if (action === "delete-rule") {
      const path = store.get().selectedPath;
      if (path && target.dataset.id) {
        void new RuleEditor(api, path).remove(target.dataset.id).then(reloadRules);
      }
    }
  });

  root.addEventListener("submit", (ev) => {
    const form = ev.target as HTMLFormElement;
    ev.preventDefault();
    if (form.id === "manual-form") {
      const data = new FormData(form);
      void submitManual(api, {
        categoryId: String(data.get("category") ?? ""),
        resource: String(data.get("resource") ?? ""),
        value: String(data.get("value") ?? ""),
        date: String(data.get("date") ?? "") || undefined,
      }).then(async (result) => {
        const status = form.querySelector(".form-status");
        if (result.ok) {
          if (status) status.textContent = `stored (seq ${result.ack.seq})`;
          await charts.refresh(); // the new point shows up after refetch
        } else {
          for (const [field, message] of Object.entries(result.errors)) {
            const slot = form.querySelector(`[data-err="${field}"]`);
            if (slot) slot.textContent = message ?? "";
          }
          if (status) status.textContent = "fix the highlighted fields";
        }
      });
    } else if (form.id === "rule-form") {
      const path = store.get().selectedPath;
      if (!path) return;
      const data = new FormData(form);
      const ruleForm: RuleForm = {
        id: String(data.get("id") ?? ""),
        name: String(data.get("name") ?? ""),
        condition: String(data.get("condition") ?? ""),
        category: String(data.get("category") ?? "behavioral") as RuleCategory,
        suggestion: String(data.get("suggestion") ?? ""),
        cooldown_s: Number(data.get("cooldown_s") ?? 3600),
        enabled: true,
      };
      void new RuleEditor(api, path).save(ruleForm).then(async (result) => {
        const errBox = form.querySelector(".rule-error") as HTMLElement | null;
        if (result.ok) {
          if (errBox) errBox.hidden = true;
          await reloadRules();
        } else if (errBox) {
          errBox.hidden = false;
          errBox.textContent = result.error.caret
            ? `${result.error.detail}\n${result.error.caret}`
            : result.error.detail;
        }
      });
    }
  });
}

void main();
