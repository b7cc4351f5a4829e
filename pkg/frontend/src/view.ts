// HTML rendering as pure string functions; app.ts swaps them into the DOM.

import { barChartModel, renderBarChart, renderNoData, renderSparkline } from "./charts.js";
import { MANUAL_CATEGORIES } from "./forms.js";
import type { ViewState } from "./state.js";
import type { NotificationMsg, RuleDoc, TreeNode } from "./types.js";
import { TIMESCALES } from "./types.js";

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderTree(nodes: TreeNode[], selected: string | null): string {
  const items = nodes
    .map((n) => {
      const depth = n.path.split("/").length - 1;
      const cls = n.path === selected ? "node selected" : "node";
      return (
        `<li style="margin-left:${depth * 14}px">` +
        `<button class="${cls}" data-action="select" data-path="${esc(n.path)}">` +
        `${esc(n.name)} <span class="kind">${n.kind}</span></button></li>`
      );
    })
    .join("");
  return `<ul class="tree">${items}</ul>`;
}

export function renderTimescaleBar(current: string): string {
  return (
    `<div class="timescales">` +
    TIMESCALES.map(
      (t) =>
        `<button data-action="timescale" data-scale="${t}"` +
        ` class="${t === current ? "active" : ""}">${t}</button>`,
    ).join("") +
    `</div>`
  );
}

export function renderCharts(state: ViewState): string {
  const energyStale = state.energy.stale ? `<span class="stale">stale</span>` : "";
  const envStale = state.environment.stale ? `<span class="stale">stale</span>` : "";
  const energyChart = state.energy.buckets.length
    ? renderBarChart(barChartModel(state.energy.buckets, state.timescale))
    : renderNoData();
  const envChart = state.environment.latest.length >= 2
    ? renderSparkline(state.environment.latest)
    : renderNoData();
  return (
    `<section class="charts">` +
    `<h3>Consumption ${energyStale}</h3><div id="energy-chart">${energyChart}</div>` +
    `<h3>Environment ${envStale}</h3><div id="env-chart">${envChart}</div>` +
    `</section>`
  );
}

export function renderComparison(state: ViewState): string {
  if (!state.comparison) return `<section class="compare"><h3>Comparison</h3>${renderNoData()}</section>`;
  const c = state.comparison;
  const peers = state.peers.length
    ? `<ul>${state.peers.map((p) => `<li>${esc(p.name)} (${p.surface_m2} m2)</li>`).join("")}</ul>`
    : `<p>no similar buildings</p>`;
  return (
    `<section class="compare"><h3>Comparison</h3>` +
    `<p class="comment">${esc(c.comments)}</p>` +
    `<p>${c.subject_value.toFixed(1)} vs ${c.baseline_value.toFixed(1)} (${esc(c.metric)})</p>` +
    `<h4>Peer buildings</h4>${peers}</section>`
  );
}

export function renderNotificationCard(n: NotificationMsg): string {
  return (
    `<article class="card notification ${n.category}" data-id="${n.id}">` +
    `<header><span class="category">${esc(n.category)}</span>` +
    `<time>${esc(n.emitted_at)}</time></header>` +
    `<p class="suggestion">${esc(n.suggestion)}</p>` +
    `<p class="event">${esc(n.event_description)}</p>` +
    `<footer>${esc(n.resource)}</footer></article>`
  );
}

export function renderFeed(state: ViewState): string {
  const badge = state.feedOffline ? `<span class="offline">offline</span>` : `<span class="live">live</span>`;
  const cards = state.notifications.map(renderNotificationCard).join("") || `<p class="empty">no recommendations yet</p>`;
  return `<section class="feed"><h3>Recommendations ${badge}</h3>${cards}</section>`;
}

export function renderManualForm(selected: string | null): string {
  const options = MANUAL_CATEGORIES.map(
    (c) => `<option value="${c.id}">${esc(c.label)}</option>`,
  ).join("");
  return (
    `<section class="manual"><h3>Manual entry</h3>` +
    `<form id="manual-form">` +
    `<label>Category <select name="category">${options}</select></label>` +
    `<label>Resource <input name="resource" value="${esc(selected ?? "")}"></label>` +
    `<label>Value <input name="value"><span class="err" data-err="value"></span></label>` +
    `<label>Date <input name="date" placeholder="YYYY-MM-DD"><span class="err" data-err="date"></span></label>` +
    `<button type="submit">Submit reading</button>` +
    `<span class="form-status"></span>` +
    `</form></section>`
  );
}

export function renderRuleRow(rule: RuleDoc, canEdit: boolean): string {
  const prov = rule.inherited_from ? ` <span class="inherited">from ${esc(rule.inherited_from)}</span>` : "";
  const buttons = canEdit
    ? `<button data-action="edit-rule" data-id="${esc(rule.id)}">edit</button>` +
      `<button data-action="delete-rule" data-id="${esc(rule.id)}">delete</button>`
    : "";
  return (
    `<li class="rule ${rule.enabled ? "" : "disabled"}">` +
    `<code>${esc(rule.condition)}</code> &rarr; ${esc(rule.suggestion)}${prov} ${buttons}</li>`
  );
}

export function renderRules(state: ViewState): string {
  const rows = state.rules.map((r) => renderRuleRow(r, state.canEdit)).join("");
  const editor = state.canEdit
    ? `<form id="rule-form">` +
      `<input name="id" placeholder="rule id">` +
      `<input name="name" placeholder="name">` +
      `<input name="condition" placeholder="empty(lab-x) AND light(lab-x) is on" size="48">` +
      `<select name="category"><option>behavioral</option><option>alert</option>` +
      `<option>technical</option><option>renewal</option></select>` +
      `<input name="suggestion" placeholder="suggestion text" size="32">` +
      `<input name="cooldown_s" value="3600" size="6">` +
      `<button type="submit">Save rule</button>` +
      `<pre class="rule-error" hidden></pre></form>`
    : `<p class="readonly">rule editing requires a building manager session</p>`;
  return `<section class="rules"><h3>Rules</h3><ul>${rows}</ul>${editor}</section>`;
}

export function renderApp(state: ViewState): string {
  return (
    `<div class="layout">` +
    `<aside>${renderTree(state.tree, state.selectedPath)}</aside>` +
    `<main>` +
    `<h2>${esc(state.selectedPath ?? "select a resource")}</h2>` +
    renderTimescaleBar(state.timescale) +
    renderCharts(state) +
    renderComparison(state) +
    renderManualForm(state.selectedPath) +
    renderRules(state) +
    `</main>` +
    `<aside class="right">${renderFeed(state)}</aside>` +
    `</div>`
  );
}
