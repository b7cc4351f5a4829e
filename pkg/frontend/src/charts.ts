// Pure chart building: buckets in, SVG string out. No DOM dependency so the
// transforms are testable headless.

import type { Bucket, PointRow, Timescale } from "./types.js";

export interface Bar {
  label: string;
  value: number;
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface BarChartModel {
  bars: Bar[];
  maxValue: number;
  width: number;
  height: number;
  unit: string;
}

const CHART_W = 640;
const CHART_H = 180;
const PAD = 24;

export function bucketLabel(start: string, timescale: Timescale): string {
  const day = start.slice(0, 10);
  if (timescale === "daily") return day.slice(5); // MM-DD
  if (timescale === "weekly") return `wk ${day.slice(5)}`;
  if (timescale === "monthly") return day.slice(0, 7); // YYYY-MM
  return day.slice(0, 4); // YYYY
}

export function barChartModel(
  buckets: Bucket[],
  timescale: Timescale,
  unit = "kWh",
): BarChartModel {
  const maxValue = buckets.reduce((m, b) => Math.max(m, b.value), 0);
  const innerW = CHART_W - 2 * PAD;
  const innerH = CHART_H - 2 * PAD;
  const n = buckets.length;
  const slot = n ? innerW / n : innerW;
  const barW = Math.max(2, slot * 0.8);
  const bars = buckets.map((b, i) => {
    const h = maxValue > 0 ? (b.value / maxValue) * innerH : 0;
    return {
      label: bucketLabel(b.start, timescale),
      value: b.value,
      x: PAD + i * slot + (slot - barW) / 2,
      y: PAD + innerH - h,
      w: barW,
      h,
    };
  });
  return { bars, maxValue, width: CHART_W, height: CHART_H, unit };
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

export function renderBarChart(model: BarChartModel): string {
  if (!model.bars.length) return renderNoData();
  const bars = model.bars
    .map(
      (b) =>
        `<rect class="bar" x="${b.x.toFixed(1)}" y="${b.y.toFixed(1)}" width="${b.w.toFixed(1)}"` +
        ` height="${b.h.toFixed(1)}"><title>${esc(b.label)}: ${b.value.toFixed(2)} ${esc(model.unit)}</title></rect>`,
    )
    .join("");
  const labels =
    model.bars.length <= 16
      ? model.bars
          .map(
            (b) =>
              `<text class="lbl" x="${(b.x + b.w / 2).toFixed(1)}" y="${model.height - 6}"` +
              ` text-anchor="middle">${esc(b.label)}</text>`,
          )
          .join("")
      : "";
  const axis = `<text class="max" x="4" y="16">${model.maxValue.toFixed(1)} ${esc(model.unit)}</text>`;
  return (
    `<svg viewBox="0 0 ${model.width} ${model.height}" class="chart" role="img">` +
    axis +
    bars +
    labels +
    `</svg>`
  );
}

export function renderNoData(): string {
  return `<div class="no-data">no data in this window</div>`;
}

export function renderSparkline(points: PointRow[], width = 640, height = 60): string {
  if (points.length < 2) return renderNoData();
  const values = points.map((p) => p.value);
  const min = Math.min(...values);
  const max = Math.max(...values);
  const span = max - min || 1;
  const step = width / (points.length - 1);
  const coords = points
    .map((p, i) => `${(i * step).toFixed(1)},${(height - ((p.value - min) / span) * (height - 8) - 4).toFixed(1)}`)
    .join(" ");
  return (
    `<svg viewBox="0 0 ${width} ${height}" class="spark" role="img">` +
    `<polyline fill="none" points="${coords}"></polyline>` +
    `<text class="min" x="4" y="${height - 4}">${min.toFixed(1)}</text>` +
    `<text class="max" x="4" y="12">${max.toFixed(1)}</text>` +
    `</svg>`
  );
}
