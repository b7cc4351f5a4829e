// Manual-entry form logic: the five participatory categories, client-side
// validation mirroring the server's ranges, and payload construction for
// POST /api/v1/manual.

import { ApiClient, ApiError } from "./api.js";
import type { Ack } from "./types.js";

export interface ManualCategory {
  id: string;
  label: string;
  kind: string;
  unit: string;
  lo: number;
  hi: number;
  integral: boolean;
  monthly: boolean; // cumulative meter entry with a date instead of a spot value
}

// Mirrors the server's participatory-sensing list: meters not on the cloud,
// fuel/heating, luminosity, indoor/outdoor temperature, comfort votes.
export const MANUAL_CATEGORIES: ManualCategory[] = [
  { id: "meter-reading", label: "Power meter reading (monthly, kWh)", kind: "energy_kwh", unit: "kWh", lo: 0, hi: 1e9, integral: false, monthly: true },
  { id: "fuel", label: "Fuel / heating consumption (L)", kind: "fuel_consumption_l", unit: "L", lo: 0, hi: 1e9, integral: false, monthly: false },
  { id: "luminosity", label: "Luminosity (lux)", kind: "luminosity_lux", unit: "lx", lo: 0, hi: 2e5, integral: false, monthly: false },
  { id: "temperature-indoor", label: "Indoor temperature (degC)", kind: "temperature_c", unit: "degC", lo: -50, hi: 60, integral: false, monthly: false },
  { id: "temperature-outdoor", label: "Outdoor temperature (degC)", kind: "temperature_c", unit: "degC", lo: -50, hi: 60, integral: false, monthly: false },
  { id: "comfort-thermal", label: "Thermal comfort vote (1-5)", kind: "comfort_thermal", unit: "vote", lo: 1, hi: 5, integral: true, monthly: false },
  { id: "comfort-luminosity", label: "Luminosity comfort vote (1-5)", kind: "comfort_luminosity", unit: "vote", lo: 1, hi: 5, integral: true, monthly: false },
];

export function categoryById(id: string): ManualCategory | undefined {
  return MANUAL_CATEGORIES.find((c) => c.id === id);
}

export interface ManualForm {
  categoryId: string;
  resource: string;
  value: string;
  date?: string; // YYYY-MM-DD, monthly entries only
  timestamp?: string; // optional ISO override for spot readings
}

export type FieldErrors = Partial<Record<"category" | "resource" | "value" | "date", string>>;

export function validateManualForm(form: ManualForm): FieldErrors {
  const errors: FieldErrors = {};
  const cat = categoryById(form.categoryId);
  if (!cat) {
    errors.category = "pick a category";
    return errors;
  }
  if (!form.resource) errors.resource = "pick a resource";
  const value = Number(form.value);
  if (form.value.trim() === "" || Number.isNaN(value)) {
    errors.value = "enter a number";
  } else if (value < cat.lo || value > cat.hi) {
    errors.value = `must be between ${cat.lo} and ${cat.hi} ${cat.unit}`;
  } else if (cat.integral && !Number.isInteger(value)) {
    errors.value = "must be a whole number";
  }
  if (cat.monthly && !/^\d{4}-\d{2}-\d{2}$/.test(form.date ?? "")) {
    errors.date = "enter the reading date (YYYY-MM-DD)";
  }
  return errors;
}

export function manualPayload(form: ManualForm): Record<string, unknown> {
  const cat = categoryById(form.categoryId);
  if (!cat) throw new Error(`unknown category ${form.categoryId}`);
  if (cat.monthly) {
    return {
      meter: form.resource,
      date: form.date,
      cumulative_kwh: Number(form.value),
    };
  }
  const body: Record<string, unknown> = {
    resource: form.resource,
    kind: cat.kind,
    value: Number(form.value),
  };
  if (form.timestamp) body.timestamp = form.timestamp;
  return body;
}

export type SubmitResult =
  | { ok: true; ack: Ack }
  | { ok: false; errors: FieldErrors };

export async function submitManual(api: ApiClient, form: ManualForm): Promise<SubmitResult> {
  const errors = validateManualForm(form);
  if (Object.keys(errors).length) return { ok: false, errors };
  try {
    const ack = await api.postManual(manualPayload(form));
    return { ok: true, ack };
  } catch (err) {
    if (err instanceof ApiError) {
      // Server-side validation surfaces on the value field; auth on resource.
      const field = err.status === 403 || err.status === 404 ? "resource" : "value";
      return { ok: false, errors: { [field]: err.body.detail ?? `HTTP ${err.status}` } };
    }
    throw err;
  }
}
