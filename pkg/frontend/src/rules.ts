// Rule editor logic: CRUD over the rules API with position-anchored syntax
// errors mapped back onto the condition text.

import { ApiClient, ApiError } from "./api.js";
import type { RuleBody, RuleCategory, RuleDoc } from "./types.js";

export interface RuleForm {
  id: string;
  name: string;
  condition: string;
  category: RuleCategory;
  suggestion: string;
  cooldown_s: number;
  enabled: boolean;
}

export interface RuleSaveError {
  detail: string;
  tokenIndex?: number;
  offset?: number;
  caret?: string; // condition text with a ^ marker on the offending position
}

export type RuleSaveResult = { ok: true; rule: RuleDoc } | { ok: false; error: RuleSaveError };

export function caretLine(condition: string, offset: number): string {
  const clamped = Math.max(0, Math.min(offset, condition.length));
  return `${condition}\n${" ".repeat(clamped)}^`;
}

export function ruleBody(form: RuleForm): RuleBody {
  return {
    name: form.name,
    condition: form.condition,
    category: form.category,
    suggestion: form.suggestion,
    cooldown_s: form.cooldown_s,
    enabled: form.enabled,
  };
}

export class RuleEditor {
  constructor(
    private api: ApiClient,
    public target: string,
  ) {}

  async load(): Promise<RuleDoc[]> {
    return this.api.listRules(this.target);
  }

  async save(form: RuleForm): Promise<RuleSaveResult> {
    try {
      const rule = await this.api.putRule(this.target, form.id, ruleBody(form));
      return { ok: true, rule };
    } catch (err) {
      if (err instanceof ApiError) {
        const error: RuleSaveError = { detail: err.body.detail ?? `HTTP ${err.status}` };
        if (err.body.token_index !== undefined) error.tokenIndex = err.body.token_index;
        if (err.body.offset !== undefined) {
          error.offset = err.body.offset;
          error.caret = caretLine(form.condition, err.body.offset);
        }
        return { ok: false, error };
      }
      throw err;
    }
  }

  async remove(id: string): Promise<void> {
    await this.api.deleteRule(this.target, id);
  }
}
