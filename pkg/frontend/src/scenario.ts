/**
 * The what-if flow: validate levers, submit, and shape completed jobs
 * into comparable cards. Profits on a card are always the totals fetched
 * from the plan endpoint; the only arithmetic done here is the delta
 * against the base run's fetched total.
 */

import { api, JobDoc, PlanDoc, ScenarioOverride } from "./api.js";
import { FieldError, validateOverride } from "./validate.js";

export type ScenarioCard = {
  jobId: string;
  state: string;
  override: ScenarioOverride;
  summary: string;
  runId: string | null;
  weeklyProfit: number | null;
  series: Record<string, number[]>;
  feasible: boolean | null;
  delta: number | null;
  error: string | null;
};

export type SubmitResult =
  | { ok: true; job: JobDoc }
  | { ok: false; errors: FieldError[] };

/**
 * Validate client-side first: an invalid override never leaves the
 * browser. Returns the accepted job otherwise.
 */
export async function submitScenario(
  runId: string,
  override: ScenarioOverride,
  post: (runId: string, o: ScenarioOverride) => Promise<JobDoc> = api.submitScenario,
): Promise<SubmitResult> {
  const errors = validateOverride(override);
  if (errors.length > 0) {
    return { ok: false, errors };
  }
  return { ok: true, job: await post(runId, override) };
}

export function summarizeOverride(o: ScenarioOverride): string {
  const parts: string[] = [];
  if (o.price_bands) {
    for (const [cat, [lo, hi]] of Object.entries(o.price_bands)) {
      parts.push(`band[${cat}]=${lo}..${hi}`);
    }
  }
  if (o.profit_margin !== undefined) parts.push(`margin=${o.profit_margin}`);
  if (o.inventory_caps) {
    for (const [cat, cap] of Object.entries(o.inventory_caps)) {
      parts.push(`cap[${cat}]=${Array.isArray(cap) ? cap.join("/") : cap}`);
    }
  }
  if (o.iterations !== undefined) parts.push(`iterations=${o.iterations}`);
  if (o.particles !== undefined) parts.push(`particles=${o.particles}`);
  return parts.length > 0 ? parts.join(", ") : "no changes";
}

/** Per-category daily profit series straight from a plan document. */
export function profitSeries(plan: PlanDoc): Record<string, number[]> {
  const series: Record<string, number[]> = {};
  for (const cat of plan.categories) {
    series[cat] = plan.cells[cat].map((c) => c.profit);
  }
  return series;
}

export function buildCard(
  job: JobDoc,
  override: ScenarioOverride,
  scenarioPlan: PlanDoc,
  basePlan: PlanDoc,
): ScenarioCard {
  return {
    jobId: job.job_id,
    state: job.state,
    override,
    summary: summarizeOverride(override),
    runId: job.result_run_id,
    weeklyProfit: scenarioPlan.totals.raw_profit,
    series: profitSeries(scenarioPlan),
    feasible: scenarioPlan.feasible,
    delta: scenarioPlan.totals.raw_profit - basePlan.totals.raw_profit,
    error: null,
  };
}

export function failedCard(
  job: JobDoc,
  override: ScenarioOverride,
): ScenarioCard {
  return {
    jobId: job.job_id,
    state: "failed",
    override,
    summary: summarizeOverride(override),
    runId: null,
    weeklyProfit: null,
    series: {},
    feasible: null,
    delta: null,
    error: job.error ?? "scenario job failed",
  };
}

export type ComparisonRow = {
  jobId: string;
  summary: string;
  weeklyProfit: number | null;
  delta: number | null;
  feasible: boolean | null;
  state: string;
};

/** Rows for the comparison table, best fetched profit first. */
export function compareScenarios(cards: ScenarioCard[]): ComparisonRow[] {
  const rows = cards.map((c) => ({
    jobId: c.jobId,
    summary: c.summary,
    weeklyProfit: c.weeklyProfit,
    delta: c.delta,
    feasible: c.feasible,
    state: c.state,
  }));
  rows.sort((a, b) => (b.weeklyProfit ?? -Infinity) - (a.weeklyProfit ?? -Infinity));
  return rows;
}
