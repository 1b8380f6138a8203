/**
 * Typed client for the planning service. Every shape here mirrors the
 * JSON the service persists on disk; the console never derives numbers
 * of its own beyond deltas of fetched totals.
 */

export type RunMeta = {
  schema_version: number;
  run_id: string;
  created_at: string;
  parent_run_id: string | null;
  override: Record<string, unknown> | null;
  categories: string[];
  span: [string, string];
  baseline_raw_profit: number;
  optimized_raw_profit: number;
  optimized_fitness: number;
  feasible: boolean;
  iterations_run: number;
};

export type PlanCell = {
  day: number;
  price: number;
  qty: number;
  expected_sales: number;
  sellable: number;
  waste: number;
  revenue: number;
  cost: number;
  profit: number;
};

export type ConstraintSlack = {
  constraint: string;
  category: string;
  day: number | null;
  slack: number;
};

export type PlanDoc = {
  schema_version: number;
  categories: string[];
  horizon: number;
  cells: Record<string, PlanCell[]>;
  totals: { raw_profit: number; penalty: number; fitness: number };
  feasible: boolean;
  constraint_report: ConstraintSlack[];
};

export type ForecastDay = {
  date: string;
  volume: number;
  price: number;
  spoilage: number;
};

export type VariableMetrics = { mae: number; rmse: number; r2: number | null };

export type ForecastDoc = {
  schema_version: number;
  category: string;
  start_date: string;
  horizon: number;
  days: ForecastDay[];
  attention: number[][];
  n_clamped: number;
  metrics: Record<string, VariableMetrics>;
  final_train_loss: number;
};

export type ForecastResponse = {
  run_id: string;
  forecast: Record<string, ForecastDoc>;
};

export type JobState = "queued" | "running" | "done" | "failed";

export type JobDoc = {
  job_id: string;
  base_run_id: string;
  state: JobState;
  progress: number;
  max_iterations: number;
  result_run_id: string | null;
  result_url: string | null;
  error: string | null;
};

export type ScenarioOverride = {
  price_bands?: Record<string, [number, number]>;
  profit_margin?: number;
  inventory_caps?: Record<string, number | number[]>;
  iterations?: number;
  particles?: number;
};

/** Error body contract is {"error": message, "code": code}. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(path, init);
  const body = await res.json().catch(() => null);
  if (!res.ok) {
    const message =
      body && typeof body.error === "string" ? body.error : res.statusText;
    const code =
      body && typeof body.code === "string" ? body.code : "http_error";
    throw new ApiError(res.status, code, message);
  }
  return body as T;
}

export const api = {
  runs: () => request<{ runs: RunMeta[] }>("/api/runs"),

  run: (runId: string) =>
    request<RunMeta>(`/api/runs/${encodeURIComponent(runId)}`),

  forecast: (runId: string) =>
    request<ForecastResponse>(`/api/runs/${encodeURIComponent(runId)}/forecast`),

  plan: (runId: string) =>
    request<PlanDoc>(`/api/runs/${encodeURIComponent(runId)}/plan`),

  submitScenario: (runId: string, override: ScenarioOverride) =>
    request<JobDoc>(`/api/runs/${encodeURIComponent(runId)}/scenarios`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(override),
    }),

  job: (jobId: string) =>
    request<JobDoc>(`/api/jobs/${encodeURIComponent(jobId)}`),
};
