import type { JobDoc, PlanCell, PlanDoc } from "../src/api.js";

export function cell(day: number, profit: number): PlanCell {
  return {
    day,
    price: 10 + day,
    qty: 20,
    expected_sales: 22,
    sellable: 20,
    waste: 0,
    revenue: 180,
    cost: 120,
    profit,
  };
}

export function planDoc(
  profits: Record<string, number[]>,
  feasible = true,
): PlanDoc {
  const categories = Object.keys(profits).sort();
  const cells: Record<string, PlanCell[]> = {};
  let total = 0;
  for (const cat of categories) {
    cells[cat] = profits[cat].map((p, i) => cell(i + 1, p));
    total += profits[cat].reduce((a, b) => a + b, 0);
  }
  return {
    schema_version: 1,
    categories,
    horizon: profits[categories[0]].length,
    cells,
    totals: { raw_profit: total, penalty: 0, fitness: total },
    feasible,
    constraint_report: [],
  };
}

export function jobDoc(overrides: Partial<JobDoc> = {}): JobDoc {
  return {
    job_id: "job-0001",
    base_run_id: "base",
    state: "done",
    progress: 25,
    max_iterations: 25,
    result_run_id: "scenario-1",
    result_url: "/api/runs/scenario-1",
    error: null,
    ...overrides,
  };
}

export function jsonResponse(body: unknown, status = 200): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    statusText: `status ${status}`,
    json: async () => body,
  } as unknown as Response;
}
