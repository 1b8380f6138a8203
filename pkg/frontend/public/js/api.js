/**
 * Typed client for the planning service. Every shape here mirrors the
 * JSON the service persists on disk; the console never derives numbers
 * of its own beyond deltas of fetched totals.
 */
/** Error body contract is {"error": message, "code": code}. */
export class ApiError extends Error {
    constructor(status, code, message) {
        super(message);
        this.status = status;
        this.code = code;
        this.name = "ApiError";
    }
}
async function request(path, init) {
    const res = await fetch(path, init);
    const body = await res.json().catch(() => null);
    if (!res.ok) {
        const message = body && typeof body.error === "string" ? body.error : res.statusText;
        const code = body && typeof body.code === "string" ? body.code : "http_error";
        throw new ApiError(res.status, code, message);
    }
    return body;
}
export const api = {
    runs: () => request("/api/runs"),
    run: (runId) => request(`/api/runs/${encodeURIComponent(runId)}`),
    forecast: (runId) => request(`/api/runs/${encodeURIComponent(runId)}/forecast`),
    plan: (runId) => request(`/api/runs/${encodeURIComponent(runId)}/plan`),
    submitScenario: (runId, override) => request(`/api/runs/${encodeURIComponent(runId)}/scenarios`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(override),
    }),
    job: (jobId) => request(`/api/jobs/${encodeURIComponent(jobId)}`),
};
