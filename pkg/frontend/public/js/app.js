/**
 * DOM wiring for the what-if console. All state lives in this module;
 * the other modules stay free of document access so they run under the
 * test runner as-is.
 */
import { api, ApiError } from "./api.js";
import { attentionStripSvg, lineChartSvg } from "./charts.js";
import { pollJob } from "./poll.js";
import { buildCard, compareScenarios, failedCard, submitScenario, summarizeOverride, } from "./scenario.js";
const state = {
    runs: [],
    runId: null,
    basePlan: null,
    forecast: null,
    activeCategory: null,
    cards: [],
};
const $ = (id) => {
    const el = document.getElementById(id);
    if (!el)
        throw new Error(`missing element #${id}`);
    return el;
};
const fmt = (v) => v.toFixed(2);
// ---------------------------------------------------------------------------
// Forecast panel
// ---------------------------------------------------------------------------
function renderForecast() {
    const panel = $("forecast-panel");
    if (!state.forecast) {
        panel.innerHTML =
            `<p class="empty">No forecast artifacts for this run yet. ` +
                `Run the forecast stage (<code>freshplan forecast --run-dir ...</code>) and reload.</p>`;
        return;
    }
    const cats = Object.keys(state.forecast).sort();
    if (!state.activeCategory || !cats.includes(state.activeCategory)) {
        state.activeCategory = cats[0];
    }
    const tabs = cats
        .map((c) => `<button class="tab${c === state.activeCategory ? " active" : ""}" data-cat="${c}">${c}</button>`)
        .join("");
    const doc = state.forecast[state.activeCategory];
    const volume = doc.days.map((d) => d.volume);
    const price = doc.days.map((d) => d.price);
    const spoilage = doc.days.map((d) => d.spoilage);
    const strips = doc.attention
        .map((w, i) => `<div class="strip-row" title="window ${i + 1}">${attentionStripSvg(w, `attention window ${i + 1}`)}</div>`)
        .join("");
    panel.innerHTML =
        `<div class="tabs">${tabs}</div>` +
            `<div class="charts" title="run ${state.runId} / forecast/${doc.category}.json">` +
            lineChartSvg(volume, "volume", "volume") +
            lineChartSvg(price, "price", "price") +
            lineChartSvg(spoilage, "spoilage", "spoilage") +
            `</div>` +
            `<details><summary>attention (${doc.attention.length} windows)</summary>${strips}</details>`;
    panel.querySelectorAll(".tab").forEach((b) => b.addEventListener("click", () => {
        state.activeCategory = b.dataset.cat ?? null;
        renderForecast();
    }));
}
// ---------------------------------------------------------------------------
// Scenario form
// ---------------------------------------------------------------------------
function readOverride() {
    const override = {};
    const margin = $("margin").value.trim();
    if (margin !== "")
        override.profit_margin = Number(margin);
    const bandCat = $("band-cat").value;
    const bandLo = $("band-lo").value.trim();
    const bandHi = $("band-hi").value.trim();
    if (bandCat && (bandLo !== "" || bandHi !== "")) {
        override.price_bands = { [bandCat]: [Number(bandLo), Number(bandHi)] };
    }
    const capCat = $("cap-cat").value;
    const cap = $("cap").value.trim();
    if (capCat && cap !== "") {
        override.inventory_caps = { [capCat]: Number(cap) };
    }
    const iters = $("iterations").value.trim();
    if (iters !== "")
        override.iterations = Number(iters);
    const parts = $("particles").value.trim();
    if (parts !== "")
        override.particles = Number(parts);
    return override;
}
function showFormErrors(messages) {
    $("form-errors").innerHTML = messages
        .map((m) => `<li>${m}</li>`)
        .join("");
}
async function onSubmit(ev) {
    ev.preventDefault();
    if (!state.runId || !state.basePlan)
        return;
    const override = readOverride();
    const result = await submitScenario(state.runId, override).catch((err) => {
        // server-side 422 carries the field message in the error body
        showFormErrors([err instanceof ApiError ? err.message : String(err)]);
        return null;
    });
    if (result === null)
        return;
    if (!result.ok) {
        showFormErrors(result.errors.map((e) => `${e.field}: ${e.message}`));
        return;
    }
    showFormErrors([]);
    const job = result.job;
    const pending = {
        jobId: job.job_id,
        state: job.state,
        override,
        summary: summarizeOverride(override),
        runId: null,
        weeklyProfit: null,
        series: {},
        feasible: null,
        delta: null,
        error: null,
    };
    state.cards.push(pending);
    renderCards();
    try {
        const done = await pollJob(job.job_id, {
            onProgress: (j) => {
                pending.state = j.state;
                updateCardProgress(j.job_id, j.progress, j.max_iterations);
            },
        });
        const plan = await api.plan(done.result_run_id);
        const idx = state.cards.indexOf(pending);
        state.cards[idx] = buildCard(done, override, plan, state.basePlan);
    }
    catch (err) {
        const idx = state.cards.indexOf(pending);
        state.cards[idx] = failedCard({ ...job, state: "failed", error: err instanceof Error ? err.message : String(err) }, override);
    }
    renderCards();
}
// ---------------------------------------------------------------------------
// Cards and comparison
// ---------------------------------------------------------------------------
function updateCardProgress(jobId, progress, maxIters) {
    const el = document.querySelector(`[data-job="${jobId}"] .progress`);
    if (el)
        el.textContent = `${progress}/${maxIters} iterations`;
}
function cardHtml(card) {
    const body = card.state === "done"
        ? `<p class="profit" title="run ${card.runId} / plan.json">weekly profit ${fmt(card.weeklyProfit)}</p>` +
            `<p class="delta ${card.delta >= 0 ? "up" : "down"}">delta vs base ${fmt(card.delta)}</p>` +
            (card.feasible === false ? `<p class="flag">infeasible plan</p>` : "")
        : card.state === "failed"
            ? `<p class="flag">${card.error}</p>`
            : `<p class="progress">waiting...</p>`;
    return (`<div class="card ${card.state}" data-job="${card.jobId}">` +
        `<h3>${card.jobId} <span class="state">${card.state}</span></h3>` +
        `<p class="levers">${card.summary}</p>${body}</div>`);
}
function renderCards() {
    $("cards").innerHTML = state.cards.map(cardHtml).join("");
    renderComparison();
}
function renderComparison() {
    const rows = compareScenarios(state.cards.filter((c) => c.state === "done"));
    if (rows.length === 0) {
        $("comparison").innerHTML = "";
        return;
    }
    const tr = rows
        .map((r) => `<tr class="${r.feasible === false ? "infeasible" : ""}">` +
        `<td>${r.jobId}</td><td>${r.summary}</td>` +
        `<td class="num">${fmt(r.weeklyProfit)}</td>` +
        `<td class="num">${fmt(r.delta)}</td>` +
        `<td>${r.feasible === false ? "no" : "yes"}</td></tr>`)
        .join("");
    $("comparison").innerHTML =
        `<table><thead><tr><th>job</th><th>levers</th><th>weekly profit</th>` +
            `<th>delta</th><th>feasible</th></tr></thead><tbody>${tr}</tbody></table>`;
}
// ---------------------------------------------------------------------------
// Run loading
// ---------------------------------------------------------------------------
async function loadRun(runId) {
    state.runId = runId;
    state.cards = [];
    const meta = state.runs.find((r) => r.run_id === runId);
    $("run-meta").textContent = meta
        ? `${meta.span[0]} to ${meta.span[1]}, optimized ${fmt(meta.optimized_raw_profit)} ` +
            `(baseline ${fmt(meta.baseline_raw_profit)}), ${meta.feasible ? "feasible" : "infeasible"}`
        : "";
    state.basePlan = await api.plan(runId).catch(() => null);
    $("base-profit").textContent = state.basePlan
        ? `base weekly profit ${fmt(state.basePlan.totals.raw_profit)}`
        : "no plan for this run";
    try {
        state.forecast = (await api.forecast(runId)).forecast;
    }
    catch (err) {
        state.forecast = null; // 409 = stage not run yet; render the empty state
    }
    const cats = state.basePlan?.categories ?? [];
    for (const id of ["band-cat", "cap-cat"]) {
        $(id).innerHTML =
            `<option value=""></option>` +
                cats.map((c) => `<option value="${c}">${c}</option>`).join("");
    }
    renderForecast();
    renderCards();
}
async function init() {
    state.runs = (await api.runs()).runs;
    const select = $("run-select");
    select.innerHTML = state.runs
        .map((r) => `<option value="${r.run_id}">${r.run_id}</option>`)
        .join("");
    select.addEventListener("change", () => void loadRun(select.value));
    $("scenario-form").addEventListener("submit", (ev) => void onSubmit(ev));
    if (state.runs.length > 0) {
        const last = state.runs[state.runs.length - 1].run_id;
        select.value = last;
        await loadRun(last);
    }
    else {
        $("run-meta").textContent = "no completed runs in the run root";
    }
}
if (typeof document !== "undefined" && document.getElementById("run-select")) {
    void init();
}
