/**
 * Inline SVG builders. Pure string functions so the rendering logic is
 * testable without a DOM; app.ts injects the results with innerHTML.
 */
const CHART_W = 320;
const CHART_H = 96;
const PAD = 6;
/** Y domain for a series; spoilage is a rate and stays pinned to [0,1]. */
export function yDomain(values, kind) {
    if (kind === "spoilage")
        return [0, 1];
    let lo = Math.min(...values);
    let hi = Math.max(...values);
    if (lo === hi) {
        lo -= 1;
        hi += 1;
    }
    const pad = 0.08 * (hi - lo);
    return [lo - pad, hi + pad];
}
export function linePath(values, domain) {
    const [lo, hi] = domain;
    const n = values.length;
    const x = (i) => n === 1 ? CHART_W / 2 : PAD + (i * (CHART_W - 2 * PAD)) / (n - 1);
    const y = (v) => {
        const t = (v - lo) / (hi - lo);
        return CHART_H - PAD - t * (CHART_H - 2 * PAD);
    };
    return values
        .map((v, i) => `${i === 0 ? "M" : "L"}${x(i).toFixed(1)},${y(v).toFixed(1)}`)
        .join(" ");
}
export function lineChartSvg(values, kind, label) {
    const domain = yDomain(values, kind);
    const path = linePath(values, domain);
    const last = values[values.length - 1];
    return (`<svg viewBox="0 0 ${CHART_W} ${CHART_H}" class="chart" role="img" aria-label="${label}">` +
        `<path d="${path}" fill="none" stroke="currentColor" stroke-width="1.5"/>` +
        `<text x="${PAD}" y="12" class="chart-label">${label}</text>` +
        `<text x="${CHART_W - PAD}" y="12" text-anchor="end" class="chart-value">${last.toFixed(2)}</text>` +
        `</svg>`);
}
/**
 * Opacity per step for one window's attention weights, scaled so the
 * strongest step is fully opaque. Uniform weights give a uniform strip.
 */
export function attentionOpacities(weights) {
    const max = Math.max(...weights);
    if (!(max > 0))
        return weights.map(() => 0);
    return weights.map((w) => w / max);
}
export function attentionStripSvg(weights, label) {
    const ops = attentionOpacities(weights);
    const w = CHART_W / Math.max(ops.length, 1);
    const cells = ops
        .map((o, i) => `<rect x="${(i * w).toFixed(1)}" y="0" width="${w.toFixed(1)}" height="14" fill-opacity="${o.toFixed(4)}"/>`)
        .join("");
    return (`<svg viewBox="0 0 ${CHART_W} 14" class="strip" role="img" aria-label="${label}">` +
        `<g fill="currentColor">${cells}</g></svg>`);
}
