/**
 * Client-side lever validation. Mirrors the server's override rules so a
 * bad form never turns into a request; the server still re-validates.
 */
export function validateOverride(o) {
    const errors = [];
    if (o.price_bands) {
        for (const [cat, band] of Object.entries(o.price_bands)) {
            const [lo, hi] = band;
            if (!Number.isFinite(lo) || !Number.isFinite(hi)) {
                errors.push({ field: `price_bands.${cat}`, message: "band values must be numbers" });
            }
            else if (!(lo > 0)) {
                errors.push({ field: `price_bands.${cat}`, message: "p_min must be > 0" });
            }
            else if (!(lo < hi)) {
                errors.push({ field: `price_bands.${cat}`, message: "p_min must be < p_max" });
            }
        }
    }
    if (o.profit_margin !== undefined && !(o.profit_margin >= 0)) {
        errors.push({ field: "profit_margin", message: "margin must be >= 0" });
    }
    if (o.inventory_caps) {
        for (const [cat, cap] of Object.entries(o.inventory_caps)) {
            const caps = Array.isArray(cap) ? cap : [cap];
            if (caps.some((c) => !(c >= 0))) {
                errors.push({ field: `inventory_caps.${cat}`, message: "caps must be >= 0" });
            }
        }
    }
    if (o.iterations !== undefined &&
        (!Number.isInteger(o.iterations) || o.iterations < 1)) {
        errors.push({ field: "iterations", message: "iterations must be an integer >= 1" });
    }
    if (o.particles !== undefined &&
        (!Number.isInteger(o.particles) || o.particles < 2)) {
        errors.push({ field: "particles", message: "particles must be an integer >= 2" });
    }
    return errors;
}
