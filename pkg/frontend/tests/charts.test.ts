import { describe, expect, it } from "vitest";

import {
  attentionOpacities,
  attentionStripSvg,
  lineChartSvg,
  linePath,
  yDomain,
} from "../src/charts.js";

describe("yDomain", () => {
  it("pins spoilage to the unit interval regardless of the data", () => {
    expect(yDomain([0.02, 0.08, 0.05], "spoilage")).toEqual([0, 1]);
    expect(yDomain([0.9], "spoilage")).toEqual([0, 1]);
  });

  it("pads the data range by 8 percent on each side", () => {
    const [lo, hi] = yDomain([10, 20], "volume");
    expect(lo).toBeCloseTo(10 - 0.8, 12);
    expect(hi).toBeCloseTo(20 + 0.8, 12);
  });

  it("widens a flat series so the line is not on the frame edge", () => {
    const [lo, hi] = yDomain([5, 5, 5], "price");
    expect(lo).toBeLessThan(5);
    expect(hi).toBeGreaterThan(5);
    // widened to [4, 6] first, then the 8 percent pad applies
    expect([lo, hi]).toEqual([3.84, 6.16]);
  });
});

describe("linePath", () => {
  it("emits one moveto then linetos, one point per value", () => {
    const d = linePath([1, 2, 3, 4], [0, 5]);
    expect(d.startsWith("M")).toBe(true);
    expect(d.match(/L/g)).toHaveLength(3);
  });

  it("maps the domain ends onto the padded frame, y inverted", () => {
    const d = linePath([0, 1], [0, 1]);
    const [first, second] = d.split(" ");
    expect(first).toBe("M6.0,90.0");
    expect(second).toBe("L314.0,6.0");
  });

  it("centers a single point horizontally", () => {
    expect(linePath([3], [0, 6]).startsWith("M160.0,")).toBe(true);
  });
});

describe("lineChartSvg", () => {
  it("labels the chart and prints the last value", () => {
    const svg = lineChartSvg([4, 5, 6.125], "price", "price");
    expect(svg).toContain('aria-label="price"');
    expect(svg).toContain(">6.13</text>");
    expect(svg).toContain('<path d="M');
  });
});

describe("attentionOpacities", () => {
  it("scales the strongest step to full opacity", () => {
    expect(attentionOpacities([1, 4, 2])).toEqual([0.25, 1, 0.5]);
  });

  it("gives uniform weights a uniform strip", () => {
    expect(attentionOpacities([0.2, 0.2, 0.2, 0.2, 0.2])).toEqual([
      1, 1, 1, 1, 1,
    ]);
  });

  it("maps an all-zero row to zero opacity instead of dividing by zero", () => {
    expect(attentionOpacities([0, 0, 0])).toEqual([0, 0, 0]);
  });
});

describe("attentionStripSvg", () => {
  it("draws one cell per weight with the scaled opacity", () => {
    const svg = attentionStripSvg([0.5, 1.0], "window 1");
    expect(svg.match(/<rect /g)).toHaveLength(2);
    expect(svg).toContain('fill-opacity="0.5000"');
    expect(svg).toContain('fill-opacity="1.0000"');
  });
});
