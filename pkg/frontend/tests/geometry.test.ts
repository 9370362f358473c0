import { describe, expect, it } from "vitest";

import { lossChartSvg } from "../src/console.js";
import {
  centroid,
  hitTest,
  normalizedRect,
  parsePathControlPoints,
  polylineDistance,
  samplePolyline,
  strokesInRect,
} from "../src/geometry.js";

describe("path sampling", () => {
  it("parses server path data into control points", () => {
    const pts = parsePathControlPoints("M 0 0 C 1 1 2 1 3 0");
    expect(pts).toEqual([[0, 0], [1, 1], [2, 1], [3, 0]]);
  });

  it("samples cubic endpoints exactly", () => {
    const poly = samplePolyline([[0, 0], [1, 1], [2, 1], [3, 0]], 4);
    expect(poly[0]).toEqual([0, 0]);
    expect(poly[poly.length - 1]).toEqual([3, 0]);
    expect(poly.length).toBe(5);
  });

  it("chains segments without duplicating shared endpoints", () => {
    const control: [number, number][] = [
      [0, 0], [1, 0], [2, 0], [3, 0], [4, 0], [5, 0], [6, 0],
    ];
    const poly = samplePolyline(control, 2);
    expect(poly.length).toBe(5);
  });
});

describe("hit testing", () => {
  const horizontal: [number, number][] = [[0, 0], [10, 0]];
  const vertical: [number, number][] = [[5, 2], [5, 12]];

  it("measures distance to the nearest segment point", () => {
    expect(polylineDistance(horizontal, [5, 3])).toBeCloseTo(3);
    expect(polylineDistance(horizontal, [12, 0])).toBeCloseTo(2);
  });

  it("picks the closest stroke within tolerance", () => {
    expect(hitTest([horizontal, vertical], [4, 1], 2)).toBe(0);
    expect(hitTest([horizontal, vertical], [5.5, 8], 2)).toBe(1);
    expect(hitTest([horizontal, vertical], [50, 50], 2)).toBeNull();
  });

  it("lasso selects strokes with any point inside the rectangle", () => {
    const rect = normalizedRect([4, -1], [11, 1]);
    expect(strokesInRect([horizontal, vertical], rect)).toEqual([0]);
  });

  it("centroid averages sampled points", () => {
    expect(centroid([[0, 0], [2, 0], [2, 2], [0, 2]])).toEqual([1, 1]);
  });
});

describe("loss chart", () => {
  it("renders one polyline vertex per trace row", () => {
    const svg = lossChartSvg([
      { step: 1, total: 4.0 },
      { step: 2, total: 2.0 },
      { step: 3, total: 1.0 },
    ]);
    expect(svg).toContain('data-rows="3"');
    const points = svg.match(/points="([^"]*)"/)![1].trim().split(/\s+/);
    expect(points.length).toBe(3);
  });

  it("handles the empty trace", () => {
    expect(lossChartSvg([])).toContain('data-rows="0"');
  });
});
