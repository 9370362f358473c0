/** Display-side geometry: path sampling and hit-testing.
 *
 * This is deliberately the only geometry math in the client, and it exists
 * solely for picking and ghost previews. Interpolation and validation live
 * server-side; every rendered frame is server SVG.
 */

export type Point = [number, number];

/** Control points from the server's absolute "M x y C ..." path data. */
export function parsePathControlPoints(d: string): Point[] {
  const numbers = d.match(/-?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?/g) ?? [];
  const points: Point[] = [];
  for (let i = 0; i + 1 < numbers.length; i += 2) {
    points.push([parseFloat(numbers[i]), parseFloat(numbers[i + 1])]);
  }
  return points;
}

/** Uniform samples along each cubic segment (control rows 3s..3s+3). */
export function samplePolyline(control: Point[], perSegment = 8): Point[] {
  const out: Point[] = [];
  const segments = Math.floor((control.length - 1) / 3);
  for (let s = 0; s < segments; s++) {
    const [p0, p1, p2, p3] = control.slice(3 * s, 3 * s + 4);
    const first = s === 0 ? 0 : 1;
    for (let j = first; j <= perSegment; j++) {
      const t = j / perSegment;
      const u = 1 - t;
      out.push([
        u * u * u * p0[0] + 3 * u * u * t * p1[0] + 3 * u * t * t * p2[0] + t * t * t * p3[0],
        u * u * u * p0[1] + 3 * u * u * t * p1[1] + 3 * u * t * t * p2[1] + t * t * t * p3[1],
      ]);
    }
  }
  return out;
}

function segmentDistance(p: Point, a: Point, b: Point): number {
  const ex = b[0] - a[0];
  const ey = b[1] - a[1];
  const len2 = ex * ex + ey * ey;
  const t = len2 > 0
    ? Math.max(0, Math.min(1, ((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / len2))
    : 0;
  const dx = p[0] - (a[0] + t * ex);
  const dy = p[1] - (a[1] + t * ey);
  return Math.hypot(dx, dy);
}

export function polylineDistance(polyline: Point[], p: Point): number {
  let best = Infinity;
  for (let i = 0; i + 1 < polyline.length; i++) {
    best = Math.min(best, segmentDistance(p, polyline[i], polyline[i + 1]));
  }
  return best;
}

/** Index of the polyline within tolerance closest to p, or null. */
export function hitTest(
  polylines: Point[][],
  p: Point,
  tolerance: number,
): number | null {
  let best: number | null = null;
  let bestDistance = tolerance;
  polylines.forEach((poly, index) => {
    const distance = polylineDistance(poly, p);
    if (distance <= bestDistance) {
      bestDistance = distance;
      best = index;
    }
  });
  return best;
}

export interface Rect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export function normalizedRect(a: Point, b: Point): Rect {
  return {
    x0: Math.min(a[0], b[0]),
    y0: Math.min(a[1], b[1]),
    x1: Math.max(a[0], b[0]),
    y1: Math.max(a[1], b[1]),
  };
}

/** Strokes with any sampled point inside the rectangle (lasso select). */
export function strokesInRect(polylines: Point[][], rect: Rect): number[] {
  const hits: number[] = [];
  polylines.forEach((poly, index) => {
    if (
      poly.some(
        ([x, y]) => x >= rect.x0 && x <= rect.x1 && y >= rect.y0 && y <= rect.y1,
      )
    ) {
      hits.push(index);
    }
  });
  return hits;
}

export function centroid(points: Point[]): Point {
  let sx = 0;
  let sy = 0;
  for (const [x, y] of points) {
    sx += x;
    sy += y;
  }
  return points.length ? [sx / points.length, sy / points.length] : [0, 0];
}
