/** The interactive canvas: server-rendered SVG frames plus selection and
 * keyframe-drag overlays. Stroke index equals path order in the server SVG.
 */

import {
  Point,
  centroid,
  hitTest,
  normalizedRect,
  parsePathControlPoints,
  samplePolyline,
  strokesInRect,
} from "./geometry.js";

export const GROUP_PALETTE = [
  "#555555", // implicit static group
  "#d1495b",
  "#1f7a8c",
  "#6a994e",
  "#bc6c25",
  "#7b2cbf",
  "#0466c8",
];

export function groupColor(groupId: number): string {
  return GROUP_PALETTE[groupId % GROUP_PALETTE.length];
}

export interface CanvasCallbacks {
  onToggleStroke(strokeId: number): void;
  onLasso(strokeIds: number[]): void;
  /** Fired when a ghost drag of the active group ends, in canvas units. */
  onKeyframeDrag(dx: number, dy: number): void;
}

interface DragState {
  kind: "lasso" | "ghost";
  start: Point;
  last: Point;
}

const CLICK_TOLERANCE_PX = 6;

export class CanvasView {
  private svg: SVGSVGElement | null = null;
  private paths: SVGPathElement[] = [];
  private polylines: Point[][] = [];
  private drag: DragState | null = null;
  private groupOf: (strokeId: number) => number = () => 0;
  private selection: ReadonlySet<number> = new Set();
  private activeGroup: number | null = null;

  constructor(
    readonly container: HTMLElement,
    readonly callbacks: CanvasCallbacks,
  ) {
    container.addEventListener("mousedown", (e) => this.onDown(e));
    container.addEventListener("mousemove", (e) => this.onMove(e));
    container.addEventListener("mouseup", (e) => this.onUp(e));
  }

  /** Replace the displayed frame with server SVG text. */
  load(svgText: string): void {
    this.container.innerHTML = svgText;
    this.svg = this.container.querySelector("svg");
    this.paths = Array.from(this.container.querySelectorAll("path"));
    this.polylines = this.paths.map((path) =>
      samplePolyline(parsePathControlPoints(path.getAttribute("d") ?? "")),
    );
    this.restyle();
  }

  setGroupLookup(groupOf: (strokeId: number) => number): void {
    this.groupOf = groupOf;
    this.restyle();
  }

  setSelection(selection: ReadonlySet<number>): void {
    this.selection = selection;
    this.restyle();
  }

  setActiveGroup(groupId: number | null): void {
    this.activeGroup = groupId;
  }

  strokePolylines(): Point[][] {
    return this.polylines;
  }

  /** Centroid of the sampled points of one group's strokes, canvas units. */
  groupCentroid(groupId: number): Point {
    const points: Point[] = [];
    this.polylines.forEach((poly, strokeId) => {
      if (this.groupOf(strokeId) === groupId) points.push(...poly);
    });
    return centroid(points);
  }

  private restyle(): void {
    this.paths.forEach((path, strokeId) => {
      path.setAttribute("stroke", groupColor(this.groupOf(strokeId)));
      path.setAttribute(
        "stroke-opacity",
        this.selection.has(strokeId) ? "1.0" : "0.75",
      );
      if (this.selection.has(strokeId)) {
        path.setAttribute("stroke-dasharray", "4 2");
      } else {
        path.removeAttribute("stroke-dasharray");
      }
    });
  }

  /** Client pixels to canvas units; falls back to 1:1 without layout. */
  toCanvas(e: MouseEvent): Point {
    const rect = this.container.getBoundingClientRect();
    let scaleX = 1;
    let scaleY = 1;
    if (this.svg && rect.width > 0 && rect.height > 0) {
      const viewBox = this.svg.viewBox.baseVal;
      if (viewBox && viewBox.width > 0) {
        scaleX = viewBox.width / rect.width;
        scaleY = viewBox.height / rect.height;
      }
    }
    return [(e.clientX - rect.left) * scaleX, (e.clientY - rect.top) * scaleY];
  }

  private onDown(e: MouseEvent): void {
    const p = this.toCanvas(e);
    const hit = hitTest(this.polylines, p, CLICK_TOLERANCE_PX);
    if (
      hit !== null &&
      this.activeGroup !== null &&
      this.groupOf(hit) === this.activeGroup
    ) {
      this.drag = { kind: "ghost", start: p, last: p };
    } else {
      this.drag = { kind: "lasso", start: p, last: p };
    }
  }

  private onMove(e: MouseEvent): void {
    if (!this.drag) return;
    this.drag.last = this.toCanvas(e);
    if (this.drag.kind === "ghost") this.updateGhost();
  }

  private onUp(e: MouseEvent): void {
    if (!this.drag) return;
    const drag = this.drag;
    this.drag = null;
    drag.last = this.toCanvas(e);
    this.clearGhost();
    const dx = drag.last[0] - drag.start[0];
    const dy = drag.last[1] - drag.start[1];
    const moved = Math.hypot(dx, dy) > 1.0;

    if (drag.kind === "ghost" && moved) {
      this.callbacks.onKeyframeDrag(dx, dy);
      return;
    }
    if (!moved) {
      const hit = hitTest(this.polylines, drag.last, CLICK_TOLERANCE_PX);
      if (hit !== null) this.callbacks.onToggleStroke(hit);
      return;
    }
    const rect = normalizedRect(drag.start, drag.last);
    this.callbacks.onLasso(strokesInRect(this.polylines, rect));
  }

  private updateGhost(): void {
    if (!this.drag || this.activeGroup === null) return;
    const dx = this.drag.last[0] - this.drag.start[0];
    const dy = this.drag.last[1] - this.drag.start[1];
    this.paths.forEach((path, strokeId) => {
      if (this.groupOf(strokeId) === this.activeGroup) {
        path.setAttribute("transform", `translate(${dx} ${dy})`);
        path.setAttribute("stroke-opacity", "0.4");
      }
    });
  }

  private clearGhost(): void {
    this.paths.forEach((path) => path.removeAttribute("transform"));
    this.restyle();
  }
}
