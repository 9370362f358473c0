/** App composition: upload form, canvas, group panel, timeline, console.
 *
 * The App class is also the entry point for the end-to-end test, which
 * drives it through DOM events against a live service.
 */

import { ApiClient } from "./api.js";
import { CanvasView, groupColor } from "./canvas.js";
import { RefinementConsole, SaveFile } from "./console.js";
import { centroid, parsePathControlPoints, samplePolyline } from "./geometry.js";
import { ProjectStore } from "./store.js";
import { Timeline } from "./timeline.js";
import type { JobView, RefineRequest } from "./types.js";

/** Group centroid from raw server SVG text (sampled stroke points). */
export function groupCentroidFromSvg(
  svgText: string,
  groupOf: (strokeId: number) => number,
  groupId: number,
): [number, number] {
  const ds = Array.from(svgText.matchAll(/\bd="([^"]*)"/g), (m) => m[1]);
  const points: [number, number][] = [];
  ds.forEach((d, strokeId) => {
    if (groupOf(strokeId) === groupId) {
      points.push(...samplePolyline(parsePathControlPoints(d)));
    }
  });
  return centroid(points);
}

const APP_HTML = `
  <div class="upload-bar">
    <input type="file" class="svg-file" accept=".svg">
    <input type="number" class="frame-count" value="24" min="2" max="64">
    <button class="upload-btn">upload</button>
  </div>
  <div class="error-box" hidden></div>
  <div class="workspace">
    <div class="canvas-host"></div>
    <div class="side-panel">
      <div class="group-panel">
        <input type="text" class="group-name" placeholder="group name">
        <button class="assign-btn">assign selection</button>
        <ul class="group-list"></ul>
      </div>
      <div class="timeline-host"></div>
      <div class="console-panel">
        <input type="number" class="steps" value="500" min="1">
        <input type="text" class="prompt" placeholder="motion prompt">
        <input type="text" class="remote" placeholder="remote prior URL (optional)">
        <button class="refine-btn">refine</button>
        <button class="export-btn">export</button>
        <div class="job-status"></div>
        <div class="loss-chart"></div>
        <div class="players">
          <div class="player coarse-player"></div>
          <div class="player refined-player"></div>
        </div>
      </div>
    </div>
  </div>`;

export interface AppOptions {
  pollIntervalMs?: number;
  saveFile?: SaveFile;
}

export class App {
  readonly store: ProjectStore;
  readonly canvas: CanvasView;
  readonly timeline: Timeline;
  console: RefinementConsole | null = null;
  private baseFrameSvg = "";
  private displayedSvg = "";
  private readonly saveFile: SaveFile;
  private readonly pollIntervalMs: number;

  constructor(
    readonly root: HTMLElement,
    readonly api: ApiClient,
    options: AppOptions = {},
  ) {
    this.pollIntervalMs = options.pollIntervalMs ?? 1000;
    this.saveFile = options.saveFile ?? downloadBlob;
    this.store = new ProjectStore(api);
    root.innerHTML = APP_HTML;

    this.canvas = new CanvasView(this.el(".canvas-host"), {
      onToggleStroke: (sid) => this.store.toggleStroke(sid),
      onLasso: (sids) => this.store.selectStrokes(sids),
      onKeyframeDrag: (dx, dy) => void this.handleKeyframeDrag(dx, dy),
    });
    this.canvas.setGroupLookup((sid) => this.store.groupOf(sid));
    this.timeline = new Timeline(this.el(".timeline-host"), (frame) => {
      void this.showFrame(frame);
    });

    this.el(".upload-btn").addEventListener("click", () => void this.uploadFromForm());
    this.el(".assign-btn").addEventListener("click", () => {
      const name = (this.el(".group-name") as HTMLInputElement).value;
      void this.assignSelection(undefined, name);
    });
    this.el(".refine-btn").addEventListener("click", () => {
      const steps = parseInt((this.el(".steps") as HTMLInputElement).value, 10);
      const prompt = (this.el(".prompt") as HTMLInputElement).value;
      const remote = (this.el(".remote") as HTMLInputElement).value;
      void this.startRefinement({
        steps,
        prompt,
        remote_endpoint: remote || undefined,
      });
    });
    this.el(".export-btn").addEventListener("click", () => {
      void this.console?.exportArchive(this.saveFile);
    });

    this.store.subscribe((state) => {
      const errorBox = this.el(".error-box");
      errorBox.hidden = !state.lastError;
      errorBox.textContent = state.lastError ?? "";
      this.canvas.setSelection(state.selection);
      this.canvas.setActiveGroup(state.activeGroupId);
      this.renderGroupList();
      if (state.project) {
        this.timeline.setFrameCount(state.project.frame_count);
        this.timeline.setFrame(state.activeFrame);
        this.timeline.setKeyframes(this.store.keyframesFor(state.activeGroupId));
      }
    });
  }

  private el(selector: string): HTMLElement {
    return this.root.querySelector(selector) as HTMLElement;
  }

  private async uploadFromForm(): Promise<void> {
    const input = this.el(".svg-file") as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const frames = parseInt(
      (this.el(".frame-count") as HTMLInputElement).value, 10);
    await this.upload(await file.text(), frames);
  }

  async upload(svgText: string, frameCount: number): Promise<void> {
    await this.store.upload(svgText, frameCount);
    if (this.store.current.project) {
      this.baseFrameSvg = await this.api.previewSvg(this.store.projectId, 1);
      await this.showFrame(1);
    }
  }

  /** Scrub: the displayed frame is always server-interpolated SVG. */
  async showFrame(frame: number): Promise<void> {
    this.store.setActiveFrame(frame);
    const actual = this.store.current.activeFrame;
    this.displayedSvg = await this.api.previewSvg(this.store.projectId, actual);
    this.canvas.load(this.displayedSvg);
  }

  get displayedFrameSvg(): string {
    return this.displayedSvg;
  }

  async assignSelection(groupId?: number, name = ""): Promise<void> {
    const gid = groupId ?? this.store.nextGroupId();
    await this.store.assignSelectionToGroup(gid, name);
    this.canvas.load(this.displayedSvg); // recolor with the new partition
  }

  /** Ghost drag ended: turn the on-screen delta into an absolute keyframe
   * offset using server-rendered positions only, then round-trip it. */
  private async handleKeyframeDrag(dx: number, dy: number): Promise<void> {
    const state = this.store.current;
    const groupId = state.activeGroupId;
    if (groupId === null) return;
    const groupOf = (sid: number) => this.store.groupOf(sid);
    const now = this.canvas.groupCentroid(groupId);
    const base = groupCentroidFromSvg(this.baseFrameSvg, groupOf, groupId);
    const offset: [number, number] = [
      now[0] + dx - base[0],
      now[1] + dy - base[1],
    ];
    const accepted = await this.store.putKeyframe(
      groupId, state.activeFrame, offset[0], offset[1]);
    if (accepted) await this.showFrame(state.activeFrame);
  }

  async startRefinement(request: RefineRequest): Promise<JobView | null> {
    const project = this.store.current.project;
    if (!project) return null;
    this.console?.dispose();
    this.console = new RefinementConsole(
      this.api,
      project.id,
      {
        status: this.el(".job-status"),
        chart: this.el(".loss-chart"),
        coarsePlayer: this.el(".coarse-player"),
        refinedPlayer: this.el(".refined-player"),
      },
      this.pollIntervalMs,
    );
    return this.console.start(request, project.frame_count);
  }

  private renderGroupList(): void {
    const list = this.el(".group-list");
    const state = this.store.current;
    list.innerHTML = "";
    for (const group of state.project?.groups ?? []) {
      const item = document.createElement("li");
      item.dataset.groupId = String(group.id);
      item.style.color = groupColor(group.id);
      item.textContent = `${group.name} (${group.strokes.length})`;
      if (group.id === state.activeGroupId) item.classList.add("active");
      item.addEventListener("click", () => this.store.setActiveGroup(group.id));
      list.appendChild(item);
    }
  }
}

function downloadBlob(name: string, data: ArrayBuffer): void {
  const url = URL.createObjectURL(new Blob([data], { type: "application/zip" }));
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = name;
  anchor.click();
  URL.revokeObjectURL(url);
}

const mount = typeof document !== "undefined"
  ? document.getElementById("app")
  : null;
if (mount) {
  const base = (mount.dataset.api ?? "").replace(/\/$/, "") || window.location.origin;
  new App(mount, new ApiClient(base));
}
