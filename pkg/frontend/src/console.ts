/** Refinement console: start a job, poll it, chart the loss trace, and
 * drive frame-locked side-by-side playback of coarse vs refined frames.
 */

import { ApiClient } from "./api.js";
import type { JobView, RefineRequest, TracePoint } from "./types.js";

export type SaveFile = (name: string, data: ArrayBuffer) => void;

export class RefinementConsole {
  job: JobView | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;
  private playTimer: ReturnType<typeof setInterval> | null = null;
  private frame = 1;
  private frameCount = 1;
  private onUpdateHooks: Array<(job: JobView) => void> = [];

  constructor(
    readonly api: ApiClient,
    readonly projectId: string,
    readonly elements: {
      status: HTMLElement;
      chart: HTMLElement;
      coarsePlayer: HTMLElement;
      refinedPlayer: HTMLElement;
    },
    readonly pollIntervalMs = 1000,
  ) {}

  onUpdate(hook: (job: JobView) => void): void {
    this.onUpdateHooks.push(hook);
  }

  async start(request: RefineRequest, frameCount: number): Promise<JobView> {
    this.frameCount = frameCount;
    const job = await this.api.refine(this.projectId, request);
    this.job = job;
    this.render(job);
    this.timer = setInterval(() => void this.poll(), this.pollIntervalMs);
    return job;
  }

  /** Resolves when the job leaves the running state. */
  waitForCompletion(timeoutMs = 600_000): Promise<JobView> {
    return new Promise((resolve, reject) => {
      const deadline = Date.now() + timeoutMs;
      this.onUpdate((job) => {
        if (job.state !== "running") resolve(job);
        else if (Date.now() > deadline) reject(new Error("job timed out"));
      });
    });
  }

  private async poll(): Promise<void> {
    if (!this.job) return;
    const job = await this.api.getJob(this.job.id);
    this.job = job;
    this.render(job);
    if (job.state !== "running" && this.timer) {
      clearInterval(this.timer);
      this.timer = null;
    }
    for (const hook of this.onUpdateHooks) hook(job);
  }

  private render(job: JobView): void {
    const suffix = job.error ? ` - ${job.error}` : "";
    this.elements.status.textContent =
      `${job.state} (step ${job.step}/${job.total_steps})${suffix}`;
    this.elements.chart.innerHTML = lossChartSvg(job.trace);
  }

  /** Frame-locked scrub: both players always show the same frame index. */
  async setFrame(frame: number): Promise<void> {
    this.frame = Math.max(1, Math.min(this.frameCount, frame));
    const [coarse, refined] = await Promise.all([
      this.api.frameSvg(this.projectId, this.frame, "coarse"),
      this.api.frameSvg(this.projectId, this.frame, "refined"),
    ]);
    this.elements.coarsePlayer.innerHTML = coarse;
    this.elements.refinedPlayer.innerHTML = refined;
  }

  get currentFrame(): number {
    return this.frame;
  }

  play(fps = 8): void {
    this.stop();
    this.playTimer = setInterval(() => {
      void this.setFrame((this.frame % this.frameCount) + 1);
    }, 1000 / fps);
  }

  stop(): void {
    if (this.playTimer) {
      clearInterval(this.playTimer);
      this.playTimer = null;
    }
  }

  async exportArchive(save: SaveFile): Promise<void> {
    const data = await this.api.exportArchive(this.projectId);
    save(`${this.projectId}.zip`, data);
  }

  dispose(): void {
    if (this.timer) clearInterval(this.timer);
    this.stop();
  }
}

/** Inline SVG chart: one polyline vertex per completed optimization step. */
export function lossChartSvg(trace: TracePoint[], w = 320, h = 96): string {
  if (trace.length === 0) {
    return `<svg width="${w}" height="${h}" data-rows="0"></svg>`;
  }
  const maxStep = Math.max(...trace.map((t) => t.step));
  const maxLoss = Math.max(...trace.map((t) => t.total), 1e-12);
  const points = trace
    .map((t) => {
      const x = (t.step / maxStep) * (w - 8) + 4;
      const y = h - 4 - (t.total / maxLoss) * (h - 8);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
  return (
    `<svg width="${w}" height="${h}" data-rows="${trace.length}">` +
    `<polyline points="${points}" fill="none" stroke="#1f7a8c" stroke-width="1.5"/>` +
    `</svg>`
  );
}
