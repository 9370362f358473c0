/** End-to-end workflow against the live service (jsdom DOM, real HTTP):
 * upload -> select and group strokes -> place four keyframes by dragging ->
 * scrub server frames -> refine with the stub prior -> side-by-side
 * playback -> export archive.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { App } from "../src/main.js";

const here = dirname(fileURLToPath(import.meta.url));
const servers = JSON.parse(
  readFileSync(join(here, ".servers.json"), "utf8"),
) as { base: string; stubBase: string };

const FIXTURE_SVG = `<svg xmlns="http://www.w3.org/2000/svg" width="256" height="256">
  <path d="M 60 180 C 70 160 90 160 100 180 C 90 200 70 200 60 180" stroke-width="2"/>
  <path d="M 70 175 C 75 170 85 170 90 175" stroke-width="2"/>
  <path d="M 170 60 C 180 80 200 80 210 60" stroke-width="2"/>
  <path d="M 170 60 L 170 100 L 210 100 L 210 60" stroke-width="2"/>
</svg>`;

function mouse(el: HTMLElement, kind: string, x: number, y: number): void {
  el.dispatchEvent(
    new MouseEvent(kind, { clientX: x, clientY: y, bubbles: true }),
  );
}

function click(el: HTMLElement, x: number, y: number): void {
  mouse(el, "mousedown", x, y);
  mouse(el, "mouseup", x, y);
}

function drag(el: HTMLElement, from: [number, number],
              to: [number, number]): void {
  mouse(el, "mousedown", from[0], from[1]);
  mouse(el, "mousemove", (from[0] + to[0]) / 2, (from[1] + to[1]) / 2);
  mouse(el, "mousemove", to[0], to[1]);
  mouse(el, "mouseup", to[0], to[1]);
}

function pathData(html: string): string[] {
  return Array.from(html.matchAll(/\bd="([^"]*)"/g), (m) => m[1]);
}

describe("canvas workflow end to end", () => {
  let app: App;
  let api: ApiClient;
  let canvasHost: HTMLElement;
  const saved: Array<{ name: string; bytes: Uint8Array }> = [];

  beforeAll(async () => {
    api = new ApiClient(servers.base);
    const root = document.createElement("div");
    document.body.appendChild(root);
    app = new App(root, api, {
      pollIntervalMs: 150,
      saveFile: (name, data) =>
        saved.push({ name, bytes: new Uint8Array(data) }),
    });
    canvasHost = root.querySelector(".canvas-host") as HTMLElement;
  });

  it("uploads the fixture sketch", async () => {
    await app.upload(FIXTURE_SVG, 6);
    const project = app.store.current.project;
    expect(project).not.toBeNull();
    expect(project!.stroke_count).toBe(4);
    expect(canvasHost.querySelectorAll("path").length).toBe(4);
  });

  it("selects strokes by click and assigns the ball group", async () => {
    const polylines = app.canvas.strokePolylines();
    click(canvasHost, ...polylines[0][4]);
    expect(Array.from(app.store.current.selection)).toEqual([0]);
    click(canvasHost, ...polylines[1][2]);
    expect(Array.from(app.store.current.selection).sort()).toEqual([0, 1]);

    await app.assignSelection(1, "ball");
    const groups = (await api.getProject(app.store.projectId)).groups;
    expect(groups.find((g) => g.id === 1)?.strokes.sort()).toEqual([0, 1]);
  });

  it("selects the hoop by lasso and assigns a second group", async () => {
    drag(canvasHost, [150, 40], [240, 120]);
    expect(Array.from(app.store.current.selection).sort()).toEqual([2, 3]);
    await app.assignSelection(2, "hoop");
    const groups = (await api.getProject(app.store.projectId)).groups;
    expect(groups.map((g) => g.id).sort()).toEqual([1, 2]);
  });

  it("places four keyframes for the ball by dragging", async () => {
    app.store.setActiveGroup(1);
    // the four-position workflow: drag the ball ghost at four frames
    const moves: Array<[number, [number, number]]> = [
      [2, [20, -30]],
      [3, [40, -55]],
      [5, [70, -70]],
      [6, [95, -55]],
    ];
    for (const [frame, delta] of moves) {
      await app.showFrame(frame);
      const anchor = app.canvas.strokePolylines()[0][4];
      drag(canvasHost, anchor, [anchor[0] + delta[0], anchor[1] + delta[1]]);
      await new Promise((r) => setTimeout(r, 150)); // server round-trip
    }
    const keyframes = (await api.getProject(app.store.projectId)).keyframes;
    const ball = keyframes.filter((kf) => kf.group === 1);
    expect(ball.length).toBe(4);
    expect(ball.map((kf) => kf.frame).sort()).toEqual([2, 3, 5, 6]);
    expect(app.store.current.lastError).toBeNull();
  });

  it("rejects a frame-1 drag with an inline server message", async () => {
    await app.showFrame(1);
    const before = (await api.getProject(app.store.projectId)).keyframes;
    const anchor = app.canvas.strokePolylines()[0][4];
    drag(canvasHost, anchor, [anchor[0] + 25, anchor[1]]);
    await new Promise((r) => setTimeout(r, 200));
    expect(app.store.current.lastError).toMatch(/first frame/);
    const after = (await api.getProject(app.store.projectId)).keyframes;
    expect(after).toEqual(before);
  });

  it("scrubbing shows the server-interpolated frame verbatim", async () => {
    await app.showFrame(4);
    const direct = await api.previewSvg(app.store.projectId, 4);
    expect(app.displayedFrameSvg).toBe(direct);
    expect(pathData(canvasHost.innerHTML)).toEqual(pathData(direct));
    // a frame between keyframes differs from frame 1 (motion is visible)
    const base = await api.previewSvg(app.store.projectId, 1);
    expect(pathData(direct)).not.toEqual(pathData(base));
  });

  it("refines with the stub prior and charts one row per step", async () => {
    const job = await app.startRefinement({
      steps: 2,
      seed: 11,
      prompt: "the ball drops through the hoop",
      remote_endpoint: servers.stubBase,
    });
    expect(job).not.toBeNull();
    const finished = await app.console!.waitForCompletion();
    expect(finished.state).toBe("done");
    expect(finished.step).toBe(2);

    const chartSvg = document.querySelector(".loss-chart svg") as SVGElement;
    expect(chartSvg.getAttribute("data-rows")).toBe(String(finished.step));
    expect(finished.trace.map((t) => t.step)).toEqual([1, 2]);
  });

  it("plays coarse and refined side by side, frame-locked", async () => {
    const console_ = app.console!;
    await console_.setFrame(4);
    expect(console_.currentFrame).toBe(4);
    const coarseHtml = (document.querySelector(".coarse-player") as HTMLElement)
      .innerHTML;
    const refinedHtml = (document.querySelector(".refined-player") as HTMLElement)
      .innerHTML;
    expect(pathData(coarseHtml)).toEqual(
      pathData(await api.frameSvg(app.store.projectId, 4, "coarse")));
    expect(pathData(refinedHtml)).toEqual(
      pathData(await api.frameSvg(app.store.projectId, 4, "refined")));
    expect(pathData(coarseHtml).length).toBe(4);

    await console_.setFrame(6);
    expect(console_.currentFrame).toBe(6);
  });

  it("exports the archive through the console", async () => {
    await app.console!.exportArchive((name, data) =>
      saved.push({ name, bytes: new Uint8Array(data) }));
    expect(saved.length).toBeGreaterThan(0);
    const zip = saved[saved.length - 1];
    expect(zip.name.endsWith(".zip")).toBe(true);
    // zip local file header magic
    expect(Array.from(zip.bytes.slice(0, 2))).toEqual([0x50, 0x4b]);
  });
});
