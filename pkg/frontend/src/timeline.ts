/** Frame scrubber with keyframe markers for the active group. */

import type { KeyframeModel } from "./types.js";

export class Timeline {
  private slider: HTMLInputElement;
  private markers: HTMLElement;
  private label: HTMLElement;

  constructor(
    readonly container: HTMLElement,
    onScrub: (frame: number) => void,
  ) {
    container.innerHTML = `
      <input type="range" min="1" max="1" value="1" step="1" class="frame-slider">
      <span class="frame-label">frame 1</span>
      <div class="keyframe-markers"></div>`;
    this.slider = container.querySelector(".frame-slider")!;
    this.markers = container.querySelector(".keyframe-markers")!;
    this.label = container.querySelector(".frame-label")!;
    this.slider.addEventListener("input", () => {
      onScrub(parseInt(this.slider.value, 10));
    });
  }

  setFrameCount(frameCount: number): void {
    this.slider.max = String(frameCount);
  }

  setFrame(frame: number): void {
    this.slider.value = String(frame);
    this.label.textContent = `frame ${frame}`;
  }

  setKeyframes(keyframes: KeyframeModel[]): void {
    this.markers.innerHTML = "";
    for (const kf of keyframes) {
      const marker = document.createElement("span");
      marker.className = "keyframe-marker";
      marker.dataset.frame = String(kf.frame);
      marker.textContent = `◆${kf.frame}`;
      marker.title = `frame ${kf.frame}: (${kf.dx.toFixed(1)}, ${kf.dy.toFixed(1)})`;
      this.markers.appendChild(marker);
    }
  }
}
