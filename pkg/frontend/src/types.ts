/** Wire types mirroring the server schema exactly. */

export interface GroupModel {
  id: number;
  name: string;
  strokes: number[];
}

export interface KeyframeModel {
  group: number;
  frame: number;
  dx: number;
  dy: number;
}

export interface CanvasModel {
  w: number;
  h: number;
}

export interface ProjectSummary {
  id: string;
  status: "draft" | "refining" | "done";
  frame_count: number;
  canvas: CanvasModel;
  stroke_count: number;
  groups: GroupModel[];
  keyframes: KeyframeModel[];
}

export interface TracePoint {
  step: number;
  total: number;
}

export interface JobView {
  id: string;
  project: string;
  state: "running" | "paused" | "failed" | "done";
  step: number;
  total_steps: number;
  losses: Record<string, number>;
  trace: TracePoint[];
  error: string | null;
}

export interface RefineRequest {
  steps?: number;
  seed?: number;
  priors?: string[];
  prompt?: string;
  remote_endpoint?: string;
}

export type Stage = "coarse" | "refined";
