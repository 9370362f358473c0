/** UI state: a mirror of the server project plus view-only fields.
 *
 * Server-owned data (groups, keyframes, frames) is never mutated locally;
 * every edit round-trips through the API and the mirror is replaced with
 * the server's response.
 */

import { ApiClient, ApiError } from "./api.js";
import type { GroupModel, KeyframeModel, ProjectSummary } from "./types.js";

export interface UiState {
  project: ProjectSummary | null;
  selection: ReadonlySet<number>;
  activeGroupId: number | null;
  activeFrame: number;
  playing: boolean;
  lastError: string | null;
}

type Listener = (state: UiState) => void;

export class ProjectStore {
  private state: UiState = {
    project: null,
    selection: new Set(),
    activeGroupId: null,
    activeFrame: 1,
    playing: false,
    lastError: null,
  };
  private listeners: Listener[] = [];

  constructor(readonly api: ApiClient) {}

  get current(): UiState {
    return this.state;
  }

  get projectId(): string {
    const project = this.state.project;
    if (!project) throw new Error("no project loaded");
    return project.id;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    listener(this.state);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private set(partial: Partial<UiState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  private async guard<T>(action: () => Promise<T>): Promise<T | null> {
    try {
      const result = await action();
      if (this.state.lastError) this.set({ lastError: null });
      return result;
    } catch (error) {
      if (error instanceof ApiError) {
        const suffix = error.field ? ` (${error.field})` : "";
        this.set({ lastError: `${error.message}${suffix}` });
        return null;
      }
      throw error;
    }
  }

  async upload(svgText: string, frameCount: number): Promise<void> {
    await this.guard(async () => {
      const project = await this.api.upload(svgText, frameCount);
      this.set({
        project,
        selection: new Set(),
        activeGroupId: null,
        activeFrame: 1,
      });
    });
  }

  async reload(): Promise<void> {
    const project = await this.api.getProject(this.projectId);
    this.set({ project });
  }

  toggleStroke(strokeId: number): void {
    const selection = new Set(this.state.selection);
    if (selection.has(strokeId)) selection.delete(strokeId);
    else selection.add(strokeId);
    this.set({ selection });
  }

  selectStrokes(strokeIds: number[]): void {
    this.set({ selection: new Set(strokeIds) });
  }

  clearSelection(): void {
    this.set({ selection: new Set() });
  }

  setActiveGroup(groupId: number | null): void {
    this.set({ activeGroupId: groupId });
  }

  setActiveFrame(frame: number): void {
    const max = this.state.project?.frame_count ?? 1;
    this.set({ activeFrame: Math.max(1, Math.min(max, frame)) });
  }

  setPlaying(playing: boolean): void {
    this.set({ playing });
  }

  groupOf(strokeId: number): number {
    for (const group of this.state.project?.groups ?? []) {
      if (group.strokes.includes(strokeId)) return group.id;
    }
    return 0; // implicit static group
  }

  /** Assign the current selection to a group; the partition rule (a stroke
   * lives in exactly one group) is applied here and re-checked server-side. */
  async assignSelectionToGroup(groupId: number, name: string): Promise<void> {
    const project = this.state.project;
    if (!project || this.state.selection.size === 0) return;
    const selection = this.state.selection;
    const groups: GroupModel[] = project.groups
      .map((group) => ({
        ...group,
        strokes: group.strokes.filter((sid) => !selection.has(sid)),
      }))
      .filter((group) => group.strokes.length > 0 && group.id !== groupId);
    const kept = project.groups.find((g) => g.id === groupId);
    groups.push({
      id: groupId,
      name: name || kept?.name || `group ${groupId}`,
      strokes: [
        ...(kept?.strokes.filter((sid) => !selection.has(sid)) ?? []),
        ...Array.from(selection).sort((a, b) => a - b),
      ],
    });
    await this.guard(async () => {
      const saved = await this.api.putGroups(project.id, groups);
      this.set({
        project: { ...project, groups: saved },
        selection: new Set(),
        activeGroupId: groupId,
      });
    });
  }

  nextGroupId(): number {
    const used = (this.state.project?.groups ?? []).map((g) => g.id);
    return used.length ? Math.max(...used) + 1 : 1;
  }

  /** Upsert a keyframe offset for (group, frame) and sync with the server.
   * Returns true when the server accepted the edit. */
  async putKeyframe(
    groupId: number,
    frame: number,
    dx: number,
    dy: number,
  ): Promise<boolean> {
    const project = this.state.project;
    if (!project) return false;
    const keyframes: KeyframeModel[] = project.keyframes.filter(
      (kf) => !(kf.group === groupId && kf.frame === frame),
    );
    keyframes.push({ group: groupId, frame, dx, dy });
    keyframes.sort((a, b) => a.group - b.group || a.frame - b.frame);
    const saved = await this.guard(() =>
      this.api.putKeyframes(project.id, keyframes),
    );
    if (saved === null) return false;
    this.set({ project: { ...project, keyframes: saved } });
    return true;
  }

  keyframesFor(groupId: number | null): KeyframeModel[] {
    if (groupId === null) return [];
    return (this.state.project?.keyframes ?? []).filter(
      (kf) => kf.group === groupId,
    );
  }
}
