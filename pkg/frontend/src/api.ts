/** Typed client for the animation service. All state lives server-side. */

import type {
  GroupModel,
  JobView,
  KeyframeModel,
  ProjectSummary,
  RefineRequest,
  Stage,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public field?: string,
  ) {
    super(message);
  }
}

async function raiseFor(response: Response): Promise<void> {
  if (response.ok) return;
  let code = "http";
  let message = `${response.status} ${response.statusText}`;
  let field: string | undefined;
  try {
    const body = await response.json();
    code = body.code ?? code;
    message = body.message ?? message;
    field = body.field;
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(response.status, code, message, field);
}

export class ApiClient {
  constructor(readonly base: string) {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.url(path), init);
    await raiseFor(response);
    return (await response.json()) as T;
  }

  /** Multipart upload built by hand so it works in every fetch runtime. */
  async upload(svgText: string, frameCount: number): Promise<ProjectSummary> {
    const boundary = `----sketchanim${Math.random().toString(16).slice(2)}`;
    const body = [
      `--${boundary}\r\n` +
        'Content-Disposition: form-data; name="svg"; filename="sketch.svg"\r\n' +
        "Content-Type: image/svg+xml\r\n\r\n" +
        svgText +
        "\r\n",
      `--${boundary}\r\n` +
        'Content-Disposition: form-data; name="frame_count"\r\n\r\n' +
        `${frameCount}\r\n`,
      `--${boundary}--\r\n`,
    ].join("");
    return this.json<ProjectSummary>("/projects", {
      method: "POST",
      headers: { "Content-Type": `multipart/form-data; boundary=${boundary}` },
      body,
    });
  }

  getProject(id: string): Promise<ProjectSummary> {
    return this.json(`/projects/${id}`);
  }

  async putGroups(id: string, groups: GroupModel[]): Promise<GroupModel[]> {
    const body = await this.json<{ groups: GroupModel[] }>(
      `/projects/${id}/groups`,
      {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ groups }),
      },
    );
    return body.groups;
  }

  async putKeyframes(
    id: string,
    keyframes: KeyframeModel[],
  ): Promise<KeyframeModel[]> {
    const body = await this.json<{ keyframes: KeyframeModel[] }>(
      `/projects/${id}/keyframes`,
      {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ keyframes }),
      },
    );
    return body.keyframes;
  }

  async previewSvg(id: string, frame: number): Promise<string> {
    const response = await fetch(this.url(`/projects/${id}/preview/${frame}`));
    await raiseFor(response);
    return response.text();
  }

  async frameSvg(id: string, frame: number, stage: Stage): Promise<string> {
    const response = await fetch(
      this.url(`/projects/${id}/frames/${frame}?stage=${stage}`),
    );
    await raiseFor(response);
    return response.text();
  }

  refine(id: string, request: RefineRequest): Promise<JobView> {
    return this.json(`/projects/${id}/refine`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
  }

  getJob(jobId: string): Promise<JobView> {
    return this.json(`/jobs/${jobId}`);
  }

  async exportArchive(id: string): Promise<ArrayBuffer> {
    const response = await fetch(this.url(`/projects/${id}/export`));
    await raiseFor(response);
    return response.arrayBuffer();
  }
}
