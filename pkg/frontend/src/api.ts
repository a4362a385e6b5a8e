/** Typed client for the pipeline service. Every byte shown in the console
 * comes through these endpoints; the UI never computes pixels itself. */

export interface SequenceInfo {
  name: string;
  frames: number;
  width: number;
  height: number;
  channels: number;
  fps: string;
  id: string;
}

export type PointLabel = "positive" | "negative";

export interface PromptBody {
  frame_index: number;
  kind: "point" | "box" | "mask";
  points?: [number, number, PointLabel][];
  box?: [number, number, number, number];
  mask?: { dims: [number, number]; counts: number[] };
}

export interface JobStatus {
  job_id: string;
  state: "queued" | "running" | "failed" | "done";
  current_stage: string | null;
  progress: number;
  message: string | null;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly kind?: string,
  ) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let kind: string | undefined;
    let message = `${resp.status} ${resp.statusText}`;
    try {
      const body = await resp.json();
      kind = body.error;
      message = body.message ?? body.error ?? message;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(message, resp.status, kind);
  }
  return (await resp.json()) as T;
}

export class Api {
  constructor(readonly base: string = "") {}

  sequenceFrameUrl(name: string, index: number): string {
    return `${this.base}/api/sequences/${encodeURIComponent(name)}/frames/${index}`;
  }

  maskFrameUrl(maskId: string, index: number): string {
    return `${this.base}/api/masks/${maskId}/frames/${index}`;
  }

  resultFrameUrl(jobId: string, index: number): string {
    return `${this.base}/api/jobs/${jobId}/result/frames/${index}`;
  }

  async listSequences(): Promise<SequenceInfo[]> {
    return asJson(await fetch(`${this.base}/api/sequences`));
  }

  async postPrompt(
    sequence: string,
    prompt: PromptBody,
    tau?: number,
  ): Promise<{ mask_id: string; frames: number }> {
    const body: Record<string, unknown> = { sequence, prompt };
    if (tau !== undefined) body.tau = tau;
    return asJson(
      await fetch(`${this.base}/api/prompt`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
  }

  async submitJob(config: Record<string, unknown>): Promise<{ job_id: string }> {
    return asJson(
      await fetch(`${this.base}/api/jobs`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(config),
      }),
    );
  }

  async getJob(jobId: string): Promise<JobStatus> {
    return asJson(await fetch(`${this.base}/api/jobs/${jobId}`));
  }
}
