/** Launching the pipeline and watching it: submit, poll at a fixed interval,
 * surface failures with the stage name, recover across page reloads. */

import type { Api, JobStatus } from "./api.js";

export const POLL_INTERVAL_MS = 1000;
const STORAGE_KEY = "recast.active_job";

export interface JobConfigForm {
  scene: string;
  reference: string;
  promptBody: Record<string, unknown>;
  output: string;
  removalEnabled: boolean;
  tau: number;
}

export function buildJobConfig(form: JobConfigForm): Record<string, unknown> {
  return {
    scene: form.scene,
    prompt: form.promptBody,
    reference: form.reference,
    output: form.output,
    removal_enabled: form.removalEnabled,
    segment: { tau: form.tau },
  };
}

export interface PollHandle {
  done: Promise<JobStatus>;
  cancel: () => void;
}

/** Poll until the job reaches a terminal state. Resolves for both outcomes;
 * the caller branches on status.state. */
export function pollJob(
  api: Api,
  jobId: string,
  onUpdate: (status: JobStatus) => void,
  intervalMs: number = POLL_INTERVAL_MS,
): PollHandle {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let cancelled = false;

  const done = new Promise<JobStatus>((resolve, reject) => {
    const tick = async () => {
      if (cancelled) return;
      let status: JobStatus;
      try {
        status = await api.getJob(jobId);
      } catch (err) {
        reject(err);
        return;
      }
      if (cancelled) return;
      onUpdate(status);
      if (status.state === "done" || status.state === "failed") {
        resolve(status);
        return;
      }
      timer = setTimeout(tick, intervalMs);
    };
    void tick();
  });

  return {
    done,
    cancel: () => {
      cancelled = true;
      if (timer !== null) clearTimeout(timer);
    },
  };
}

export function rememberJob(jobId: string, storage: Storage = sessionStorage): void {
  storage.setItem(STORAGE_KEY, jobId);
}

export function forgetJob(storage: Storage = sessionStorage): void {
  storage.removeItem(STORAGE_KEY);
}

/** Job id persisted by a previous page load, if any. */
export function recoverJob(storage: Storage = sessionStorage): string | null {
  return storage.getItem(STORAGE_KEY);
}
