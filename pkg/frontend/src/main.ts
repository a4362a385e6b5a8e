/** Wires the console together. The same init path runs in the browser and
 * under the scripted session tests, so every tested behavior is the shipped
 * behavior. */

import { Api, ApiError } from "./api.js";
import { POLL_INTERVAL_MS, buildJobConfig, forgetJob, pollJob, recoverJob, rememberJob } from "./job_console.js";
import { MaskPreview, fetchLoader, type FrameLoader, type PreviewView } from "./mask_preview.js";
import { PromptEditor, toPromptBody, type FrameGeometry } from "./prompt_editor.js";
import { Store } from "./state.js";

export interface AppOptions {
  api?: Api;
  loader?: FrameLoader;
  pollIntervalMs?: number;
  storage?: Storage;
}

export interface App {
  store: Store;
  editor: PromptEditor;
  preview: MaskPreview;
  refresh: () => Promise<void>;
  runPrompt: () => Promise<string>;
  launchJob: () => Promise<string>;
  waitForJob: (jobId: string) => Promise<void>;
}

function el<T extends HTMLElement>(doc: Document, id: string): T {
  const node = doc.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

export function initApp(doc: Document, options: AppOptions = {}): App {
  const api = options.api ?? new Api("");
  const loader = options.loader ?? fetchLoader;
  const pollMs = options.pollIntervalMs ?? POLL_INTERVAL_MS;
  const storage = options.storage ?? doc.defaultView!.sessionStorage;
  const store = new Store();

  const sceneImg = el<HTMLImageElement>(doc, "scene-frame");
  const maskImg = el<HTMLImageElement>(doc, "mask-overlay");
  const layer = el<HTMLDivElement>(doc, "frame-layer");
  const scrubber = el<HTMLInputElement>(doc, "scrubber");
  const frameLabel = el<HTMLSpanElement>(doc, "frame-label");
  const sequenceSelect = el<HTMLSelectElement>(doc, "sequence-select");
  const pointsList = el<HTMLUListElement>(doc, "pending-points");
  const hint = el<HTMLSpanElement>(doc, "hint");
  const opacity = el<HTMLInputElement>(doc, "mask-opacity");
  const statusBadge = el<HTMLSpanElement>(doc, "job-badge");
  const progressBar = el<HTMLProgressElement>(doc, "job-progress");
  const compareSelect = el<HTMLSelectElement>(doc, "compare-mode");
  const comparePane = el<HTMLDivElement>(doc, "compare-pane");
  const resultImg = el<HTMLImageElement>(doc, "result-frame");
  const originalImg = el<HTMLImageElement>(doc, "original-frame");
  const wipe = el<HTMLInputElement>(doc, "wipe");

  const view: PreviewView = {
    showScene: (url) => {
      sceneImg.src = url;
    },
    showMask: (url) => {
      if (url === null) {
        maskImg.style.display = "none";
      } else {
        maskImg.src = url;
        maskImg.style.display = "block";
      }
    },
    showError: (message) => {
      hint.textContent = message;
      hint.classList.add("error");
    },
  };
  const preview = new MaskPreview(api, view, loader);

  const geometry: FrameGeometry = {
    rect: () => layer.getBoundingClientRect(),
    natural: () => ({
      width: Number(layer.dataset.width ?? 0),
      height: Number(layer.dataset.height ?? 0),
    }),
  };
  const editor = new PromptEditor(layer, geometry, {
    onChange: (pending) => {
      store.update({ pending });
      pointsList.replaceChildren(
        ...pending.points.map(([x, y, label]) => {
          const item = doc.createElement("li");
          item.textContent = `${label} (${x}, ${y})`;
          return item;
        }),
      );
      if (pending.box !== null) {
        const item = doc.createElement("li");
        item.textContent = `box (${pending.box.join(", ")})`;
        pointsList.appendChild(item);
      }
    },
    onHint: (message) => {
      hint.textContent = message;
      hint.classList.remove("error");
    },
  });

  async function showCurrent(): Promise<void> {
    const { sequence, maskId, frameIndex, frameCount } = store.state;
    if (sequence === null) return;
    frameLabel.textContent = `${frameIndex} / ${frameCount - 1}`;
    await preview.show(sequence, maskId, frameIndex, frameCount);
  }

  async function refresh(): Promise<void> {
    const sequences = await api.listSequences();
    sequenceSelect.replaceChildren(
      ...sequences.map((s) => {
        const option = doc.createElement("option");
        option.value = s.name;
        option.textContent = `${s.name} (${s.frames} frames)`;
        return option;
      }),
    );
    const first = sequences[0];
    if (first !== undefined && store.state.sequence === null) {
      store.update({ sequence: first.name, frameCount: first.frames, frameIndex: 0 });
      layer.dataset.width = String(first.width);
      layer.dataset.height = String(first.height);
      scrubber.max = String(first.frames - 1);
      await showCurrent();
    }
  }

  scrubber.addEventListener("input", () => {
    store.update({ frameIndex: Number(scrubber.value) });
    void showCurrent();
  });

  opacity.addEventListener("input", () => {
    store.update({ maskOpacity: Number(opacity.value) });
    maskImg.style.opacity = opacity.value;
  });

  async function runPrompt(): Promise<string> {
    const { sequence, pending, frameIndex } = store.state;
    if (sequence === null) throw new Error("no sequence loaded");
    const body = toPromptBody(pending, frameIndex);
    if (body === null) throw new Error("draw a point or box first");
    try {
      const { mask_id } = await api.postPrompt(sequence, body, readNumber(doc, "tau", 30));
      store.update({ maskId: mask_id });
      preview.invalidate();
      await showCurrent();
      hint.textContent = `mask ${mask_id.slice(0, 12)}…`;
      hint.classList.remove("error");
      return mask_id;
    } catch (err) {
      if (err instanceof ApiError) {
        hint.textContent = err.message;
        hint.classList.add("error");
      }
      throw err;
    }
  }

  async function launchJob(): Promise<string> {
    const { sequence, pending, frameIndex } = store.state;
    if (sequence === null) throw new Error("no sequence loaded");
    const body = toPromptBody(pending, frameIndex);
    if (body === null) throw new Error("accept a mask before launching");
    const config = buildJobConfig({
      scene: sequence,
      reference: readString(doc, "reference-path"),
      promptBody: body as unknown as Record<string, unknown>,
      output: readString(doc, "output-name") || "result",
      removalEnabled: el<HTMLInputElement>(doc, "removal-enabled").checked,
      tau: readNumber(doc, "tau", 30),
    });
    const { job_id } = await api.submitJob(config);
    store.update({ jobId: job_id });
    rememberJob(job_id, storage);
    statusBadge.textContent = "queued";
    statusBadge.className = "badge running";
    return job_id;
  }

  async function waitForJob(jobId: string): Promise<void> {
    const handle = pollJob(
      api,
      jobId,
      (status) => {
        progressBar.value = status.progress;
        statusBadge.textContent = status.current_stage
          ? `${status.state}: ${status.current_stage}`
          : status.state;
      },
      pollMs,
    );
    const status = await handle.done;
    if (status.state === "failed") {
      statusBadge.textContent = `failed: ${status.message ?? "unknown"}`;
      statusBadge.className = "badge failed";
      forgetJob(storage);
      return;
    }
    statusBadge.textContent = "done";
    statusBadge.className = "badge done";
    store.update({ compareMode: "slider" });
    compareSelect.value = "slider";
    renderCompare();
    forgetJob(storage);
  }

  function renderCompare(): void {
    const { sequence, jobId, frameIndex, compareMode } = store.state;
    comparePane.dataset.mode = compareMode;
    if (compareMode === "off" || jobId === null || sequence === null) {
      comparePane.style.display = "none";
      return;
    }
    comparePane.style.display = "flex";
    originalImg.src = api.sequenceFrameUrl(sequence, frameIndex);
    resultImg.src = api.resultFrameUrl(jobId, frameIndex);
  }

  compareSelect.addEventListener("change", () => {
    store.update({ compareMode: compareSelect.value as never });
    renderCompare();
  });
  wipe.addEventListener("input", () => {
    resultImg.style.clipPath = `inset(0 0 0 ${wipe.value}%)`;
  });

  el<HTMLButtonElement>(doc, "run-prompt").addEventListener("click", () => void runPrompt().catch(() => {}));
  el<HTMLButtonElement>(doc, "clear-prompt").addEventListener("click", () => editor.clear());
  el<HTMLButtonElement>(doc, "launch-job").addEventListener("click", () =>
    void launchJob().then((id) => waitForJob(id)).catch(() => {}),
  );

  const recovered = recoverJob(storage);
  if (recovered !== null) {
    store.update({ jobId: recovered });
    statusBadge.textContent = "recovering…";
    void waitForJob(recovered);
  }

  return { store, editor, preview, refresh, runPrompt, launchJob, waitForJob };
}

function readString(doc: Document, id: string): string {
  return (doc.getElementById(id) as HTMLInputElement | null)?.value ?? "";
}

function readNumber(doc: Document, id: string, fallback: number): number {
  const raw = readString(doc, id);
  const parsed = Number(raw);
  return Number.isFinite(parsed) && raw !== "" ? parsed : fallback;
}

declare global {
  interface Window {
    recastApp?: App;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined" && document.getElementById("frame-layer") !== null) {
  const app = initApp(document);
  window.recastApp = app;
  void app.refresh();
}
