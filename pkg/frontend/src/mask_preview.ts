/** Mask overlay fetching: the scene frame and its mask frame move in
 * lockstep while scrubbing; stale fetches are cancelled and the frames
 * around the playhead are prefetched for responsive scrubbing. */

import type { Api } from "./api.js";

export const PREFETCH_RADIUS = 2;

export interface FrameLoader {
  /** Resolve a displayable object URL for an image resource. */
  load(url: string, signal: AbortSignal): Promise<string>;
}

export const fetchLoader: FrameLoader = {
  async load(url: string, signal: AbortSignal): Promise<string> {
    const resp = await fetch(url, { signal });
    if (!resp.ok) throw new Error(`${resp.status} for ${url}`);
    const blob = await resp.blob();
    return URL.createObjectURL(blob);
  },
};

export interface PreviewView {
  showScene(objectUrl: string): void;
  showMask(objectUrl: string | null): void;
  showError(message: string): void;
}

export class MaskPreview {
  private controller: AbortController | null = null;
  private prefetched = new Map<string, Promise<string>>();
  requests: string[] = []; // fetch order, oldest first (observable for tests)

  constructor(
    private readonly api: Api,
    private readonly view: PreviewView,
    private readonly loader: FrameLoader = fetchLoader,
  ) {}

  /** Cancel whatever is in flight and show frame `index`. */
  async show(sequence: string, maskId: string | null, index: number, frameCount: number): Promise<void> {
    this.controller?.abort();
    const controller = new AbortController();
    this.controller = controller;
    try {
      const scene = await this.fetch(this.api.sequenceFrameUrl(sequence, index), controller.signal);
      if (controller.signal.aborted) return;
      this.view.showScene(scene);
      if (maskId === null) {
        this.view.showMask(null);
      } else {
        const mask = await this.fetch(this.api.maskFrameUrl(maskId, index), controller.signal);
        if (controller.signal.aborted) return;
        this.view.showMask(mask);
      }
    } catch (err) {
      if (controller.signal.aborted) return;
      this.view.showError(err instanceof Error ? err.message : String(err));
      return;
    }
    this.prefetch(sequence, maskId, index, frameCount, controller.signal);
  }

  private fetch(url: string, signal: AbortSignal): Promise<string> {
    const hit = this.prefetched.get(url);
    if (hit !== undefined) return hit;
    this.requests.push(url);
    return this.loader.load(url, signal);
  }

  private prefetch(
    sequence: string,
    maskId: string | null,
    index: number,
    frameCount: number,
    signal: AbortSignal,
  ): void {
    for (let d = 1; d <= PREFETCH_RADIUS; d++) {
      for (const i of [index - d, index + d]) {
        if (i < 0 || i >= frameCount) continue;
        for (const url of this.urlsFor(sequence, maskId, i)) {
          if (this.prefetched.has(url)) continue;
          this.requests.push(url);
          const promise = this.loader.load(url, signal).catch(() => {
            this.prefetched.delete(url);
            return "";
          });
          this.prefetched.set(url, promise);
        }
      }
    }
  }

  private urlsFor(sequence: string, maskId: string | null, index: number): string[] {
    const urls = [this.api.sequenceFrameUrl(sequence, index)];
    if (maskId !== null) urls.push(this.api.maskFrameUrl(maskId, index));
    return urls;
  }

  /** Drop prefetched entries (sequence or mask changed). */
  invalidate(): void {
    this.prefetched.clear();
  }
}
