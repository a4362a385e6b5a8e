/** Single-user session state with change notification. */

import type { PointLabel } from "./api.js";

export type CompareMode = "off" | "side-by-side" | "slider";

export interface PendingPrompt {
  points: [number, number, PointLabel][];
  box: [number, number, number, number] | null;
}

export interface SessionState {
  sequence: string | null;
  frameCount: number;
  frameIndex: number;
  pending: PendingPrompt;
  maskId: string | null;
  maskOpacity: number;
  jobId: string | null;
  compareMode: CompareMode;
}

export function emptyPrompt(): PendingPrompt {
  return { points: [], box: null };
}

export function initialState(): SessionState {
  return {
    sequence: null,
    frameCount: 0,
    frameIndex: 0,
    pending: emptyPrompt(),
    maskId: null,
    maskOpacity: 0.5,
    jobId: null,
    compareMode: "off",
  };
}

type Listener = (state: SessionState) => void;

export class Store {
  private listeners: Listener[] = [];

  constructor(public state: SessionState = initialState()) {}

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  update(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }
}
