/** Point/box prompt editing on top of the displayed frame.
 *
 * Left-click adds a positive point, shift- or ctrl-click a negative one, and
 * a drag of more than a few pixels becomes a box (normalized to min/max).
 * Interactions outside the image area are ignored. Coordinates are emitted
 * in image pixels regardless of the displayed size.
 */

import type { PromptBody } from "./api.js";
import type { PendingPrompt } from "./state.js";
import { emptyPrompt } from "./state.js";

const DRAG_THRESHOLD_PX = 3;

export interface FrameGeometry {
  /** Displayed bounding rect of the frame layer. */
  rect: () => { left: number; top: number; width: number; height: number };
  /** Native frame size in pixels. */
  natural: () => { width: number; height: number };
}

export interface EditorCallbacks {
  onChange: (pending: PendingPrompt) => void;
  onHint?: (message: string) => void;
}

export function toImageCoords(
  geometry: FrameGeometry,
  clientX: number,
  clientY: number,
): [number, number] | null {
  const rect = geometry.rect();
  const nat = geometry.natural();
  if (rect.width <= 0 || rect.height <= 0 || nat.width <= 0) return null;
  const x = ((clientX - rect.left) / rect.width) * nat.width;
  const y = ((clientY - rect.top) / rect.height) * nat.height;
  if (x < 0 || y < 0 || x >= nat.width || y >= nat.height) return null;
  return [Math.floor(x), Math.floor(y)];
}

export class PromptEditor {
  pending: PendingPrompt = emptyPrompt();
  private downAt: { clientX: number; clientY: number } | null = null;

  constructor(
    private readonly target: HTMLElement,
    private readonly geometry: FrameGeometry,
    private readonly callbacks: EditorCallbacks,
  ) {
    target.addEventListener("mousedown", this.onMouseDown);
    target.addEventListener("mouseup", this.onMouseUp);
  }

  private onMouseDown = (ev: MouseEvent): void => {
    if (ev.button !== 0) return;
    this.downAt = { clientX: ev.clientX, clientY: ev.clientY };
  };

  private onMouseUp = (ev: MouseEvent): void => {
    const down = this.downAt;
    this.downAt = null;
    if (ev.button !== 0 || down === null) return;
    const dx = ev.clientX - down.clientX;
    const dy = ev.clientY - down.clientY;
    if (Math.hypot(dx, dy) >= DRAG_THRESHOLD_PX) {
      this.addBox(down.clientX, down.clientY, ev.clientX, ev.clientY);
    } else {
      this.addPoint(ev.clientX, ev.clientY, ev.shiftKey || ev.ctrlKey);
    }
  };

  private addPoint(clientX: number, clientY: number, negative: boolean): void {
    const coords = toImageCoords(this.geometry, clientX, clientY);
    if (coords === null) {
      this.callbacks.onHint?.("click inside the frame");
      return;
    }
    this.pending = {
      ...this.pending,
      box: null,
      points: [...this.pending.points, [coords[0], coords[1], negative ? "negative" : "positive"]],
    };
    this.callbacks.onChange(this.pending);
  }

  private addBox(x0c: number, y0c: number, x1c: number, y1c: number): void {
    const a = toImageCoords(this.geometry, x0c, y0c);
    const b = toImageCoords(this.geometry, x1c, y1c);
    if (a === null || b === null) {
      this.callbacks.onHint?.("drag inside the frame");
      return;
    }
    this.pending = {
      points: [],
      box: [
        Math.min(a[0], b[0]),
        Math.min(a[1], b[1]),
        Math.max(a[0], b[0]),
        Math.max(a[1], b[1]),
      ],
    };
    this.callbacks.onChange(this.pending);
  }

  clear(): void {
    this.pending = emptyPrompt();
    this.callbacks.onChange(this.pending);
  }
}

/** Pending edits as a protocol prompt, or null if nothing was drawn yet. */
export function toPromptBody(pending: PendingPrompt, frameIndex: number): PromptBody | null {
  if (pending.box !== null) {
    return { frame_index: frameIndex, kind: "box", box: pending.box };
  }
  if (pending.points.length > 0) {
    return { frame_index: frameIndex, kind: "point", points: pending.points };
  }
  return null;
}
