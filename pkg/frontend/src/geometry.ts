import type { Bbox } from "./types";

/** Drags shorter than this on either axis are accidental clicks. */
export const MIN_DRAG_PX = 2;

export const BADGE_SUCCESS_COLOR = "#2e9e44";
export const BADGE_FAILURE_COLOR = "#d33c3c";

/**
 * Turn a canvas drag into a normalized box, or null for a degenerate drag.
 * Corners are sorted, so reverse-direction drags give the same box.
 */
export function dragToBox(
  x0: number,
  y0: number,
  x1: number,
  y1: number,
  canvasWidth: number,
  canvasHeight: number,
): Bbox | null {
  const left = Math.max(0, Math.min(x0, x1));
  const right = Math.min(canvasWidth, Math.max(x0, x1));
  const top = Math.max(0, Math.min(y0, y1));
  const bottom = Math.min(canvasHeight, Math.max(y0, y1));
  if (right - left < MIN_DRAG_PX || bottom - top < MIN_DRAG_PX) return null;
  return [left / canvasWidth, top / canvasHeight, right / canvasWidth, bottom / canvasHeight];
}

/** Normalized box back to canvas pixels, for overlay drawing. */
export function boxToCanvas(
  bbox: Bbox,
  canvasWidth: number,
  canvasHeight: number,
): { x: number; y: number; w: number; h: number } {
  const [xMin, yMin, xMax, yMax] = bbox;
  return {
    x: xMin * canvasWidth,
    y: yMin * canvasHeight,
    w: (xMax - xMin) * canvasWidth,
    h: (yMax - yMin) * canvasHeight,
  };
}

/**
 * Badge color keyed off the server's success flag (its IoU > 0.5 rule).
 * Never recomputed from the IoU here, so the threshold has one owner.
 */
export function badgeColor(success: boolean): string {
  return success ? BADGE_SUCCESS_COLOR : BADGE_FAILURE_COLOR;
}

export function formatIou(iou: number): string {
  return `IoU ${iou.toFixed(2)}`;
}
