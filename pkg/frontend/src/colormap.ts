// Value-to-color mapping for the waterfalls and classification bars.
//
// Amplitudes/phases map onto a blue-to-red blend inside the operator-chosen
// threshold range: everything at or below the low threshold is pure blue,
// everything at or above the high one is pure red, and the span in between
// is rescaled to cover the whole blend.

import type { ViewRange } from "./protocol.js";

export type RGB = [number, number, number];

/** round-half-up, matching the documented midpoint behavior */
function channel(x: number): number {
  return Math.min(255, Math.max(0, Math.round(x)));
}

export function colorMap(value: number, range: ViewRange): RGB {
  if (!(range.lo < range.hi)) {
    throw new Error(`view range needs lo < hi, got [${range.lo}, ${range.hi}]`);
  }
  if (value <= range.lo) return [0, 0, 255];
  if (value >= range.hi) return [255, 0, 0];
  const t = (value - range.lo) / (range.hi - range.lo);
  return [channel(255 * t), 0, channel(255 * (1 - t))];
}

const GREY: RGB = [128, 128, 128];
const GREEN: RGB = [0, 200, 0];

/** classifier confidence: 1.0 renders green, 0.0 grey, linear in between */
export function confidenceColor(confidence: number): RGB {
  const c = Math.min(1, Math.max(0, confidence));
  return [
    channel(GREY[0] + (GREEN[0] - GREY[0]) * c),
    channel(GREY[1] + (GREEN[1] - GREY[1]) * c),
    channel(GREY[2] + (GREEN[2] - GREY[2]) * c),
  ];
}

export function cssColor(rgb: RGB): string {
  return `rgb(${rgb[0]},${rgb[1]},${rgb[2]})`;
}
