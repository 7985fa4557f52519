// Classification overlay: one bar per result, aligned to its window-end time
// on the shared time axis. Bar height encodes the class number (class 0 is
// the shortest), bar color encodes the classifier's confidence.

import { confidenceColor, type RGB } from "./colormap.js";
import type { ClassificationEnvelope } from "./protocol.js";

export interface Bar {
  /** pixel x of the bar's right edge (the window end instant) */
  x: number;
  /** pixel height, proportional to class_id + 1 */
  height: number;
  color: RGB;
  classId: number;
  confidence: number;
}

export interface BarLayout {
  timeStartUs: number;
  timeEndUs: number;
  width: number;
  maxHeight: number;
  nClasses: number;
}

export function layoutClassificationBars(
  results: readonly Pick<ClassificationEnvelope,
    "class_id" | "confidence" | "window_end_us">[],
  layout: BarLayout,
): Bar[] {
  const span = layout.timeEndUs - layout.timeStartUs;
  if (span <= 0) return [];
  const bars: Bar[] = [];
  for (const r of results) {
    if (r.window_end_us < layout.timeStartUs
        || r.window_end_us > layout.timeEndUs) {
      continue;
    }
    const frac = (r.window_end_us - layout.timeStartUs) / span;
    bars.push({
      x: Math.round(frac * (layout.width - 1)),
      height: Math.round(((r.class_id + 1) / layout.nClasses)
        * layout.maxHeight),
      color: confidenceColor(r.confidence),
      classId: r.class_id,
      confidence: r.confidence,
    });
  }
  return bars;
}
