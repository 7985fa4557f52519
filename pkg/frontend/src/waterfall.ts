// Scrolling time/subcarrier heatmap: time on the X axis, subcarrier index on
// the Y axis, value as color. New columns enter on the right and the window
// scrolls left. Dropped frames are kept as explicit gap columns rather than
// interpolated away.

import { colorMap } from "./colormap.js";
import type { ViewRange } from "./protocol.js";

export const DEFAULT_WINDOW = 500;

/** A gap column marks frames the server dropped for us. */
export type Column = Float64Array | null;

export class WaterfallBuffer {
  readonly capacity: number;
  private columns: Column[] = [];

  constructor(capacity: number = DEFAULT_WINDOW) {
    if (capacity < 1) throw new Error("capacity must be positive");
    this.capacity = capacity;
  }

  get width(): number {
    return this.columns.length;
  }

  /** newest-last view of the retained columns */
  view(): readonly Column[] {
    return this.columns;
  }

  push(values: ArrayLike<number>): void {
    this.pushColumn(Float64Array.from(values as ArrayLike<number>));
  }

  pushGap(count = 1): void {
    for (let i = 0; i < count; i++) this.pushColumn(null);
  }

  private pushColumn(column: Column): void {
    this.columns.push(column);
    if (this.columns.length > this.capacity) {
      this.columns.shift();
    }
  }

  clear(): void {
    this.columns = [];
  }
}

export interface PixelGrid {
  width: number;
  height: number;
  /** RGBA, row-major, canvas ImageData compatible */
  data: Uint8ClampedArray;
}

/**
 * Rasterize the buffer: one pixel column per frame, newest column rightmost,
 * subcarrier 0 at the bottom row. Columns shorter than `height` fill from
 * the bottom; gap columns stay transparent.
 */
export function renderWaterfall(buffer: WaterfallBuffer, range: ViewRange,
                                height: number): PixelGrid {
  const columns = buffer.view();
  const width = buffer.capacity;
  const data = new Uint8ClampedArray(width * height * 4);
  const offset = width - columns.length; // right-align: newest at the edge
  for (let c = 0; c < columns.length; c++) {
    const column = columns[c];
    if (column === null) continue;
    const x = offset + c;
    const rows = Math.min(height, column.length);
    for (let i = 0; i < rows; i++) {
      const [r, g, b] = colorMap(column[i], range);
      const y = height - 1 - i;
      const at = (y * width + x) * 4;
      data[at] = r;
      data[at + 1] = g;
      data[at + 2] = b;
      data[at + 3] = 255;
    }
  }
  return { width, height, data };
}

/** Column auto-range helper for first-run defaults: [min, max] over data. */
export function suggestRange(buffer: WaterfallBuffer): ViewRange | null {
  let lo = Infinity;
  let hi = -Infinity;
  for (const column of buffer.view()) {
    if (column === null) continue;
    for (const v of column) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!(lo < hi)) return null;
  return { lo, hi };
}
