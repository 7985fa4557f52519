// Dual-handle range slider built from two stacked native range inputs.
// The pair always satisfies lo < hi; the handles push each other instead of
// crossing.

export interface DualSlider {
  root: HTMLElement;
  get(): { lo: number; hi: number };
  set(lo: number, hi: number): void;
}

export function clampPair(lo: number, hi: number, minGap: number,
                          moved: "lo" | "hi"): { lo: number; hi: number } {
  if (hi - lo >= minGap) return { lo, hi };
  return moved === "lo" ? { lo, hi: lo + minGap } : { lo: hi - minGap, hi };
}

export function createDualSlider(
  label: string, min: number, max: number, step: number,
  initial: { lo: number; hi: number },
  onChange: (lo: number, hi: number) => void,
): DualSlider {
  const root = document.createElement("div");
  root.className = "dual-slider";
  const caption = document.createElement("span");
  caption.className = "dual-slider-label";
  const low = document.createElement("input");
  const high = document.createElement("input");
  for (const input of [low, high]) {
    input.type = "range";
    input.min = String(min);
    input.max = String(max);
    input.step = String(step);
  }
  low.value = String(initial.lo);
  high.value = String(initial.hi);

  const minGap = step;
  const render = () => {
    caption.textContent =
      `${label}: ${Number(low.value).toPrecision(4)}`
      + ` .. ${Number(high.value).toPrecision(4)}`;
  };
  const changed = (moved: "lo" | "hi") => {
    const fixed = clampPair(Number(low.value), Number(high.value),
                            minGap, moved);
    low.value = String(fixed.lo);
    high.value = String(fixed.hi);
    render();
    onChange(fixed.lo, fixed.hi);
  };
  low.addEventListener("input", () => changed("lo"));
  high.addEventListener("input", () => changed("hi"));
  render();

  root.append(caption, low, high);
  return {
    root,
    get: () => ({ lo: Number(low.value), hi: Number(high.value) }),
    set: (lo, hi) => {
      low.value = String(lo);
      high.value = String(hi);
      render();
    },
  };
}
