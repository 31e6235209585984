// Controller widgets: convert pointer positions on on-screen pads into the
// bench's normalized touch samples.  Browsers expose no force channel, so the
// one-handed widget emulates pressure from radial distance or an explicit
// slider; the active source is reported so sessions stay comparable.

import {
  AdapterConfig,
  DEFAULT_ADAPTER,
  IDLE_SAMPLE,
  TouchSample,
  Vec,
  oneHandedMap,
  twoButtonMap,
} from "./adapters.js";

export interface PadRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

export type PressureSource = "pointer-radius" | "slider";

function clamp(x: number, lo: number, hi: number): number {
  return Math.min(Math.max(x, lo), hi);
}

/** Pointer pixels -> pad coordinates: u right, v up, both in [-1, 1]. */
export function padSample(
  rect: PadRect, x: number, y: number, pressure = 0, active = true,
): TouchSample {
  const u = clamp((2 * (x - rect.left)) / rect.width - 1, -1, 1);
  const v = clamp(1 - (2 * (y - rect.top)) / rect.height, -1, 1);
  return { u, v, pressure: active ? pressure : 0, active };
}

/** Pad coordinates -> pointer pixels (used by scripted runs and tests). */
export function padPoint(rect: PadRect, u: number, v: number): { x: number; y: number } {
  return {
    x: rect.left + ((u + 1) / 2) * rect.width,
    y: rect.top + ((1 - v) / 2) * rect.height,
  };
}

export class TwoButtonWidget {
  left: TouchSample = IDLE_SAMPLE;
  right: TouchSample = IDLE_SAMPLE;

  constructor(
    public leftRect: PadRect,
    public rightRect: PadRect,
    public cfg: AdapterConfig = DEFAULT_ADAPTER,
  ) {}

  pointer(pad: "left" | "right", x: number, y: number, active: boolean): void {
    const rect = pad === "left" ? this.leftRect : this.rightRect;
    const sample = active ? padSample(rect, x, y, 0, true) : IDLE_SAMPLE;
    if (pad === "left") this.left = sample;
    else this.right = sample;
  }

  release(): void {
    this.left = IDLE_SAMPLE;
    this.right = IDLE_SAMPLE;
  }

  command(): { v: Vec; yawRate: number } {
    return twoButtonMap(this.left, this.right, this.cfg);
  }
}

export class OneHandedWidget {
  sample: TouchSample = IDLE_SAMPLE;
  mode: "horizontal" | "vertical" = "horizontal";
  pressureSource: PressureSource = "pointer-radius";
  sliderValue = 0;

  constructor(public rect: PadRect, public cfg: AdapterConfig = DEFAULT_ADAPTER) {}

  pointer(x: number, y: number, active: boolean): void {
    if (!active) {
      this.sample = IDLE_SAMPLE;
      return;
    }
    const base = padSample(this.rect, x, y, 0, true);
    const pressure = this.pressureSource === "slider"
      ? clamp(this.sliderValue, 0, 1)
      : Math.min(Math.hypot(base.u, base.v), 1);
    this.sample = { ...base, pressure };
  }

  toggleMode(): void {
    this.mode = this.mode === "horizontal" ? "vertical" : "horizontal";
  }

  command(): { v: Vec; yawRate: number } {
    return { v: oneHandedMap(this.sample, this.mode, this.cfg), yawRate: 0 };
  }
}

/** Place pads the way the phone layout does: two pads for the baseline, one
 * centred pad for the one-handed interface. */
export function defaultPadRects(viewW: number, viewH: number): {
  left: PadRect; right: PadRect; mono: PadRect;
} {
  const size = Math.min(viewW, viewH) * 0.38;
  const margin = size * 0.2;
  return {
    left: { left: margin, top: viewH - size - margin, width: size, height: size },
    right: { left: viewW - size - margin, top: viewH - size - margin, width: size, height: size },
    mono: { left: (viewW - size) / 2, top: viewH - size - margin, width: size, height: size },
  };
}
