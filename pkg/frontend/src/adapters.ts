// Touch-to-velocity mappings for the two controller widgets.  The math is the
// normative mapping the bench defines; the server never re-maps rc commands,
// so what these emit is what the drone flies.

export type Vec = [number, number, number];

export interface TouchSample {
  u: number;        // pad horizontal, [-1, 1] about the midpoint
  v: number;        // pad vertical, up positive
  pressure: number; // [0, 1]
  active: boolean;
}

export const IDLE_SAMPLE: TouchSample = { u: 0, v: 0, pressure: 0, active: false };

export interface AdapterConfig {
  sMax: number;       // m/s at full deflection / force
  deadzone: number;   // normalized radius
  yawRateMax: number; // rad/s at full deflection
}

export const DEFAULT_ADAPTER: AdapterConfig = { sMax: 2.0, deadzone: 0.1, yawRateMax: Math.PI / 2 };

export const PRESSURE_HOVER_THRESHOLD = 0.02;

function radialScale(r: number, deadzone: number): number {
  return Math.max(r - deadzone, 0) / (1 - deadzone);
}

function axisScale(x: number, deadzone: number): number {
  return Math.sign(x) * radialScale(Math.abs(x), deadzone);
}

function clampSpeed(v: Vec, sMax: number): Vec {
  const speed = Math.hypot(v[0], v[1], v[2]);
  if (speed <= sMax || speed === 0) return v;
  const k = sMax / speed;
  return [v[0] * k, v[1] * k, v[2] * k];
}

/** Baseline: right pad drives the horizontal plane (u -> forward, v -> right),
 * left pad vertical drives climb, left pad horizontal the (ignored) yaw. */
export function twoButtonMap(
  left: TouchSample, right: TouchSample, cfg: AdapterConfig = DEFAULT_ADAPTER,
): { v: Vec; yawRate: number } {
  let vx = 0, vy = 0, vz = 0, yawRate = 0;
  if (right.active) {
    const r = Math.hypot(right.u, right.v);
    const scale = radialScale(r, cfg.deadzone);
    if (r > 0 && scale > 0) {
      vx = cfg.sMax * scale * (right.u / r);
      vy = cfg.sMax * scale * (right.v / r);
    }
  }
  if (left.active) {
    vz = cfg.sMax * axisScale(left.v, cfg.deadzone);
    yawRate = cfg.yawRateMax * axisScale(left.u, cfg.deadzone);
  }
  return { v: clampSpeed([vx, vy, vz], cfg.sMax), yawRate };
}

/** One-handed: thumb position sets direction (pad-up is forward, or up in
 * vertical mode), force sets speed; below the threshold the drone hovers. */
export function oneHandedMap(
  mono: TouchSample, mode: "horizontal" | "vertical", cfg: AdapterConfig = DEFAULT_ADAPTER,
): Vec {
  if (!mono.active || mono.pressure < PRESSURE_HOVER_THRESHOLD) return [0, 0, 0];
  const r = Math.hypot(mono.u, mono.v);
  if (r === 0) return [0, 0, 0];
  const speed = cfg.sMax * Math.min(mono.pressure, 1);
  const along = speed * (mono.v / r);
  const across = speed * (mono.u / r);
  return mode === "horizontal" ? [along, across, 0] : [0, across, along];
}
