// Cockpit session: tracks the server-derived phase, gates outgoing commands,
// and numbers the rc stream.  The displayed phase always comes from server
// events (trial_start, trial_complete/failed, checkpoint notices), never from
// local assumptions.

import {
  ControllerMode,
  Message,
  ProtocolError,
  StateUpdate,
  decode,
  encode,
} from "./protocol.js";
import type { Vec } from "./adapters.js";
import type { Landmark, TaskGeometry } from "./scene.js";

export type Phase = "idle" | "configured" | "trial_running" | "trial_done" | "plan_complete";

export const STALE_AFTER_MS = 1000;
export const COMMAND_INTERVAL_MS = 20; // 50 Hz command budget

export interface SocketLike {
  send(data: string): void;
}

export class CockpitSession {
  phase: Phase = "idle";
  connected = false;
  seq = 0;
  lastState: StateUpdate | null = null;
  prevState: StateUpdate | null = null;
  lastStateAtMs = 0;
  task: TaskGeometry | null = null;
  landmarks: Landmark[] | null = null;
  overlay: string | null = null;
  lastError: string | null = null;
  private lastCommandAtMs = -Infinity;

  constructor(private socket: SocketLike) {}

  onOpen(): void {
    this.connected = true;
  }

  onClose(): void {
    // Keep the last telemetry so the scene can freeze under the stale banner.
    this.connected = false;
  }

  /** Feed one raw frame; returns the decoded message (or null on junk). */
  handleFrame(data: string, nowMs: number): Message | null {
    let msg: Message;
    try {
      msg = decode(data);
    } catch (err) {
      if (err instanceof ProtocolError) {
        this.lastError = err.message;
        return null;
      }
      throw err;
    }
    this.handleMessage(msg, nowMs);
    return msg;
  }

  handleMessage(msg: Message, nowMs: number): void {
    switch (msg.type) {
      case "state":
        this.prevState = this.lastState;
        this.lastState = msg;
        this.lastStateAtMs = nowMs;
        break;
      case "event":
        this.handleEvent(msg.kind, msg.payload);
        break;
      case "error":
        this.lastError = `${msg.code}${msg.text ? `: ${msg.text}` : ""}`;
        break;
      default:
        break; // the server never sends rc/config/start/stop back
    }
  }

  private handleEvent(kind: string, payload: Record<string, unknown> | null): void {
    if (kind === "trial_start") {
      this.phase = "trial_running";
      this.overlay = null;
      if (payload && typeof payload.kind === "string") {
        this.task = {
          kind: payload.kind as TaskGeometry["kind"],
          width: Number(payload.W),
          target: payload.target as TaskGeometry["target"],
          start: payload.start as TaskGeometry["start"],
        };
      }
    } else if (kind === "trial_complete") {
      const t = payload && typeof payload.completion_time === "number"
        ? ` in ${payload.completion_time.toFixed(2)} s`
        : "";
      this.overlay = `Target reached${t} - press stop`;
    } else if (kind === "trial_failed") {
      this.overlay = "Collision - trial failed, press stop";
    } else if (kind === "checkpoint" && payload && typeof payload.phase === "string") {
      const phase = payload.phase;
      if (phase === "configured" || phase === "trial_done" || phase === "plan_complete") {
        this.phase = phase;
      }
      const scene = payload.scene as { landmarks?: Landmark[] } | undefined;
      if (scene && Array.isArray(scene.landmarks)) {
        this.landmarks = scene.landmarks;
      }
    }
  }

  /** True when the view cannot be trusted: disconnected, or telemetry has
   * gone quiet for over a second. */
  isStale(nowMs: number): boolean {
    if (this.lastState === null) return false;
    return !this.connected || nowMs - this.lastStateAtMs > STALE_AFTER_MS;
  }

  widgetsEnabled(nowMs: number): boolean {
    return this.connected && this.phase === "trial_running" && !this.isStale(nowMs);
  }

  sendConfig(participantId: string, mode: ControllerMode, planSeed: number): void {
    this.socket.send(encode({
      type: "config", participant_id: participantId, controller_mode: mode, plan_seed: planSeed,
    }));
  }

  sendStart(): void {
    this.socket.send(encode({ type: "start" }));
  }

  sendStop(): void {
    this.socket.send(encode({ type: "stop" }));
  }

  /** Rate-limited rc sender; drops the command outside trial_running and
   * inside the 50 Hz budget.  Returns true when a frame actually went out. */
  sendCommand(v: Vec, yawRate: number, nowMs: number): boolean {
    if (!this.widgetsEnabled(nowMs)) return false;
    if (nowMs - this.lastCommandAtMs < COMMAND_INTERVAL_MS) return false;
    this.lastCommandAtMs = nowMs;
    this.seq += 1;
    this.socket.send(encode({
      type: "rc", seq: this.seq,
      t_ms: this.lastState ? this.lastState.t_ms : 0,
      vx: v[0], vy: v[1], vz: v[2], yaw_rate: yawRate,
    }));
    return true;
  }
}
