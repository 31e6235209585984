// Scripted cockpit run against the real server: synthetic pointer events on
// the two-button widget fly one crossing trial over a live websocket, and the
// resulting log must pass the server's bitwise replay verification.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { DEFAULT_ADAPTER } from "../src/adapters.js";
import { CockpitSession } from "../src/session.js";
import { TwoButtonWidget, padPoint, type PadRect } from "../src/widgets.js";

const here = path.dirname(fileURLToPath(import.meta.url));
const repoRoot = path.join(here, "..", "..");
const PYTHON = process.env.PYTHON ?? "python3";

let server: ChildProcess;
let wsPort = 0;
let outDir = "";

beforeAll(async () => {
  outDir = mkdtempSync(path.join(tmpdir(), "cockpit-e2e-"));
  server = spawn(
    PYTHON,
    ["-m", "vrflightbench.cli", "serve", "--udp-port", "0", "--ws-port", "0",
     "--kind", "crossing", "--trials", "1", "--out", outDir],
    { cwd: repoRoot, stdio: ["ignore", "pipe", "inherit"] },
  );
  wsPort = await new Promise<number>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server did not start")), 15_000);
    server.stdout!.on("data", (chunk: Buffer) => {
      const match = /ws=(\d+)/.exec(chunk.toString());
      if (match) {
        clearTimeout(timer);
        resolve(Number(match[1]));
      }
    });
    server.on("exit", (code) => reject(new Error(`server exited early (${code})`)));
  });
});

afterAll(async () => {
  if (server && server.exitCode === null) {
    server.kill("SIGTERM");
    await new Promise((resolve) => server.on("exit", resolve));
  }
  rmSync(outDir, { recursive: true, force: true });
});

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

async function waitFor(predicate: () => boolean, what: string, timeoutMs = 20_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) return;
    await sleep(10);
  }
  throw new Error(`timed out waiting for ${what}`);
}

/** The scripted "hand": given the latest telemetry, place the two pad
 * pointers so the widget mapping emits a pursuit command toward the frame. */
function steer(
  widget: TwoButtonWidget, leftRect: PadRect, rightRect: PadRect,
  pos: [number, number, number], target: [number, number, number],
): void {
  const kp = 1.2;
  const sMax = DEFAULT_ADAPTER.sMax;
  const dz = DEFAULT_ADAPTER.deadzone;
  const committed = Math.hypot(
    target[0] - pos[0], target[1] - pos[1], target[2] - pos[2],
  ) <= 0.1 || pos[0] >= target[0];
  const aim: [number, number, number] = committed
    ? [target[0] + 0.5, target[1], target[2]]
    : target;
  const want = aim.map((t, i) => kp * (t - pos[i])) as [number, number, number];
  const norm = Math.hypot(...want);
  if (norm > sMax) {
    for (let i = 0; i < 3; i++) want[i] *= sMax / norm;
  }

  // Invert the radial mapping of the right pad for the horizontal plane.
  const planar = Math.hypot(want[0], want[1]);
  if (planar > 1e-6) {
    const r = dz + (1 - dz) * (Math.min(planar, sMax) / sMax);
    const { x, y } = padPoint(rightRect, (r * want[0]) / planar, (r * want[1]) / planar);
    widget.pointer("right", x, y, true);
  } else {
    widget.pointer("right", 0, 0, false);
  }
  // Invert the vertical axis of the left pad.
  if (Math.abs(want[2]) > 1e-6) {
    const axis = Math.sign(want[2]) * (dz + (1 - dz) * (Math.min(Math.abs(want[2]), sMax) / sMax));
    const { x, y } = padPoint(leftRect, 0, axis);
    widget.pointer("left", x, y, true);
  } else {
    widget.pointer("left", 0, 0, false);
  }
}

describe("cockpit end-to-end trial", () => {
  it("flies a crossing trial via synthetic pointer events and verifies the log", async () => {
    const socket = new WebSocket(`ws://127.0.0.1:${wsPort}`);
    const session = new CockpitSession({ send: (data) => socket.send(data) });
    socket.on("open", () => session.onOpen());
    socket.on("close", () => session.onClose());
    socket.on("message", (data) => session.handleFrame(data.toString(), Date.now()));

    await waitFor(() => session.connected, "websocket open");
    session.sendConfig("P04", "two_button", 12);
    await waitFor(() => session.phase === "configured", "configured checkpoint");
    session.sendStart();
    await waitFor(() => session.phase === "trial_running" && session.task !== null, "trial start");

    const leftRect: PadRect = { left: 0, top: 0, width: 200, height: 200 };
    const rightRect: PadRect = { left: 220, top: 0, width: 200, height: 200 };
    const widget = new TwoButtonWidget(leftRect, rightRect);
    const target = session.task!.target;

    const pilot = setInterval(() => {
      const state = session.lastState;
      if (!state) return;
      steer(widget, leftRect, rightRect, [state.px, state.py, state.pz], target);
      const { v, yawRate } = widget.command();
      session.sendCommand(v, yawRate, Date.now());
    }, 20);

    try {
      await waitFor(() => session.overlay !== null, "completion message", 30_000);
    } finally {
      clearInterval(pilot);
    }
    expect(session.overlay).toContain("Target reached");

    session.sendStop();
    await waitFor(() => session.phase === "trial_done", "trial_done checkpoint");
    socket.close();

    // The log the server wrote must regenerate bit-exactly.
    const verify = spawnSync(
      PYTHON, ["-m", "vrflightbench.cli", "replay", "--logs", outDir, "--verify"],
      { cwd: repoRoot, encoding: "utf-8" },
    );
    expect(verify.status, verify.stdout + verify.stderr).toBe(0);
    expect(verify.stdout).toContain("OK");
    expect(verify.stdout).toContain("crossing-two_button");
  });
});
