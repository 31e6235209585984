// Browser entry point: wires the websocket, the canvas scene, the controller
// widgets, and the session buttons together.

import { ControllerMode, STREAM_PORT } from "./protocol.js";
import { CockpitSession } from "./session.js";
import { lerpPosition, renderScene, type Point3 } from "./scene.js";
import { OneHandedWidget, TwoButtonWidget, defaultPadRects } from "./widgets.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function wsUrl(): string {
  const params = new URLSearchParams(window.location.search);
  const port = params.get("ws") ?? String(STREAM_PORT);
  return `ws://${window.location.hostname || "127.0.0.1"}:${port}`;
}

function main(): void {
  const canvas = el<HTMLCanvasElement>("scene");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d context unavailable");

  const statusEl = el<HTMLDivElement>("status");
  const overlayEl = el<HTMLDivElement>("overlay");
  const bannerEl = el<HTMLDivElement>("stale-banner");
  const modeSel = el<HTMLSelectElement>("mode");
  const pressureSel = el<HTMLSelectElement>("pressure-source");
  const slider = el<HTMLInputElement>("force-slider");
  const participantEl = el<HTMLInputElement>("participant");
  const seedEl = el<HTMLInputElement>("seed");
  const padsEl = el<HTMLDivElement>("pads");

  const socket = new WebSocket(wsUrl());
  const session = new CockpitSession({ send: (d) => socket.send(d) });
  socket.onopen = () => session.onOpen();
  socket.onclose = () => session.onClose();
  socket.onmessage = (ev) => session.handleFrame(String(ev.data), performance.now());

  const rects = defaultPadRects(padsEl.clientWidth || 640, padsEl.clientHeight || 240);
  const twoButton = new TwoButtonWidget(rects.left, rects.right);
  const oneHanded = new OneHandedWidget(rects.mono);

  const activeMode = (): ControllerMode => (modeSel.value as ControllerMode) || "two_button";

  padsEl.addEventListener("pointerdown", (ev) => padsEl.setPointerCapture(ev.pointerId));
  const onPointer = (ev: PointerEvent, active: boolean): void => {
    const rect = padsEl.getBoundingClientRect();
    const x = ev.clientX - rect.left;
    const y = ev.clientY - rect.top;
    if (activeMode() === "two_button") {
      const mid = rect.width / 2;
      twoButton.pointer(x < mid ? "left" : "right", x, y, active);
    } else {
      oneHanded.pressureSource = pressureSel.value as "pointer-radius" | "slider";
      oneHanded.sliderValue = Number(slider.value) / 100;
      oneHanded.pointer(x, y, active);
    }
  };
  padsEl.addEventListener("pointerdown", (ev) => onPointer(ev, true));
  padsEl.addEventListener("pointermove", (ev) => {
    if (ev.buttons !== 0) onPointer(ev, true);
  });
  padsEl.addEventListener("pointerup", (ev) => onPointer(ev, false));
  padsEl.addEventListener("pointercancel", () => {
    twoButton.release();
    oneHanded.pointer(0, 0, false);
  });

  el<HTMLButtonElement>("config").onclick = () =>
    session.sendConfig(participantEl.value || "P00", activeMode(), Number(seedEl.value) || 0);
  el<HTMLButtonElement>("start").onclick = () => session.sendStart();
  el<HTMLButtonElement>("stop").onclick = () => session.sendStop();
  el<HTMLButtonElement>("mode-toggle").onclick = () => oneHanded.toggleMode();

  window.setInterval(() => {
    const now = performance.now();
    const { v, yawRate } = activeMode() === "two_button"
      ? twoButton.command()
      : oneHanded.command();
    session.sendCommand(v, yawRate, now);
  }, 20);

  const draw = (): void => {
    const now = performance.now();
    let drone: Point3 | null = null;
    if (session.lastState) {
      if (session.prevState) {
        const span = Math.max(now - session.lastStateAtMs, 1);
        drone = lerpPosition(session.prevState, session.lastState, span / 30);
      } else {
        drone = [session.lastState.px, session.lastState.py, session.lastState.pz];
      }
    }
    renderScene(ctx, canvas.width, canvas.height, drone, session.task, session.landmarks);
    statusEl.textContent =
      `${session.connected ? "connected" : "disconnected"} | phase: ${session.phase}` +
      (session.lastError ? ` | ${session.lastError}` : "");
    overlayEl.textContent = session.overlay ?? "";
    overlayEl.style.display = session.overlay ? "block" : "none";
    bannerEl.style.display = session.isStale(now) ? "block" : "none";
    requestAnimationFrame(draw);
  };
  requestAnimationFrame(draw);
}

window.addEventListener("DOMContentLoaded", main);
