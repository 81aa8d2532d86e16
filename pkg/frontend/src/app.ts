/**
 * DOM wiring for the teleoperation panel. All protocol behaviour lives in
 * client.ts / input.ts / toggles.ts; this file only binds browser events
 * and paints state.
 */

import { BridgeClient } from "./client.js";
import { TICK_MS, type DriveKeys } from "./input.js";
import type { Dir, Telemetry, ToggleWhat } from "./protocol.js";

const KEYMAP: Record<string, keyof DriveKeys> = {
  KeyW: "forward",
  ArrowUp: "forward",
  KeyS: "back",
  ArrowDown: "back",
  KeyA: "left",
  ArrowLeft: "left",
  KeyD: "right",
  ArrowRight: "right",
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function fmt(v: number, digits = 2): string {
  return v.toFixed(digits);
}

function paintTelemetry(t: Telemetry): void {
  el("mode").textContent = t.mode;
  el("frame").textContent = String(t.frame);
  el("sim-time").textContent = `${fmt(t.time, 1)} s`;
  el("pose").textContent =
    `x ${fmt(t.pose.x)}  y ${fmt(t.pose.y)}  θ ${fmt(t.pose.heading)}`;
  el("battery").textContent = `${t.battery_mv} mV`;
  el("sonar").textContent = `${t.sonar_cm} cm`;
  el("collisions").textContent = String(t.collisions);
  el("applied").textContent = `${fmt(t.applied[0])} / ${fmt(t.applied[1])}`;
  el("inference").textContent =
    t.inference_ms === null ? "—" : `${fmt(t.inference_ms, 1)} ms`;
  for (const button of document.querySelectorAll<HTMLButtonElement>("[data-dir]")) {
    button.classList.toggle("active", button.dataset.dir === t.command);
  }
}

function paintToggles(client: BridgeClient): void {
  for (const button of document.querySelectorAll<HTMLButtonElement>("[data-what]")) {
    const what = button.dataset.what as ToggleWhat;
    const state = client.toggles.displayed(what);
    button.classList.toggle("on", state === true);
    button.classList.toggle("unknown", state === null);
    button.textContent = `${what}: ${state === null ? "…" : state ? "on" : "off"}`;
  }
}

function main(): void {
  const status = el("status");
  const camera = el<HTMLImageElement>("camera");
  let frameUrl: string | null = null;

  const ws = new WebSocket(`ws://${location.host}/ws`);
  ws.binaryType = "arraybuffer";

  const client = new BridgeClient((data) => ws.send(data), {
    onTelemetry: (t) => {
      paintTelemetry(t);
      paintToggles(client);
    },
    onError: (e) => {
      status.textContent = `error: ${e.error}`;
    },
    onFrame: (frame) => {
      const url = URL.createObjectURL(
        new Blob([frame.png.slice().buffer], { type: "image/png" }),
      );
      camera.src = url;
      if (frameUrl) URL.revokeObjectURL(frameUrl);
      frameUrl = url;
    },
  });

  ws.onopen = () => {
    status.textContent = "connected";
    client.requestTelemetry();
  };
  ws.onclose = () => {
    status.textContent = "disconnected";
  };
  ws.onmessage = (ev: MessageEvent) => {
    if (typeof ev.data === "string") client.handleText(ev.data);
    else client.handleBinary(ev.data as ArrayBuffer);
  };

  document.addEventListener("keydown", (ev) => {
    const key = KEYMAP[ev.code];
    if (!key || ev.repeat) return;
    ev.preventDefault();
    client.tracker.update({ [key]: true }, performance.now());
  });
  document.addEventListener("keyup", (ev) => {
    const key = KEYMAP[ev.code];
    if (!key) return;
    ev.preventDefault();
    client.tracker.update({ [key]: false }, performance.now());
  });

  for (const button of document.querySelectorAll<HTMLButtonElement>("[data-dir]")) {
    button.addEventListener("click", () =>
      client.setCommand(button.dataset.dir as Dir),
    );
  }
  for (const button of document.querySelectorAll<HTMLButtonElement>("[data-what]")) {
    button.addEventListener("click", () =>
      client.requestToggle(button.dataset.what as ToggleWhat),
    );
  }

  window.setInterval(() => client.tickInput(performance.now()), TICK_MS);
}

main();
