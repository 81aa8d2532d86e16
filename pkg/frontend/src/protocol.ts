/**
 * Message layer for the bridge websocket protocol.
 *
 * Mirrors schema/bridge.schema.json: clients emit ctrl / toggle / cmd /
 * telemetry-request objects, the server answers with telemetry and err
 * objects plus binary camera frames (8-byte big-endian frame id followed
 * by a PNG). Constructors here are the only way the UI builds outgoing
 * messages, so schema conformance is enforced at a single choke point.
 */

export type Dir = "left" | "straight" | "right";
export type ToggleWhat = "logging" | "noise" | "policy";
export type Mode = "teleop" | "policy" | "follow";

export interface CtrlMsg {
  readonly t: "ctrl";
  readonly al: number;
  readonly ar: number;
}

export interface ToggleMsg {
  readonly t: "toggle";
  readonly what: ToggleWhat;
  readonly on: boolean;
}

export interface CmdMsg {
  readonly t: "cmd";
  readonly dir: Dir;
}

export interface TelemetryRequestMsg {
  readonly t: "telemetry";
}

export type ClientMsg = CtrlMsg | ToggleMsg | CmdMsg | TelemetryRequestMsg;

export interface Pose {
  readonly x: number;
  readonly y: number;
  readonly heading: number;
}

export interface Telemetry {
  readonly t: "telemetry";
  readonly frame: number;
  readonly time: number;
  readonly mode: Mode;
  readonly pose: Pose;
  readonly battery_mv: number;
  readonly ticks: readonly [number, number];
  readonly sonar_cm: number;
  readonly collisions: number;
  readonly applied: readonly [number, number];
  readonly command: Dir;
  readonly logging: boolean;
  readonly noise: boolean;
  readonly policy: boolean;
  readonly inference_ms: number | null;
  readonly predicted: readonly [number, number] | null;
}

export interface ErrMsg {
  readonly t: "err";
  readonly error: string;
}

export type ServerMsg = Telemetry | ErrMsg;

export interface CameraFrame {
  readonly frameId: number;
  readonly png: Uint8Array;
}

const DIRS: readonly string[] = ["left", "straight", "right"];
const MODES: readonly string[] = ["teleop", "policy", "follow"];

/** Wheel commands live in [-1, 1]; anything non-finite becomes a stop. */
export function clampWheel(v: number): number {
  if (!Number.isFinite(v)) return 0;
  return Math.min(1, Math.max(-1, v));
}

export function makeCtrl(al: number, ar: number): CtrlMsg {
  return { t: "ctrl", al: clampWheel(al), ar: clampWheel(ar) };
}

export function makeToggle(what: ToggleWhat, on: boolean): ToggleMsg {
  return { t: "toggle", what, on: Boolean(on) };
}

export function makeCmd(dir: Dir): CmdMsg {
  return { t: "cmd", dir };
}

export function makeTelemetryRequest(): TelemetryRequestMsg {
  return { t: "telemetry" };
}

function isInt(v: unknown): v is number {
  return typeof v === "number" && Number.isInteger(v);
}

function isNum(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isPair(v: unknown, check: (x: unknown) => boolean): boolean {
  return Array.isArray(v) && v.length === 2 && v.every(check);
}

function isTelemetry(m: Record<string, unknown>): boolean {
  const pose = m.pose as Record<string, unknown> | undefined;
  return (
    m.t === "telemetry" &&
    isInt(m.frame) &&
    (m.frame as number) >= 0 &&
    isNum(m.time) &&
    MODES.includes(m.mode as string) &&
    typeof pose === "object" &&
    pose !== null &&
    isNum(pose.x) &&
    isNum(pose.y) &&
    isNum(pose.heading) &&
    isInt(m.battery_mv) &&
    isPair(m.ticks, isInt) &&
    isInt(m.sonar_cm) &&
    isInt(m.collisions) &&
    isPair(m.applied, isNum) &&
    DIRS.includes(m.command as string) &&
    typeof m.logging === "boolean" &&
    typeof m.noise === "boolean" &&
    typeof m.policy === "boolean" &&
    (m.inference_ms === null || isNum(m.inference_ms)) &&
    (m.predicted === null || isPair(m.predicted, isNum))
  );
}

/** Parse a server text message; null for anything malformed. */
export function parseServerMessage(text: string): ServerMsg | null {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) return null;
  const m = doc as Record<string, unknown>;
  if (m.t === "err" && typeof m.error === "string") {
    return { t: "err", error: m.error };
  }
  if (isTelemetry(m)) {
    return m as unknown as Telemetry;
  }
  return null;
}

/** Split a binary websocket message into frame id and PNG payload. */
export function parseFrameMessage(data: ArrayBuffer): CameraFrame | null {
  if (data.byteLength < 8) return null;
  const view = new DataView(data);
  const frameId = view.getUint32(0) * 2 ** 32 + view.getUint32(4);
  return { frameId, png: new Uint8Array(data.slice(8)) };
}
