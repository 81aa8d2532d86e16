/**
 * Keyboard state to wheel commands, with the dead-man safety stop.
 *
 * The tracker is sampled on a fixed 50 ms cadence (the bridge control
 * period). While any drive key is held it emits a ctrl message every tick.
 * Once input is absent for more than 200 ms, it emits a single zero ctrl
 * (the safety stop) and then stays silent until input resumes.
 */

import { type CtrlMsg, clampWheel, makeCtrl } from "./protocol.js";

export const TICK_MS = 50;
export const SAFETY_STOP_MS = 200;

export interface DriveKeys {
  forward: boolean;
  back: boolean;
  left: boolean;
  right: boolean;
}

export const NO_KEYS: DriveKeys = {
  forward: false,
  back: false,
  left: false,
  right: false,
};

const THROTTLE_GAIN = 0.8;
const STEER_GAIN = 0.5;

export function anyKey(keys: DriveKeys): boolean {
  return keys.forward || keys.back || keys.left || keys.right;
}

/** Differential mix: steer adds to the left wheel, subtracts from the right. */
export function keysToWheels(keys: DriveKeys): { al: number; ar: number } {
  const throttle = (keys.forward ? 1 : 0) - (keys.back ? 1 : 0);
  const steer = (keys.right ? 1 : 0) - (keys.left ? 1 : 0);
  const f = throttle * THROTTLE_GAIN;
  const u = steer * STEER_GAIN;
  return { al: clampWheel(f + u), ar: clampWheel(f - u) };
}

export class InputTracker {
  private keys: DriveKeys = { ...NO_KEYS };
  private lastActiveMs: number | null = null;
  // True until the first input arrives: there is nothing to stop yet.
  private stopSent = true;

  /** Apply a key state change (keydown/keyup) at the given time. */
  update(change: Partial<DriveKeys>, nowMs: number): void {
    this.keys = { ...this.keys, ...change };
    if (anyKey(this.keys)) {
      this.lastActiveMs = nowMs;
      this.stopSent = false;
    }
  }

  /** Sample once per cadence tick; returns the message to send, if any. */
  tick(nowMs: number): CtrlMsg | null {
    if (anyKey(this.keys)) {
      this.lastActiveMs = nowMs;
      this.stopSent = false;
      const { al, ar } = keysToWheels(this.keys);
      return makeCtrl(al, ar);
    }
    if (
      !this.stopSent &&
      this.lastActiveMs !== null &&
      nowMs - this.lastActiveMs > SAFETY_STOP_MS
    ) {
      this.stopSent = true;
      return makeCtrl(0, 0);
    }
    return null;
  }
}
