import { describe, expect, it } from "vitest";

import {
  InputTracker,
  SAFETY_STOP_MS,
  TICK_MS,
  keysToWheels,
} from "../src/input.js";
import type { CtrlMsg } from "../src/protocol.js";

function collectTicks(
  tracker: InputTracker,
  startMs: number,
  endMs: number,
): Array<{ at: number; msg: CtrlMsg | null }> {
  const out = [];
  for (let t = startMs; t <= endMs; t += TICK_MS) {
    out.push({ at: t, msg: tracker.tick(t) });
  }
  return out;
}

const isStop = (m: CtrlMsg | null) => m !== null && m.al === 0 && m.ar === 0;

describe("drive key mixing", () => {
  it("forward drives both wheels equally", () => {
    expect(keysToWheels({ forward: true, back: false, left: false, right: false }))
      .toEqual({ al: 0.8, ar: 0.8 });
  });

  it("steering splits the wheels and saturates at the clamp", () => {
    const turn = keysToWheels({ forward: true, back: false, left: false, right: true });
    expect(turn.al).toBe(1);
    expect(turn.ar).toBeCloseTo(0.3, 12);
    const pivot = keysToWheels({ forward: false, back: false, left: true, right: false });
    expect(pivot).toEqual({ al: -0.5, ar: 0.5 });
  });

  it("opposing keys cancel", () => {
    expect(keysToWheels({ forward: true, back: true, left: true, right: true }))
      .toEqual({ al: 0, ar: 0 });
  });
});

describe("input cadence", () => {
  it("emits a ctrl message on every tick while a key is held", () => {
    const tracker = new InputTracker();
    tracker.update({ forward: true }, 0);
    const ticks = collectTicks(tracker, 0, 500);
    expect(ticks).toHaveLength(11);
    for (const { msg } of ticks) {
      expect(msg).toEqual({ t: "ctrl", al: 0.8, ar: 0.8 });
    }
  });

  it("is silent before any input ever arrives", () => {
    const tracker = new InputTracker();
    for (const { msg } of collectTicks(tracker, 0, 1000)) {
      expect(msg).toBeNull();
    }
  });

  it("held opposing keys still count as input (zero command, no stop)", () => {
    const tracker = new InputTracker();
    tracker.update({ forward: true, back: true }, 0);
    const ticks = collectTicks(tracker, 0, 400);
    for (const { msg } of ticks) {
      expect(msg).toEqual({ t: "ctrl", al: 0, ar: 0 });
    }
  });
});

describe("safety stop", () => {
  it("fires exactly once, strictly after the absence threshold", () => {
    const tracker = new InputTracker();
    tracker.update({ forward: true }, 0);
    tracker.tick(0);
    tracker.tick(50);
    tracker.update({ forward: false }, 60);

    // Last input activity was the tick at 50 ms. 250 ms is the first tick
    // strictly beyond the 200 ms absence threshold.
    expect(tracker.tick(100)).toBeNull();
    expect(tracker.tick(150)).toBeNull();
    expect(tracker.tick(200)).toBeNull();
    expect(tracker.tick(250)).toBeNull(); // exactly 200 ms of absence: not yet
    const stop = tracker.tick(300);
    expect(isStop(stop)).toBe(true);
    for (let t = 350; t <= 2000; t += TICK_MS) {
      expect(tracker.tick(t)).toBeNull();
    }
  });

  it("boundary: absence of exactly SAFETY_STOP_MS does not trigger", () => {
    const tracker = new InputTracker();
    tracker.update({ forward: true }, 0);
    tracker.tick(0);
    tracker.update({ forward: false }, 10);
    expect(tracker.tick(SAFETY_STOP_MS)).toBeNull();
    expect(isStop(tracker.tick(SAFETY_STOP_MS + 0.5))).toBe(true);
  });

  it("re-arms after input resumes: one stop per release", () => {
    const tracker = new InputTracker();
    const stops: number[] = [];
    const drive = (from: number, to: number) => {
      tracker.update({ forward: true }, from);
      for (let t = from; t < to; t += TICK_MS) {
        if (isStop(tracker.tick(t))) stops.push(t);
      }
      tracker.update({ forward: false }, to);
    };
    const coast = (from: number, to: number) => {
      for (let t = from; t < to; t += TICK_MS) {
        if (isStop(tracker.tick(t))) stops.push(t);
      }
    };
    drive(0, 500);
    coast(500, 1500);
    drive(1500, 2000);
    coast(2000, 3000);
    // Last active ticks were at 450 and 1950; the first tick strictly more
    // than 200 ms later falls at 700 and 2200.
    expect(stops).toEqual([700, 2200]);
  });

  it("a keydown between ticks refreshes the activity clock", () => {
    const tracker = new InputTracker();
    tracker.update({ forward: true }, 0);
    tracker.tick(0);
    tracker.update({ forward: false }, 20);
    // New input right before the stop would have fired.
    tracker.update({ back: true }, 190);
    const msg = tracker.tick(200);
    expect(msg).toEqual({ t: "ctrl", al: -0.8, ar: -0.8 });
    tracker.update({ back: false }, 210);
    expect(tracker.tick(250)).toBeNull();
    expect(tracker.tick(300)).toBeNull();
    expect(tracker.tick(350)).toBeNull();
    expect(tracker.tick(400)).toBeNull(); // 200 ms exactly since tick at 200
    expect(isStop(tracker.tick(450))).toBe(true);
  });
});
