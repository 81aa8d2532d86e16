/**
 * Switch state shown in the UI comes only from server telemetry.
 *
 * Clicking a switch produces a toggle request aimed at the opposite of the
 * last confirmed state; the displayed value never flips until the server
 * reports the change back. Before the first telemetry there is no confirmed
 * state, so there is nothing safe to request or display.
 */

import {
  type Telemetry,
  type ToggleMsg,
  type ToggleWhat,
  makeToggle,
} from "./protocol.js";

type Confirmed = Record<ToggleWhat, boolean>;

export class ToggleController {
  private confirmed: Confirmed | null = null;

  request(what: ToggleWhat): ToggleMsg | null {
    if (this.confirmed === null) return null;
    return makeToggle(what, !this.confirmed[what]);
  }

  onTelemetry(t: Telemetry): void {
    this.confirmed = { logging: t.logging, noise: t.noise, policy: t.policy };
  }

  displayed(what: ToggleWhat): boolean | null {
    return this.confirmed === null ? null : this.confirmed[what];
  }
}
