/**
 * Transport-agnostic bridge client: the DOM layer (or a test) feeds raw
 * websocket payloads in and provides the send function; everything else —
 * parsing, input cadence, toggle bookkeeping — lives here.
 */

import { InputTracker } from "./input.js";
import {
  type CameraFrame,
  type ClientMsg,
  type Dir,
  type ErrMsg,
  type Telemetry,
  type ToggleWhat,
  makeCmd,
  makeTelemetryRequest,
  parseFrameMessage,
  parseServerMessage,
} from "./protocol.js";
import { ToggleController } from "./toggles.js";

export interface BridgeEvents {
  onTelemetry?: (t: Telemetry) => void;
  onError?: (e: ErrMsg) => void;
  onFrame?: (f: CameraFrame) => void;
  /** A server text message that does not match the protocol. */
  onProtocolViolation?: (raw: string) => void;
}

export class BridgeClient {
  readonly tracker = new InputTracker();
  readonly toggles = new ToggleController();
  latest: Telemetry | null = null;

  constructor(
    private readonly sendRaw: (data: string) => void,
    private readonly events: BridgeEvents = {},
  ) {}

  send(msg: ClientMsg): void {
    this.sendRaw(JSON.stringify(msg));
  }

  /** Sample the input tracker; forwards its message when one is due. */
  tickInput(nowMs: number): ClientMsg | null {
    const msg = this.tracker.tick(nowMs);
    if (msg) this.send(msg);
    return msg;
  }

  /** Ask the server to flip a switch; the UI state waits for telemetry. */
  requestToggle(what: ToggleWhat): ClientMsg | null {
    const msg = this.toggles.request(what);
    if (msg) this.send(msg);
    return msg;
  }

  setCommand(dir: Dir): void {
    this.send(makeCmd(dir));
  }

  requestTelemetry(): void {
    this.send(makeTelemetryRequest());
  }

  handleText(text: string): void {
    const msg = parseServerMessage(text);
    if (msg === null) {
      this.events.onProtocolViolation?.(text);
      return;
    }
    if (msg.t === "err") {
      this.events.onError?.(msg);
      return;
    }
    this.latest = msg;
    this.toggles.onTelemetry(msg);
    this.events.onTelemetry?.(msg);
  }

  handleBinary(data: ArrayBuffer): void {
    const frame = parseFrameMessage(data);
    if (frame) this.events.onFrame?.(frame);
  }
}
