// UI-side session state machine. Owns the monotonic command sequence
// counter, tracks the newest state packet, and exposes cue banners that
// follow the newest packet's flags exactly (set when the flag is set,
// cleared when it clears). Transport is injected so tests can drive it
// without a WebSocket.

import {
  StatePacket,
  decodePacket,
  commandPose,
  setPreset,
  recordStart,
  recordStop,
  reZero,
  PRESETS,
} from "./protocol.js";

export type ConnectionStatus = "disconnected" | "connecting" | "connected";

export interface Transport {
  send(json: string): void;
}

export class UiSessionState {
  status: ConnectionStatus = "disconnected";
  latest: StatePacket | null = null;
  errors: string[] = [];
  private seq = 0;
  private transport: Transport | null = null;

  attach(transport: Transport): void {
    this.transport = transport;
    this.status = "connected";
  }

  detach(): void {
    this.transport = null;
    this.status = "disconnected";
  }

  get nextSeq(): number {
    return this.seq + 1;
  }

  get recording(): boolean {
    return this.latest !== null && this.latest.framesRecorded > 0;
  }

  get cueForce(): boolean {
    return this.latest?.cueForce ?? false;
  }
  get cueDeform(): boolean {
    return this.latest?.cueDeform ?? false;
  }
  get cueWorkspace(): boolean {
    return this.latest?.cueWorkspace ?? false;
  }

  // Returns the packet, or null if the bytes were malformed (logged, never thrown).
  onPacket(buf: ArrayBuffer): StatePacket | null {
    try {
      const pkt = decodePacket(buf);
      this.latest = pkt;
      return pkt;
    } catch (err) {
      this.errors.push(String(err));
      return null;
    }
  }

  private send(msg: unknown): boolean {
    if (this.status !== "connected" || this.transport === null) {
      return false;
    }
    this.transport.send(JSON.stringify(msg));
    return true;
  }

  // Zero motion sends nothing; the sequence number only advances when a
  // command actually goes out.
  sendMotion(rel: number[]): boolean {
    if (rel.every((v) => v === 0)) return false;
    if (this.status !== "connected") return false;
    const msg = commandPose(rel, this.seq + 1);
    if (this.send(msg)) {
      this.seq += 1;
      return true;
    }
    return false;
  }

  sendPreset(name: (typeof PRESETS)[number]): boolean {
    return this.send(setPreset(name));
  }

  sendRecordStart(): boolean {
    return this.send(recordStart());
  }

  sendRecordStop(): boolean {
    return this.send(recordStop());
  }

  sendReZero(): boolean {
    return this.send(reZero());
  }
}
