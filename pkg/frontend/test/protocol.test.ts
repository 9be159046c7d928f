import { describe, it, expect } from "vitest";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import {
  decodePacket,
  commandPose,
  parseHello,
  PACKET_LEN,
  CUE_FORCE,
  CUE_DEFORM,
  CUE_WORKSPACE,
} from "../src/protocol.js";

function loadPackets(): ArrayBuffer[] {
  const raw = readFileSync(
    fileURLToPath(new URL("./fixtures/packets.bin", import.meta.url)),
  );
  const buf = raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength);
  expect(buf.byteLength % PACKET_LEN).toBe(0);
  const out: ArrayBuffer[] = [];
  for (let o = 0; o < buf.byteLength; o += PACKET_LEN) {
    out.push(buf.slice(o, o + PACKET_LEN));
  }
  return out;
}

function loadExpected(): any[] {
  return JSON.parse(
    readFileSync(
      fileURLToPath(new URL("./fixtures/expected.json", import.meta.url)),
      "utf8",
    ),
  );
}

// Packet fields are f32 on the wire; the reference values were computed in f64.
const F32_REL = 1e-5;
function closeF32(a: number, b: number) {
  expect(Math.abs(a - b)).toBeLessThanOrEqual(F32_REL * Math.max(1, Math.abs(b)));
}

describe("decodePacket against recorded service output", () => {
  const packets = loadPackets();
  const expected = loadExpected();

  it("fixture has one expected record per packet", () => {
    expect(packets.length).toBe(expected.length);
  });

  it("decodes every field to the recorded reference values", () => {
    for (let i = 0; i < packets.length; i++) {
      const pkt = decodePacket(packets[i]);
      const exp = expected[i];
      expect(pkt.timestamp).toBeCloseTo(exp.timestamp, 12);
      for (let j = 0; j < 6; j++) closeF32(pkt.pose[j], exp.pose[j]);
      expect(pkt.preset).toBe(exp.preset);
      expect(pkt.cueForce).toBe(exp.cue_force);
      expect(pkt.cueDeform).toBe(exp.cue_deform);
      expect(pkt.cueWorkspace).toBe(exp.cue_workspace);
      expect(pkt.framesRecorded).toBe(exp.frames_recorded);
      expect(pkt.lastSeq).toBe(exp.last_seq);
      closeF32(pkt.features.centroid[0], exp.force_centroid[0]);
      closeF32(pkt.features.centroid[1], exp.force_centroid[1]);
      closeF32(pkt.features.asymmetry, exp.asymmetry);
      closeF32(pkt.features.maxForce, exp.max_force);
      closeF32(pkt.features.maxDeformation, exp.max_deformation);
    }
  });

  it("field maxima match the decoded force grid", () => {
    for (let i = 0; i < packets.length; i++) {
      const pkt = decodePacket(packets[i]);
      const gridMax = Math.max(...pkt.force);
      closeF32(gridMax, expected[i].force_max_kpa);
    }
  });

  it("timestamps and sequence numbers increase monotonically", () => {
    let prevT = -Infinity;
    let prevSeq = -1;
    for (const raw of packets) {
      const pkt = decodePacket(raw);
      expect(pkt.timestamp).toBeGreaterThan(prevT);
      expect(pkt.lastSeq).toBeGreaterThan(prevSeq);
      prevT = pkt.timestamp;
      prevSeq = pkt.lastSeq;
    }
  });

  it("rejects short buffers", () => {
    expect(() => decodePacket(packets[0].slice(0, PACKET_LEN - 1))).toThrow(
      /too short/,
    );
  });

  it("rejects an out-of-range preset index", () => {
    const copy = packets[0].slice(0);
    new DataView(copy).setUint8(1012, 7);
    expect(() => decodePacket(copy)).toThrow(/preset/);
  });
});

describe("cue bit constants", () => {
  it("are the documented powers of two", () => {
    expect(CUE_FORCE).toBe(1);
    expect(CUE_DEFORM).toBe(2);
    expect(CUE_WORKSPACE).toBe(4);
  });
});

describe("outgoing envelopes", () => {
  it("command_pose carries rel and seq", () => {
    const msg = commandPose([0.001, 0, 0, 0, 0, 0], 42);
    expect(msg).toEqual({ type: "command_pose", rel: [0.001, 0, 0, 0, 0, 0], seq: 42 });
  });

  it("command_pose rejects wrong-length vectors", () => {
    expect(() => commandPose([1, 2, 3], 1)).toThrow(/6 components/);
  });

  it("parseHello validates type and packet length", () => {
    const hello = {
      type: "hello",
      session_id: "s",
      task_id: "PressHold",
      grid_w: 12,
      grid_h: 10,
      motion_scale: 1.5,
      cue_force_n: 2.0,
      cue_deform_mm: 1.0,
      stream_hz: 10,
      packet_len: PACKET_LEN,
    };
    expect(parseHello(JSON.stringify(hello)).grid_w).toBe(12);
    expect(() =>
      parseHello(JSON.stringify({ ...hello, packet_len: 900 })),
    ).toThrow(/packet length/);
    expect(() =>
      parseHello(JSON.stringify({ ...hello, type: "goodbye" })),
    ).toThrow(/hello/);
  });
});
