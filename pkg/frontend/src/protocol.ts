// Wire protocol for the teleop service: JSON command envelopes out,
// a fixed 1020-byte little-endian binary state packet in.
//
// Packet layout:
//   f64      timestamp (s)
//   f32[6]   commanded pose (x, y, depth, rx, ry, rz)
//   f32[120] force field, kPa, row-major 12x10
//   f32[120] deformation field, mm, row-major 12x10
//   f32[5]   features: centroid x, centroid y, asymmetry,
//            max force (N), max deformation (mm)
//   u8       preset index (0 Low, 1 Mid, 2 High)
//   u8       cue bits (1 force, 2 deformation, 4 workspace)
//   u16      frames recorded (saturates at 65535)
//   u32      last accepted command sequence number

export const PACKET_LEN = 1020;
export const GRID_W = 12;
export const GRID_H = 10;
export const PRESETS = ["Low", "Mid", "High"] as const;

export const CUE_FORCE = 1;
export const CUE_DEFORM = 2;
export const CUE_WORKSPACE = 4;

export interface StatePacket {
  timestamp: number;
  pose: Float32Array;          // 6
  force: Float32Array;         // 120, kPa
  deform: Float32Array;        // 120, mm
  features: {
    centroid: [number, number];
    asymmetry: number;
    maxForce: number;
    maxDeformation: number;
  };
  preset: (typeof PRESETS)[number];
  cueForce: boolean;
  cueDeform: boolean;
  cueWorkspace: boolean;
  framesRecorded: number;
  lastSeq: number;
}

export function decodePacket(buf: ArrayBuffer, offset = 0): StatePacket {
  if (buf.byteLength - offset < PACKET_LEN) {
    throw new Error(
      `packet too short: ${buf.byteLength - offset} < ${PACKET_LEN}`,
    );
  }
  const view = new DataView(buf, offset, PACKET_LEN);
  let o = 0;
  const timestamp = view.getFloat64(o, true);
  o += 8;
  const readF32 = (n: number) => {
    const out = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      out[i] = view.getFloat32(o, true);
      o += 4;
    }
    return out;
  };
  const pose = readF32(6);
  const force = readF32(GRID_W * GRID_H);
  const deform = readF32(GRID_W * GRID_H);
  const feats = readF32(5);
  const presetIdx = view.getUint8(o);
  o += 1;
  const cues = view.getUint8(o);
  o += 1;
  const framesRecorded = view.getUint16(o, true);
  o += 2;
  const lastSeq = view.getUint32(o, true);
  if (presetIdx > 2) throw new Error(`bad preset index ${presetIdx}`);
  return {
    timestamp,
    pose,
    force,
    deform,
    features: {
      centroid: [feats[0], feats[1]],
      asymmetry: feats[2],
      maxForce: feats[3],
      maxDeformation: feats[4],
    },
    preset: PRESETS[presetIdx],
    cueForce: (cues & CUE_FORCE) !== 0,
    cueDeform: (cues & CUE_DEFORM) !== 0,
    cueWorkspace: (cues & CUE_WORKSPACE) !== 0,
    framesRecorded,
    lastSeq,
  };
}

// -- outgoing JSON envelopes --------------------------------------------------

export interface CommandPose {
  type: "command_pose";
  rel: number[]; // 6 relative pose components, pre-scaling
  seq: number;
}

export function commandPose(rel: number[], seq: number): CommandPose {
  if (rel.length !== 6) throw new Error("relative pose needs 6 components");
  return { type: "command_pose", rel, seq };
}

export function setPreset(name: (typeof PRESETS)[number]) {
  return { type: "set_preset", name };
}

export function recordStart() {
  return { type: "record_start" };
}

export function recordStop() {
  return { type: "record_stop" };
}

export function reZero() {
  return { type: "re_zero" };
}

export interface Hello {
  type: "hello";
  session_id: string;
  task_id: string;
  grid_w: number;
  grid_h: number;
  motion_scale: number;
  cue_force_n: number;
  cue_deform_mm: number;
  stream_hz: number;
  packet_len: number;
}

export function parseHello(text: string): Hello {
  const msg = JSON.parse(text);
  if (msg.type !== "hello") throw new Error(`expected hello, got ${msg.type}`);
  if (msg.packet_len !== PACKET_LEN) {
    throw new Error(`packet length mismatch: ${msg.packet_len}`);
  }
  return msg as Hello;
}
