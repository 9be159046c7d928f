"""Teleoperation session service.

A TeleopSession drives the pad simulator directly from operator pose
commands: relative motion is scaled (default 1:1.5), mapped to a contact
indentation depth, safety-clamped, and applied at the 100 Hz plant rate.
State packets carry the tactile fields plus cue flags and stream at a
fixed cadence (default 60 Hz) over a websocket with JSON text envelopes
for commands and binary frames for state.

Binary state packet layout (little-endian):

    offset  type        field
    0       f64         timestamp (s)
    8       f32[6]      end-effector pose (x, y, depth, rx, ry, rz)
    32      f32[W*H]    force field (kPa, row-major, W=12, H=10)
    512     f32[W*H]    deformation field (mm)
    992     f32[5]      features (centroid_i, centroid_j, asymmetry,
                        max_force_kPa, max_deform_mm)
    1012    u8          active preset (0=Low, 1=Mid, 2=High)
    1013    u8          cue bits (1=force, 2=deformation, 4=workspace)
    1014    u16         frames recorded so far
    1016    u32         last applied command seq

Text envelopes are JSON objects {"type": ..., "seq": ..., ...}:
commands command_pose {"rel": [6]}, set_preset {"name": ...},
record_start, record_stop, re_zero; server messages hello (config) and
cue (flag change notice).
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import dataset, sim, tactile
from .config import material_hash
from .control import PRESETS, SafetyLimits, safety_clamp
from .errors import ConfigurationError, UsageError
from .sim import ContactCommand, MaterialParams
from .tasks import CYCLES_PER_FRAME, GRID_H, GRID_SPACING, GRID_W, _centered_mask

MOTION_SCALE = 1.5
STREAM_HZ = 60.0
CYCLE_DT = 0.01
PACKET_LEN = 1020
_PRESET_INDEX = {"Low": 0, "Mid": 1, "High": 2}

CUE_FORCE = 1
CUE_DEFORM = 2
CUE_WORKSPACE = 4


@dataclass
class StatePacket:
    timestamp: float
    pose: np.ndarray
    force: np.ndarray       # (W, H) kPa
    deform: np.ndarray      # (W, H) mm
    features: tactile.FieldFeatures
    preset: str
    cue_force: bool
    cue_deform: bool
    cue_workspace: bool
    frames_recorded: int
    last_seq: int

    def pack(self) -> bytes:
        cues = (CUE_FORCE * self.cue_force | CUE_DEFORM * self.cue_deform
                | CUE_WORKSPACE * self.cue_workspace)
        feats = np.array([self.features.force_centroid[0],
                          self.features.force_centroid[1],
                          self.features.asymmetry,
                          self.features.max_force,
                          self.features.max_deformation], dtype="<f4")
        return (struct.pack("<d", self.timestamp)
                + np.asarray(self.pose, dtype="<f4").tobytes()
                + self.force.astype("<f4").tobytes()
                + self.deform.astype("<f4").tobytes()
                + feats.tobytes()
                + struct.pack("<BBHI", _PRESET_INDEX[self.preset], cues,
                              min(self.frames_recorded, 0xFFFF),
                              self.last_seq))


class TeleopSession:
    """One operator, one pad, one live plant. Transport-agnostic."""

    def __init__(self, task_id: str = "PressHold",
                 motion_scale: float = MOTION_SCALE,
                 cue_force_n: float = 10.0, cue_deform_mm: float = 10.0,
                 material: MaterialParams | None = None,
                 limits: SafetyLimits = SafetyLimits(),
                 sensor_seed: int = 0, session_id: str = "s0"):
        if motion_scale <= 0:
            raise ConfigurationError("motion scale must be positive")
        self.session_id = session_id
        self.task_id = task_id
        self.motion_scale = motion_scale
        self.cue_force_n = cue_force_n
        self.cue_deform_mm = cue_deform_mm
        self.material = material if material is not None else MaterialParams()
        self.limits = limits
        self.mask = _centered_mask(8, 6)
        self.state = sim.zero_state(GRID_W, GRID_H, GRID_SPACING)
        self.sensor = tactile.TactileSensor(seed=sensor_seed)
        self.pose = np.zeros(6)          # x, y, depth, rx, ry, rz
        self.preset = "Mid"
        self.last_seq = -1
        self.dropped = 0
        self.t = 0.0
        self.cue_force = False
        self.cue_deform = False
        self.cue_workspace = False
        self.recording = False
        self._recorder = None
        self._episode = None
        self._depths: list[np.ndarray] = []
        self._frames: list[dataset.Frame] = []
        self._last_force = None
        self._last_deform = None
        self._cycle_in_frame = 0

    # -- commands -------------------------------------------------------------

    def command_pose(self, rel, seq: int) -> dict:
        """Apply a relative pose command; stale sequence numbers drop."""
        rel = np.asarray(rel, dtype=float)
        if rel.shape != (6,):
            raise UsageError("relative pose must have 6 components")
        if seq <= self.last_seq:
            self.dropped += 1
            return {"applied": False, "reason": "stale", "seq": seq}
        self.last_seq = seq
        self.pose = self.pose + self.motion_scale * rel
        clamped = False
        if self.pose[2] < 0.0:
            self.pose[2] = 0.0
            clamped = True
        if self.pose[2] > self.limits.max_depth:
            self.pose[2] = self.limits.max_depth
            clamped = True
        self.cue_workspace = clamped
        return {"applied": True, "clamped": clamped, "seq": seq}

    def set_preset(self, name: str) -> dict:
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}")
        self.preset = name
        return {"applied": True, "preset": name}

    def re_zero(self) -> dict:
        """Reset the reference pose to the origin (keyboard 'home')."""
        self.pose = np.zeros(6)
        self.cue_workspace = False
        return {"applied": True}

    # -- recording --------------------------------------------------------------

    def start_recording(self) -> dict:
        if not self.recording:
            self.recording = True
            self._frames = []
            self._depths = []
            self._cycle_in_frame = 0
            self._episode = None
        return {"recording": True}

    def stop_recording(self):
        """Finalize and return the episode; a second stop returns the same."""
        if self.recording:
            self.recording = False
            extra = {"highrate": 1, "noise_rms": self.sensor.noise_rms,
                     "sensor_seed": self.sensor.seed,
                     "motion_scale": self.motion_scale}
            for k, v in zip(("k_e", "k_v", "k_m", "tau", "D"),
                            self.material.as_tuple()):
                extra[f"material.{k}"] = repr(v)
            idx = np.argwhere(self.mask)
            extra["mask_bbox"] = ",".join(map(str, (
                idx[:, 0].min(), idx[:, 0].max() + 1,
                idx[:, 1].min(), idx[:, 1].max() + 1)))
            header = dataset.make_header(
                self.task_id, arm_count=1, grid_w=GRID_W, grid_h=GRID_H,
                material_hash=material_hash(self.material), seed=0, **extra)
            self._episode = dataset.Episode(header=header,
                                            frames=list(self._frames))
        return self._episode

    @property
    def frames_recorded(self) -> int:
        return len(self._frames)

    # -- plant -------------------------------------------------------------------

    def cycle(self):
        """One 100 Hz plant step under the current commanded pose."""
        self._last_force, self._last_deform = \
            self.sensor.read(self.state, self.material, self.t)
        ind = np.where(self.mask, self.pose[2], 0.0)
        cmd = ContactCommand(indentation=ind, mask=self.mask)
        cmd, violations = safety_clamp(cmd, self.limits, self.material.k_e,
                                       self.state.h)
        predicted = self.material.k_e * self.pose[2] \
            * float(self.mask.sum()) * self.state.h ** 2
        measured = sim.contact_force(self.state, self.material)
        self.cue_force = (measured > self.cue_force_n
                          or predicted > self.cue_force_n)
        self.cue_deform = float(self._last_deform.displacements.max()) \
            > self.cue_deform_mm
        if violations:
            self.cue_workspace = True
        self.state = sim.step(self.state, cmd, self.material, CYCLE_DT)
        self.t += CYCLE_DT
        if self.recording:
            self._record_cycle(cmd)

    def _record_cycle(self, cmd: ContactCommand):
        self._depths.append(cmd.indentation.reshape(-1).copy())
        self._cycle_in_frame += 1
        if self._cycle_in_frame == CYCLES_PER_FRAME:
            action = np.concatenate([self.pose,
                                     np.zeros(13),
                                     PRESETS[self.preset].as_array()])
            self._frames.append(dataset.Frame(
                t=self.t, pose=self.pose.astype(np.float32),
                force=self._last_force.pressures.astype(np.float32),
                deform=self._last_deform.displacements.astype(np.float32),
                action=action.astype(np.float32),
                preset=self.preset, phase="Hold",
                highrate=np.stack(self._depths).astype(np.float64),
                hr_shift=np.zeros(CYCLES_PER_FRAME, dtype=np.int8)))
            self._depths = []
            self._cycle_in_frame = 0

    def state_packet(self) -> StatePacket:
        if self._last_force is None:
            self._last_force, self._last_deform = \
                self.sensor.read(self.state, self.material, self.t)
        feats = tactile.features(self._last_force, self._last_deform)
        return StatePacket(
            timestamp=self.t, pose=self.pose.copy(),
            force=self._last_force.pressures,
            deform=self._last_deform.displacements,
            features=feats, preset=self.preset,
            cue_force=self.cue_force, cue_deform=self.cue_deform,
            cue_workspace=self.cue_workspace,
            frames_recorded=self.frames_recorded,
            last_seq=max(self.last_seq, 0))


def open_session(config: dict | None = None) -> TeleopSession:
    config = config or {}
    return TeleopSession(
        task_id=config.get("task_id", "PressHold"),
        motion_scale=float(config.get("motion_scale", MOTION_SCALE)),
        cue_force_n=float(config.get("cue_force_n", 10.0)),
        cue_deform_mm=float(config.get("cue_deform_mm", 10.0)),
        sensor_seed=int(config.get("sensor_seed", 0)))


def handle_envelope(session: TeleopSession, text: str) -> dict:
    """Dispatch one JSON command envelope; returns the ack payload."""
    try:
        msg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"bad envelope: {exc}") from exc
    kind = msg.get("type")
    if kind == "command_pose":
        return session.command_pose(msg["rel"], int(msg.get("seq", -1)))
    if kind == "set_preset":
        return session.set_preset(msg["name"])
    if kind == "record_start":
        return session.start_recording()
    if kind == "record_stop":
        ep = session.stop_recording()
        return {"recording": False,
                "frames": len(ep.frames) if ep is not None else 0}
    if kind == "re_zero":
        return session.re_zero()
    raise UsageError(f"unknown message type {kind!r}")


def hello_message(session: TeleopSession, stream_hz: float) -> dict:
    return {"type": "hello", "session_id": session.session_id,
            "task_id": session.task_id, "grid_w": GRID_W, "grid_h": GRID_H,
            "motion_scale": session.motion_scale,
            "cue_force_n": session.cue_force_n,
            "cue_deform_mm": session.cue_deform_mm,
            "stream_hz": stream_hz, "packet_len": PACKET_LEN}


def build_app(config: dict | None = None):
    """FastAPI app exposing the session over a websocket at /ws."""
    import asyncio

    from fastapi import FastAPI, WebSocket, WebSocketDisconnect

    stream_hz = float(os.environ.get("VISCOTACT_STREAM_HZ",
                                     (config or {}).get("stream_hz", STREAM_HZ)))
    app = FastAPI()

    # PEP 563 turns the annotation into a string that FastAPI cannot
    # resolve against a function-local import, so attach the real class
    # to __annotations__ before registering the route.
    async def ws(sock):
        await sock.accept()
        session = open_session(config)
        await sock.send_text(json.dumps(hello_message(session, stream_hz)))

        async def pump_commands():
            while True:
                text = await sock.receive_text()
                try:
                    ack = handle_envelope(session, text)
                except UsageError as exc:
                    ack = {"applied": False, "reason": str(exc)}
                await sock.send_text(json.dumps({"type": "ack", **ack}))

        async def pump_state():
            sim_per_packet = max(int(round(1.0 / (stream_hz * CYCLE_DT))), 1)
            while True:
                for _ in range(sim_per_packet):
                    session.cycle()
                await sock.send_bytes(session.state_packet().pack())
                await asyncio.sleep(1.0 / stream_hz)

        tasks = [asyncio.ensure_future(pump_commands()),
                 asyncio.ensure_future(pump_state())]
        try:
            await asyncio.gather(*tasks)
        except WebSocketDisconnect:
            pass
        finally:
            for task in tasks:
                task.cancel()

    ws.__annotations__ = {"sock": WebSocket}
    app.websocket("/ws")(ws)
    return app


def serve(host: str = "127.0.0.1", port: int | None = None,
          config: dict | None = None):
    import uvicorn
    port = port if port is not None else \
        int(os.environ.get("VISCOTACT_PORT", 8710))
    uvicorn.run(build_app(config), host=host, port=port, log_level="warning")
