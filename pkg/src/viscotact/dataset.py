"""Episode container, recording/replay, normalization stats, manifests.

One file per episode: a self-describing UTF-8 header (key = value lines
ended by a line of three dashes) followed by length-prefixed binary
frames, little-endian float32 arrays. A frame holds, for each 0.1 s
action period: timestamp (f64), end-effector pose, force field (kPa),
deformation field (mm), executed action, active preset and phase labels,
the observer channel (ke, kv, km, tau, D, residual, confident) and the
controller channel (f_des, f_meas, ref_depth, lambda1, lambda2, eps,
violation mask, reserved).

Readers salvage a truncated file up to the last complete frame.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, OrderingError, UsageError

FORMAT_VERSION = 1
HEADER_END = "---"
SAMPLE_PERIOD = 0.1  # s
PRESET_INDEX = {"Low": 0, "Mid": 1, "High": 2}
PRESET_BY_INDEX = {v: k for k, v in PRESET_INDEX.items()}
PHASES = ("Approach", "Contact", "Engage", "Hold", "Traverse", "Insert",
          "Release", "Done")
PHASE_INDEX = {p: i for i, p in enumerate(PHASES)}


@dataclass
class Frame:
    t: float
    pose: np.ndarray          # (6*arms,) f32
    force: np.ndarray         # (W, H) kPa f32
    deform: np.ndarray        # (W, H) mm f32
    action: np.ndarray        # (22*arms,) f32
    preset: str = "Mid"
    phase: str = "Approach"
    observer: np.ndarray = field(
        default_factory=lambda: np.zeros(7, dtype=np.float32))
    controller: np.ndarray = field(
        default_factory=lambda: np.zeros(8, dtype=np.float32))
    # optional high-rate side channel, present when the header carries
    # highrate=1: the 10 intra-frame applied indentation fields
    # (m, f64 so replay is bit-exact), shape (10, W*H), and the 10 lateral
    # mask shifts (cells, i8)
    highrate: np.ndarray | None = None
    hr_shift: np.ndarray | None = None


@dataclass
class Episode:
    header: dict
    frames: list
    truncated: bool = False

    @property
    def arm_count(self) -> int:
        return int(self.header["arm_count"])

    @property
    def grid_shape(self):
        return int(self.header["grid_w"]), int(self.header["grid_h"])


def make_header(task_id: str, arm_count: int = 1, grid_w: int = 12,
                grid_h: int = 10, material_hash: str = "",
                seed: int = 0, **extra) -> dict:
    hdr = {
        "format_version": FORMAT_VERSION,
        "task_id": task_id,
        "arm_count": arm_count,
        "grid_w": grid_w,
        "grid_h": grid_h,
        "material_hash": material_hash,
        "sample_period": SAMPLE_PERIOD,
        "seed": seed,
    }
    hdr.update(extra)
    return hdr


def _header_text(header: dict) -> str:
    lines = [f"{k} = {header[k]}" for k in header]
    return "\n".join(lines) + f"\n{HEADER_END}\n"


HIGHRATE_LEN = 10  # intra-frame control cycles per action period


def _frame_bytes(fr: Frame, arm_count: int, grid_w: int, grid_h: int,
                 highrate: bool = False) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack("<d", fr.t))
    for arr, n in ((fr.pose, 6 * arm_count),
                   (fr.force, grid_w * grid_h),
                   (fr.deform, grid_w * grid_h),
                   (fr.action, 22 * arm_count)):
        a = np.ascontiguousarray(arr, dtype="<f4").reshape(-1)
        if a.size != n:
            raise FormatError(f"frame array size {a.size}, expected {n}")
        buf.write(a.tobytes())
    buf.write(struct.pack("<BB", PRESET_INDEX[fr.preset],
                          PHASE_INDEX[fr.phase]))
    buf.write(np.ascontiguousarray(fr.observer, dtype="<f4")[:7].tobytes())
    buf.write(np.ascontiguousarray(fr.controller, dtype="<f4")[:8].tobytes())
    if highrate:
        hr = fr.highrate
        if hr is None or hr.shape != (HIGHRATE_LEN, grid_w * grid_h):
            raise FormatError(
                "highrate episodes need 10 indentation fields per frame")
        buf.write(np.ascontiguousarray(hr, dtype="<f8").tobytes())
        sh = fr.hr_shift if fr.hr_shift is not None \
            else np.zeros(HIGHRATE_LEN, dtype=np.int8)
        if len(sh) != HIGHRATE_LEN:
            raise FormatError("highrate episodes need 10 shifts per frame")
        buf.write(np.ascontiguousarray(sh, dtype="<i1").tobytes())
    payload = buf.getvalue()
    return struct.pack("<I", len(payload)) + payload


def _is_highrate(header: dict) -> bool:
    return str(header.get("highrate", 0)) == "1"


def serialize(ep: Episode) -> bytes:
    out = io.BytesIO()
    out.write(_header_text(ep.header).encode())
    W, H = ep.grid_shape
    hr = _is_highrate(ep.header)
    last_t = None
    for fr in ep.frames:
        if last_t is not None and fr.t <= last_t:
            raise OrderingError("frame timestamps must strictly increase")
        last_t = fr.t
        out.write(_frame_bytes(fr, ep.arm_count, W, H, hr))
    return out.getvalue()


def parse(raw: bytes) -> Episode:
    end = raw.find(f"\n{HEADER_END}\n".encode())
    if end < 0:
        raise FormatError("missing header terminator")
    header = {}
    for line in raw[:end].decode().splitlines():
        if "=" not in line:
            raise FormatError(f"bad header line {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        header[k] = v
    if int(header.get("format_version", -1)) != FORMAT_VERSION:
        raise FormatError(
            f"unsupported episode format_version {header.get('format_version')}")
    arm_count = int(header["arm_count"])
    W, H = int(header["grid_w"]), int(header["grid_h"])
    body = raw[end + len(HEADER_END) + 2:]
    frames, truncated = [], False
    off = 0
    n_field = W * H
    hr = _is_highrate(header)
    expect = 8 + 4 * (6 * arm_count + 2 * n_field + 22 * arm_count) + 2 + 4 * 15
    if hr:
        expect += 8 * HIGHRATE_LEN * n_field + HIGHRATE_LEN
    while off < len(body):
        if off + 4 > len(body):
            truncated = True
            break
        (plen,) = struct.unpack_from("<I", body, off)
        if plen != expect or off + 4 + plen > len(body):
            truncated = True
            break
        p = body[off + 4:off + 4 + plen]
        o = 0
        (t,) = struct.unpack_from("<d", p, o); o += 8

        def take(n, o=o):
            return np.frombuffer(p, dtype="<f4", count=n, offset=o).copy()
        pose = take(6 * arm_count, o); o += 4 * 6 * arm_count
        force = take(n_field, o).reshape(W, H); o += 4 * n_field
        deform = take(n_field, o).reshape(W, H); o += 4 * n_field
        action = take(22 * arm_count, o); o += 4 * 22 * arm_count
        preset_i, phase_i = struct.unpack_from("<BB", p, o); o += 2
        obs = take(7, o); o += 28
        ctl = take(8, o); o += 32
        hrates = shifts = None
        if hr:
            hrates = np.frombuffer(p, dtype="<f8",
                                   count=HIGHRATE_LEN * n_field,
                                   offset=o).reshape(HIGHRATE_LEN, n_field).copy()
            o += 8 * HIGHRATE_LEN * n_field
            shifts = np.frombuffer(p, dtype="<i1", count=HIGHRATE_LEN,
                                   offset=o).copy()
            o += HIGHRATE_LEN
        frames.append(Frame(t=t, pose=pose, force=force, deform=deform,
                            action=action,
                            preset=PRESET_BY_INDEX[preset_i],
                            phase=PHASES[phase_i],
                            observer=obs, controller=ctl, highrate=hrates,
                            hr_shift=shifts))
        off += 4 + plen
    return Episode(header=header, frames=frames, truncated=truncated)


class EpisodeWriter:
    """Stream-appendable recorder: header first, then one frame at a time."""

    def __init__(self, path: str, header: dict):
        self.header = header
        self.arm_count = int(header["arm_count"])
        self.W, self.H = int(header["grid_w"]), int(header["grid_h"])
        self._highrate = _is_highrate(header)
        self._f = open(path, "wb")
        self._f.write(_header_text(header).encode())
        self._last_t = None
        self.count = 0

    def append(self, frame: Frame):
        if self._last_t is not None and frame.t <= self._last_t:
            raise OrderingError("frame timestamps must strictly increase")
        self._last_t = frame.t
        self._f.write(_frame_bytes(frame, self.arm_count, self.W, self.H,
                                   self._highrate))
        self.count += 1

    def close(self):
        if not self._f.closed:
            self._f.close()


def load_episode(path: str) -> Episode:
    with open(path, "rb") as f:
        return parse(f.read())


def replay(ep: Episode):
    """Frame iterator (bit-exact replay of the recorded frames)."""
    yield from ep.frames


# --- normalization statistics ----------------------------------------------

@dataclass
class NormStats:
    action_mean: np.ndarray
    action_std: np.ndarray
    action_const: np.ndarray  # bool flags for zero-variance dims
    pose_mean: np.ndarray
    pose_std: np.ndarray
    pose_const: np.ndarray

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in
                ("action_mean", "action_std", "action_const",
                 "pose_mean", "pose_std", "pose_const")}

    @classmethod
    def from_dict(cls, d):
        return cls(action_mean=np.array(d["action_mean"]),
                   action_std=np.array(d["action_std"]),
                   action_const=np.array(d["action_const"], dtype=bool),
                   pose_mean=np.array(d["pose_mean"]),
                   pose_std=np.array(d["pose_std"]),
                   pose_const=np.array(d["pose_const"], dtype=bool))


def _two_pass_stats(rows: np.ndarray):
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    const = std == 0.0
    std = np.where(const, 1.0, std)
    return mean, std, const


def compute_stats(episodes: list) -> NormStats:
    if not episodes:
        raise UsageError("compute_stats requires at least one episode")
    actions = np.concatenate([[fr.action for fr in ep.frames]
                              for ep in episodes])
    poses = np.concatenate([[fr.pose for fr in ep.frames]
                            for ep in episodes])
    am, asd, ac = _two_pass_stats(actions.astype(float))
    pm, psd, pc = _two_pass_stats(poses.astype(float))
    return NormStats(am, asd, ac, pm, psd, pc)


# --- dataset manifest --------------------------------------------------------

def write_manifest(path: str, episodes: list, splits: dict,
                   stats: NormStats):
    doc = {"format_version": FORMAT_VERSION, "episodes": episodes,
           "splits": splits, "stats": stats.to_dict()}
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def read_manifest(path: str):
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"cannot read manifest {path}: {e}") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise FormatError("unsupported manifest version")
    return doc["episodes"], doc["splits"], NormStats.from_dict(doc["stats"])
