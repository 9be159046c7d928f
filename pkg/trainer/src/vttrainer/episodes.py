"""Standalone reader for the episode interchange format (*.ep + manifest).

An episode file is a UTF-8 "key = value" header ended by a "---" line,
followed by u32-length-prefixed binary frames (little-endian float32
arrays). Only the fields the trainer needs are decoded here; the
optional high-rate side channel is skipped over by the length prefix.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

PRESETS = ("Low", "Mid", "High")
PHASES = ("Approach", "Contact", "Engage", "Hold", "Traverse", "Insert",
          "Release", "Done")


@dataclass
class Frame:
    t: float
    pose: np.ndarray     # (6*arms,)
    force: np.ndarray    # (W, H) kPa
    deform: np.ndarray   # (W, H) mm
    action: np.ndarray   # (22*arms,)
    preset: str
    phase: str


@dataclass
class Episode:
    header: dict
    frames: list


def load_episode(path: str) -> Episode:
    raw = open(path, "rb").read()
    end = raw.find(b"\n---\n")
    if end < 0:
        raise ValueError(f"{path}: missing header terminator")
    header = {}
    for line in raw[:end].decode().splitlines():
        k, v = (s.strip() for s in line.split("=", 1))
        header[k] = v
    arms = int(header["arm_count"])
    W, H = int(header["grid_w"]), int(header["grid_h"])
    n_field = W * H
    body = raw[end + 5:]
    frames, off = [], 0
    while off + 4 <= len(body):
        (plen,) = struct.unpack_from("<I", body, off)
        if off + 4 + plen > len(body):
            break  # truncated tail: keep the complete frames
        p = body[off + 4:off + 4 + plen]
        o = 0
        (t,) = struct.unpack_from("<d", p, o); o += 8
        pose = np.frombuffer(p, "<f4", 6 * arms, o).copy(); o += 24 * arms
        force = np.frombuffer(p, "<f4", n_field, o).reshape(W, H).copy()
        o += 4 * n_field
        deform = np.frombuffer(p, "<f4", n_field, o).reshape(W, H).copy()
        o += 4 * n_field
        action = np.frombuffer(p, "<f4", 22 * arms, o).copy(); o += 88 * arms
        preset_i, phase_i = struct.unpack_from("<BB", p, o)
        frames.append(Frame(t=t, pose=pose, force=force, deform=deform,
                            action=action, preset=PRESETS[preset_i],
                            phase=PHASES[phase_i]))
        off += 4 + plen
    return Episode(header=header, frames=frames)


def load_manifest(path: str):
    """Returns (episodes_by_file, splits, stats dict)."""
    with open(path) as f:
        doc = json.load(f)
    root = os.path.dirname(path)
    eps = {name: load_episode(os.path.join(root, name))
           for name in doc["episodes"]}
    return eps, doc["splits"], doc["stats"]
