import json
import struct

import numpy as np
import pytest

from viscotact import teleop
from viscotact.errors import ConfigurationError, UsageError
from viscotact.tasks import determinism_audit
from viscotact.teleop import (CUE_DEFORM, CUE_FORCE, CUE_WORKSPACE,
                              PACKET_LEN, TeleopSession, handle_envelope,
                              hello_message, open_session)


def test_motion_scale_applied():
    s = TeleopSession()
    s.command_pose([1e-3, -2e-3, 1e-3, 0.0, 0.0, 0.1], seq=1)
    assert s.pose[0] == pytest.approx(1.5e-3)
    assert s.pose[1] == pytest.approx(-3e-3)
    assert s.pose[2] == pytest.approx(1.5e-3)
    assert s.pose[5] == pytest.approx(0.15)
    with pytest.raises(ConfigurationError):
        TeleopSession(motion_scale=0.0)


def test_zero_motion_leaves_pose_unchanged():
    s = TeleopSession()
    before = s.pose.copy()
    out = s.command_pose(np.zeros(6), seq=1)
    assert out["applied"]
    assert np.array_equal(s.pose, before)


def test_stale_sequence_dropped():
    s = TeleopSession()
    assert s.command_pose(np.zeros(6), seq=5)["applied"]
    out = s.command_pose([1e-3, 0, 0, 0, 0, 0], seq=5)
    assert not out["applied"] and out["reason"] == "stale"
    out = s.command_pose([1e-3, 0, 0, 0, 0, 0], seq=3)
    assert not out["applied"]
    assert s.pose[0] == 0.0
    assert s.dropped == 2
    assert s.command_pose(np.zeros(6), seq=6)["applied"]
    with pytest.raises(UsageError):
        s.command_pose([0.0, 0.0], seq=7)


def test_depth_clamp_sets_workspace_cue():
    s = TeleopSession()
    out = s.command_pose([0, 0, 1.0, 0, 0, 0], seq=1)
    assert out["clamped"] and s.cue_workspace
    assert s.pose[2] == s.limits.max_depth
    out = s.command_pose([0, 0, -2.0, 0, 0, 0], seq=2)
    assert out["clamped"] and s.pose[2] == 0.0
    s.re_zero()
    assert not s.cue_workspace and np.all(s.pose == 0.0)


def test_force_cue_tracks_threshold():
    s = TeleopSession(cue_force_n=1.0)
    for _ in range(20):
        s.cycle()
    assert not s.cue_force  # no contact yet
    # predicted force k_e * depth * area crosses the 1 N threshold
    s.command_pose([0, 0, 8e-3 / 1.5, 0, 0, 0], seq=1)
    s.cycle()
    predicted = s.material.k_e * s.pose[2] * s.mask.sum() * s.state.h ** 2
    assert predicted > 1.0 and s.cue_force
    # and clears again once the pad is lifted and relaxes
    s.command_pose([0, 0, -1.0, 0, 0, 0], seq=2)
    for _ in range(200):
        s.cycle()
    assert not s.cue_force


def test_recording_rate_and_idempotent_stop():
    s = TeleopSession()
    s.command_pose([0, 0, 2e-3, 0, 0, 0], seq=1)
    s.start_recording()
    s.start_recording()  # idempotent
    for _ in range(250):  # 2.5 s at 100 Hz
        s.cycle()
    assert abs(s.frames_recorded - 25) <= 1
    ep = s.stop_recording()
    assert ep is not None and len(ep.frames) == s.frames_recorded
    assert s.stop_recording() is ep  # second stop returns the same episode
    assert determinism_audit(ep) == 0.0


def test_packet_layout():
    s = TeleopSession()
    s.command_pose([0, 0, 2e-3, 0, 0, 0], seq=9)
    for _ in range(30):
        s.cycle()
    raw = s.state_packet().pack()
    assert len(raw) == PACKET_LEN
    (t,) = struct.unpack_from("<d", raw, 0)
    assert t == pytest.approx(s.t)
    pose = np.frombuffer(raw, "<f4", count=6, offset=8)
    assert pose[2] == pytest.approx(3e-3)
    force = np.frombuffer(raw, "<f4", count=120, offset=8 + 24)
    assert np.array_equal(force.reshape(12, 10),
                          s._last_force.pressures.astype("<f4"))
    preset, cues, frames, seq = struct.unpack_from("<BBHI", raw, 1012)
    assert preset == 1  # Mid
    assert frames == 0 and seq == 9
    assert (cues & CUE_WORKSPACE) == 0


def test_packet_cue_bits_and_frame_saturation():
    s = TeleopSession()
    s.cue_force = s.cue_deform = s.cue_workspace = True
    s._frames = [None] * 70000  # u16 saturates at 65535
    raw = s.state_packet().pack()
    _, cues, frames, _ = struct.unpack_from("<BBHI", raw, 1012)
    assert cues == CUE_FORCE | CUE_DEFORM | CUE_WORKSPACE
    assert frames == 0xFFFF


def test_handle_envelope_dispatch():
    s = open_session({"task_id": "Wipe"})
    assert s.task_id == "Wipe"
    out = handle_envelope(s, json.dumps(
        {"type": "command_pose", "rel": [0, 0, 1e-3, 0, 0, 0], "seq": 1}))
    assert out["applied"]
    out = handle_envelope(s, json.dumps({"type": "set_preset",
                                         "name": "High"}))
    assert s.preset == "High" and out["applied"]
    handle_envelope(s, json.dumps({"type": "record_start"}))
    assert s.recording
    handle_envelope(s, json.dumps({"type": "record_stop"}))
    assert not s.recording
    out = handle_envelope(s, json.dumps({"type": "re_zero"}))
    assert np.all(s.pose == 0.0)
    with pytest.raises(UsageError):
        handle_envelope(s, json.dumps({"type": "self_destruct"}))
    with pytest.raises(UsageError):
        handle_envelope(s, "not json")


def test_hello_message_schema():
    s = open_session(None)
    msg = hello_message(s, 60.0)
    assert msg["type"] == "hello"
    assert msg["packet_len"] == PACKET_LEN
    assert (msg["grid_w"], msg["grid_h"]) == (12, 10)
    assert msg["stream_hz"] == 60.0
