"""Inference-side action-chunking policy.

A small pre-norm transformer: observation tokens (pose token per arm,
one token per force-field row and per deformation-field column, plus a
latent token fixed at the prior mean) pass through self-attention
encoder layers; learned chunk queries cross-attend to them and decode
n actions of 22 dims per arm. Compliance outputs are sigmoid-squashed
into their hard ranges.

All contractions go through np.einsum with optimize disabled, which
fixes the accumulation order so golden outputs are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import EPS_RANGE, LAMBDA1_RANGE, LAMBDA2_RANGE, ComplianceParams
from .errors import ConfigurationError, NumericError, SchedulingError
from .tactile import DeformationField, ForceField
from .weights import ArchDescriptor, WeightBundle

CHUNK_PERIOD = 0.1  # s, 10 Hz action cadence
POSE_SLICE = slice(0, 6)
JOINT_SLICE = slice(6, 19)
COMPLIANCE_SLICE = slice(19, 22)


@dataclass(frozen=True)
class Action:
    position: np.ndarray      # (3,) m
    orientation: np.ndarray   # (3,) axis-angle, components in [-pi, pi]
    hand_joints: np.ndarray   # (13,) rad
    compliance: ComplianceParams

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation,
                               self.hand_joints, self.compliance.as_array()])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "Action":
        if v.shape != (22,):
            raise ConfigurationError(f"action vector must be 22-dim, got {v.shape}")
        comp = squash_compliance_values(v[19:22], already_physical=True)
        return cls(position=v[0:3].copy(), orientation=wrap_angle(v[3:6]),
                   hand_joints=v[6:19].copy(), compliance=comp)


@dataclass(frozen=True)
class ActionChunk:
    actions: list              # n entries, each (22*arm_count,) raw vector
    start_time: float
    period: float = CHUNK_PERIOD
    arm_count: int = 1

    def __post_init__(self):
        if len(self.actions) < 1:
            raise ConfigurationError("chunk must contain at least one action")
        if self.period != CHUNK_PERIOD:
            raise ConfigurationError("chunk period is fixed at 0.1 s")

    @property
    def n(self) -> int:
        return len(self.actions)

    def covers(self, t: float, tol: float = 1e-9) -> bool:
        k = round((t - self.start_time) / self.period)
        return 0 <= k < self.n and abs(
            self.start_time + k * self.period - t) < tol

    def at(self, t: float) -> np.ndarray:
        k = round((t - self.start_time) / self.period)
        return self.actions[k]


@dataclass(frozen=True)
class Observation:
    current_pose: np.ndarray           # (6*arm_count,)
    force_field: ForceField
    deformation_field: DeformationField
    view_images: list | None = None
    # bimanual: optional second sensor pair
    force_field_2: ForceField | None = None
    deformation_field_2: DeformationField | None = None


def wrap_angle(x: np.ndarray) -> np.ndarray:
    """Wrap each component into [-pi, pi]."""
    return np.arctan2(np.sin(x), np.cos(x))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def squash_compliance(logits: np.ndarray) -> ComplianceParams:
    """Sigmoid-scale three raw logits into the hard compliance ranges."""
    s = sigmoid(np.asarray(logits, dtype=float))
    lo = np.array([LAMBDA1_RANGE[0], LAMBDA2_RANGE[0], EPS_RANGE[0]])
    hi = np.array([LAMBDA1_RANGE[1], LAMBDA2_RANGE[1], EPS_RANGE[1]])
    v = lo + (hi - lo) * s
    return ComplianceParams(float(v[0]), float(v[1]), float(v[2]))


def squash_compliance_values(v: np.ndarray,
                             already_physical: bool = False) -> ComplianceParams:
    """Clamp physical-space compliance values into the hard ranges."""
    lo = np.array([LAMBDA1_RANGE[0], LAMBDA2_RANGE[0], EPS_RANGE[0]])
    hi = np.array([LAMBDA1_RANGE[1], LAMBDA2_RANGE[1], EPS_RANGE[1]])
    c = np.clip(np.asarray(v, dtype=float), lo, hi)
    return ComplianceParams(float(c[0]), float(c[1]), float(c[2]))


def rodrigues(axis_angle: np.ndarray) -> np.ndarray:
    """Axis-angle (3-vector) to rotation matrix; zero vector -> identity."""
    r = np.asarray(axis_angle, dtype=float)
    theta = float(np.linalg.norm(r))
    if theta < 1e-12:
        return np.eye(3)
    k = r / theta
    K = np.array([[0.0, -k[2], k[1]],
                  [k[2], 0.0, -k[0]],
                  [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def rodrigues_inverse(R: np.ndarray) -> np.ndarray:
    """Rotation matrix back to axis-angle (angle < pi assumed)."""
    cos_t = (np.trace(R) - 1.0) / 2.0
    theta = float(np.arccos(np.clip(cos_t, -1.0, 1.0)))
    if theta < 1e-12:
        return np.zeros(3)
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0],
                     R[1, 0] - R[0, 1]]) / (2.0 * np.sin(theta))
    return axis * theta


# --- deterministic transformer forward ------------------------------------

def _mm(x, w):
    return np.einsum("ij,jk->ik", x, w, optimize=False)


def _layer_norm(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def _softmax(x):
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def _attention(q_in, kv_in, w, prefix, heads):
    d = q_in.shape[-1]
    dh = d // heads
    q = _mm(q_in, w[f"{prefix}.q_w"]) + w[f"{prefix}.q_b"]
    k = _mm(kv_in, w[f"{prefix}.k_w"]) + w[f"{prefix}.k_b"]
    v = _mm(kv_in, w[f"{prefix}.v_w"]) + w[f"{prefix}.v_b"]
    nq, nk = q.shape[0], k.shape[0]
    q = q.reshape(nq, heads, dh).transpose(1, 0, 2)
    k = k.reshape(nk, heads, dh).transpose(1, 0, 2)
    v = v.reshape(nk, heads, dh).transpose(1, 0, 2)
    scores = np.einsum("hqd,hkd->hqk", q, k, optimize=False) / np.sqrt(dh)
    attn = _softmax(scores)
    out = np.einsum("hqk,hkd->hqd", attn, v, optimize=False)
    out = out.transpose(1, 0, 2).reshape(nq, d)
    return _mm(out, w[f"{prefix}.o_w"]) + w[f"{prefix}.o_b"]


def _ffn(x, w, prefix):
    hdn = _mm(x, w[f"{prefix}.w1"]) + w[f"{prefix}.b1"]
    hdn = np.maximum(hdn, 0.0)
    return _mm(hdn, w[f"{prefix}.w2"]) + w[f"{prefix}.b2"]


def _observation_tokens(obs: Observation, a: ArchDescriptor, w) -> np.ndarray:
    pose = np.asarray(obs.current_pose, dtype=float).reshape(a.arm_count, 6)
    fields = [(obs.force_field, obs.deformation_field)]
    if a.arm_count == 2:
        f2 = obs.force_field_2 or obs.force_field
        d2 = obs.deformation_field_2 or obs.deformation_field
        fields.append((f2, d2))
    tokens = []
    for arm in range(a.arm_count):
        seg = w["embed.arm_seg"][arm]
        f, d = fields[arm]
        tokens.append(_mm(pose[arm][None, :], w["embed.pose_w"])[0]
                      + w["embed.pose_b"] + seg)
        frows = _mm(f.pressures / 50.0, w["embed.force_row_w"]) \
            + w["embed.force_row_b"] + seg
        dcols = _mm(d.displacements.T / 10.0, w["embed.deform_col_w"]) \
            + w["embed.deform_col_b"] + seg
        tokens.extend(frows)
        tokens.extend(dcols)
    latent = np.zeros(a.latent_dim)  # prior mean; encoder discarded at inference
    tokens.append(_mm(latent[None, :], w["embed.latent_w"])[0]
                  + w["embed.latent_b"])
    x = np.stack(tokens)
    if x.shape[0] != a.obs_tokens:
        raise ConfigurationError("observation token count mismatch")
    return x + w["embed.obs_pos"]


def _check_finite(x, where):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite activations at {where}")


def forward(obs: Observation, bundle: WeightBundle) -> np.ndarray:
    """Raw network output, shape (n, 22*arm_count), before squashing."""
    a = bundle.descriptor
    w = bundle.tensors
    x = _observation_tokens(obs, a, w)
    _check_finite(x, "embedding")
    for i in range(a.enc_layers):
        p = f"enc.{i}"
        hx = _layer_norm(x, w[f"{p}.ln1_g"], w[f"{p}.ln1_b"])
        x = x + _attention(hx, hx, w, f"{p}.attn", a.heads)
        hx = _layer_norm(x, w[f"{p}.ln2_g"], w[f"{p}.ln2_b"])
        x = x + _ffn(hx, w, f"{p}.ffn")
        _check_finite(x, p)
    mem = _layer_norm(x, w["norm.obs_final_g"], w["norm.obs_final_b"])
    y = w["dec.query_embed"].astype(float).copy()
    for i in range(a.dec_layers):
        p = f"dec.{i}"
        hy = _layer_norm(y, w[f"{p}.ln1_g"], w[f"{p}.ln1_b"])
        y = y + _attention(hy, hy, w, f"{p}.self_attn", a.heads)
        hy = _layer_norm(y, w[f"{p}.ln2_g"], w[f"{p}.ln2_b"])
        y = y + _attention(hy, mem, w, f"{p}.cross_attn", a.heads)
        hy = _layer_norm(y, w[f"{p}.ln3_g"], w[f"{p}.ln3_b"])
        y = y + _ffn(hy, w, f"{p}.ffn")
        _check_finite(y, p)
    y = _layer_norm(y, w["norm.dec_final_g"], w["norm.dec_final_b"])
    out = _mm(y, w["head.out_w"]) + w["head.out_b"]
    _check_finite(out, "head")
    return out


def postprocess(raw: np.ndarray, bundle: WeightBundle) -> list:
    """Denormalize motion dims, squash compliance, wrap orientations."""
    a = bundle.descriptor
    mean = bundle["norm.action_mean"].astype(float)
    std = bundle["norm.action_std"].astype(float)
    vecs = []
    for row in raw:
        out = np.empty_like(row, dtype=float)
        for arm in range(a.arm_count):
            o = 22 * arm
            motion = slice(o, o + 19)
            out[motion] = row[motion] * std[motion] + mean[motion]
            out[o + 3:o + 6] = wrap_angle(out[o + 3:o + 6])
            comp = squash_compliance(row[o + 19:o + 22])
            out[o + 19:o + 22] = comp.as_array()
        vecs.append(out)
    return vecs


def predict_chunk(obs: Observation, bundle: WeightBundle,
                  start_time: float = 0.0) -> ActionChunk:
    raw = forward(obs, bundle)
    vecs = postprocess(raw, bundle)
    return ActionChunk(actions=vecs, start_time=start_time,
                       arm_count=bundle.descriptor.arm_count)


# --- temporal ensembling and 10 Hz scheduling ------------------------------

def ensemble_step(history: list, t: float, m: float = 0.1) -> np.ndarray:
    """Exponentially weighted average over all chunks covering time t.

    Weight exp(-m*k) with k = 0 for the oldest covering chunk. Compliance
    components are re-clamped into their hard ranges after averaging.
    """
    covering = [c for c in history if c.covers(t)]
    if not covering:
        raise SchedulingError(f"no chunk covers t={t}")
    covering.sort(key=lambda c: c.start_time)
    ws = np.array([np.exp(-m * k) for k in range(len(covering))])
    ws = ws / ws.sum()
    vec = sum(w * c.at(t) for w, c in zip(ws, covering))
    arm_count = covering[0].arm_count
    for arm in range(arm_count):
        o = 22 * arm
        comp = squash_compliance_values(vec[o + 19:o + 22],
                                        already_physical=True)
        vec[o + 19:o + 22] = comp.as_array()
    return vec


@dataclass
class ActionScheduler:
    """Owns chunk history and emits one action per 0.1 s tick, no gaps."""

    decay: float = 0.1
    ensemble: bool = True
    max_history: int = 8
    chunks: list = field(default_factory=list)
    next_time: float | None = None

    def add_chunk(self, chunk: ActionChunk):
        self.chunks.append(chunk)
        self.chunks = self.chunks[-self.max_history:]
        if self.next_time is None:
            self.next_time = chunk.start_time

    def emit(self) -> tuple[float, np.ndarray]:
        if self.next_time is None:
            raise SchedulingError("no chunks scheduled")
        t = self.next_time
        if self.ensemble:
            vec = ensemble_step(self.chunks, t, self.decay)
        else:
            newest = [c for c in self.chunks if c.covers(t)]
            if not newest:
                raise SchedulingError(f"no chunk covers t={t}")
            vec = newest[-1].at(t).copy()
        self.next_time = round((t + CHUNK_PERIOD) * 1e6) / 1e6
        return t, vec
