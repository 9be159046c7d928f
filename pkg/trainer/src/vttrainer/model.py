"""Torch CVAE whose decoder mirrors the runtime's numpy transformer.

Every decoder/embedding parameter is named by its bundle key, so export
is a plain state-dump. The style encoder (actions + pose -> latent
mean/logvar) exists only at training time and is discarded on export,
matching the runtime's zero-latent inference path.

Op-for-op mirror of the runtime: pre-LN blocks, manual layer norm with
eps = 1e-5, ReLU feed-forward, per-head softmax attention scaled by
1/sqrt(d_head). Encoder token order: per arm (pose, force rows 0..W-1,
deformation columns 0..H-1), then one latent token; positional
embedding added last. This ordering is fixed by the bundle descriptor's
grid dims, so the runtime never has to guess it.
"""
from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn

from .bundle import Arch, expected_shapes

# hard compliance ranges shared with the runtime (lambda1, lambda2, eps)
COMP_LO = np.array([50.0, 0.1, 0.01])
COMP_HI = np.array([500.0, 5.0, 0.1])


def _key(name: str) -> str:
    return name.replace(".", "__")


class PolicyModel(nn.Module):
    def __init__(self, arch: Arch, seed: int = 0):
        super().__init__()
        self.arch = arch
        gen = torch.Generator().manual_seed(seed)
        self.params = nn.ParameterDict()
        for name, shape in expected_shapes(arch).items():
            if name in ("norm.action_mean", "norm.action_std"):
                continue  # filled from dataset stats at export
            if name.endswith("_g"):
                t = torch.ones(shape)
            elif name.endswith("_b") or name.endswith(".b1") \
                    or name.endswith(".b2"):
                t = torch.zeros(shape)
            else:
                fan_in = shape[0] if len(shape) > 1 else 1
                t = torch.randn(shape, generator=gen) / math.sqrt(fan_in)
            self.params[_key(name)] = nn.Parameter(t)

        # style encoder: demonstrated chunk + pose -> latent mean/logvar
        d, a = arch.d_model, arch
        g = gen
        self.enc_action_w = nn.Parameter(
            torch.randn(a.action_dim, d, generator=g) / math.sqrt(a.action_dim))
        self.enc_pose_w = nn.Parameter(
            torch.randn(6 * a.arm_count, d, generator=g) / math.sqrt(6))
        self.enc_b = nn.Parameter(torch.zeros(d))
        self.enc_mlp_w1 = nn.Parameter(
            torch.randn(d, d, generator=g) / math.sqrt(d))
        self.enc_mlp_b1 = nn.Parameter(torch.zeros(d))
        self.enc_mlp_w2 = nn.Parameter(
            torch.randn(d, 2 * a.latent_dim, generator=g) / math.sqrt(d))
        self.enc_mlp_b2 = nn.Parameter(torch.zeros(2 * a.latent_dim))

    def w(self, name):
        return self.params[_key(name)]

    # -- mirrored primitives ---------------------------------------------------

    @staticmethod
    def _ln(x, g, b, eps=1e-5):
        mu = x.mean(dim=-1, keepdim=True)
        var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
        return (x - mu) / torch.sqrt(var + eps) * g + b

    def _attention(self, q_in, kv_in, prefix):
        heads = self.arch.heads
        d = q_in.shape[-1]
        dh = d // heads
        q = q_in @ self.w(f"{prefix}.q_w") + self.w(f"{prefix}.q_b")
        k = kv_in @ self.w(f"{prefix}.k_w") + self.w(f"{prefix}.k_b")
        v = kv_in @ self.w(f"{prefix}.v_w") + self.w(f"{prefix}.v_b")
        B, nq, nk = q.shape[0], q.shape[1], k.shape[1]
        q = q.reshape(B, nq, heads, dh).transpose(1, 2)
        k = k.reshape(B, nk, heads, dh).transpose(1, 2)
        v = v.reshape(B, nk, heads, dh).transpose(1, 2)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(dh), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(B, nq, d)
        return out @ self.w(f"{prefix}.o_w") + self.w(f"{prefix}.o_b")

    def _ffn(self, x, prefix):
        h = torch.relu(x @ self.w(f"{prefix}.w1") + self.w(f"{prefix}.b1"))
        return h @ self.w(f"{prefix}.w2") + self.w(f"{prefix}.b2")

    # -- forward ----------------------------------------------------------------

    def obs_tokens(self, pose, force, deform, z):
        """pose (B, 6*arms), force kPa (B, arms, W, H), deform mm, z (B, L)."""
        a = self.arch
        B = pose.shape[0]
        tokens = []
        for arm in range(a.arm_count):
            seg = self.w("embed.arm_seg")[arm]
            p = pose[:, 6 * arm:6 * arm + 6]
            tokens.append((p @ self.w("embed.pose_w")
                           + self.w("embed.pose_b") + seg).unsqueeze(1))
            frows = force[:, arm] / 50.0 @ self.w("embed.force_row_w") \
                + self.w("embed.force_row_b") + seg
            dcols = deform[:, arm].transpose(1, 2) / 10.0 \
                @ self.w("embed.deform_col_w") \
                + self.w("embed.deform_col_b") + seg
            tokens.extend([frows, dcols])
        tokens.append((z @ self.w("embed.latent_w")
                       + self.w("embed.latent_b")).unsqueeze(1))
        x = torch.cat(tokens, dim=1)
        assert x.shape[1] == a.obs_tokens
        return x + self.w("embed.obs_pos")

    def decode(self, pose, force, deform, z):
        """Raw (B, chunk_len, action_dim) output, before squashing."""
        a = self.arch
        x = self.obs_tokens(pose, force, deform, z)
        for i in range(a.enc_layers):
            p = f"enc.{i}"
            hx = self._ln(x, self.w(f"{p}.ln1_g"), self.w(f"{p}.ln1_b"))
            x = x + self._attention(hx, hx, f"{p}.attn")
            hx = self._ln(x, self.w(f"{p}.ln2_g"), self.w(f"{p}.ln2_b"))
            x = x + self._ffn(hx, f"{p}.ffn")
        mem = self._ln(x, self.w("norm.obs_final_g"),
                       self.w("norm.obs_final_b"))
        y = self.w("dec.query_embed").unsqueeze(0).expand(
            pose.shape[0], -1, -1)
        for i in range(a.dec_layers):
            p = f"dec.{i}"
            hy = self._ln(y, self.w(f"{p}.ln1_g"), self.w(f"{p}.ln1_b"))
            y = y + self._attention(hy, hy, f"{p}.self_attn")
            hy = self._ln(y, self.w(f"{p}.ln2_g"), self.w(f"{p}.ln2_b"))
            y = y + self._attention(hy, mem, f"{p}.cross_attn")
            hy = self._ln(y, self.w(f"{p}.ln3_g"), self.w(f"{p}.ln3_b"))
            y = y + self._ffn(hy, f"{p}.ffn")
        y = self._ln(y, self.w("norm.dec_final_g"),
                     self.w("norm.dec_final_b"))
        return y @ self.w("head.out_w") + self.w("head.out_b")

    def encode_style(self, pose, chunk_raw):
        """(B, 6*arms), (B, n, action_dim) -> latent mean, logvar."""
        tok = chunk_raw @ self.enc_action_w
        tok = torch.cat([tok, (pose @ self.enc_pose_w).unsqueeze(1)], dim=1)
        h = tok.mean(dim=1) + self.enc_b
        h = torch.relu(h @ self.enc_mlp_w1 + self.enc_mlp_b1)
        out = h @ self.enc_mlp_w2 + self.enc_mlp_b2
        L = self.arch.latent_dim
        return out[:, :L], out[:, L:]

    def export_tensors(self, action_mean, action_std) -> dict:
        tensors = {name: self.w(name).detach().numpy().astype(np.float32)
                   for name in expected_shapes(self.arch)
                   if name not in ("norm.action_mean", "norm.action_std")}
        tensors["norm.action_mean"] = np.asarray(action_mean,
                                                 dtype=np.float32)
        tensors["norm.action_std"] = np.asarray(action_std, dtype=np.float32)
        return tensors


def raw_targets(actions: np.ndarray, mean: np.ndarray,
                std: np.ndarray) -> np.ndarray:
    """Physical demonstrated actions -> the network's raw output space.

    Motion dims are z-scored; compliance dims are inverse-sigmoid mapped
    so the runtime's squash reproduces the demonstrated values.
    """
    out = np.array(actions, dtype=np.float64)
    arms = out.shape[-1] // 22
    for arm in range(arms):
        o = 22 * arm
        out[..., o:o + 19] = (out[..., o:o + 19] - mean[o:o + 19]) \
            / std[o:o + 19]
        frac = (out[..., o + 19:o + 22] - COMP_LO) / (COMP_HI - COMP_LO)
        frac = np.clip(frac, 1e-4, 1.0 - 1e-4)
        out[..., o + 19:o + 22] = np.log(frac / (1.0 - frac))
    return out
