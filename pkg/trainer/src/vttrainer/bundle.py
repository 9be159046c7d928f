"""Standalone CFA1 weight-bundle writer/reader.

Implements the documented interchange format directly (magic "CFA1",
u32 version, descriptor text, tensor table, little-endian float32 data,
trailing CRC-32) so the trainer depends only on the format contract,
not on the runtime's internals.
"""
from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass

import numpy as np

MAGIC = b"CFA1"
VERSION = 1


@dataclass(frozen=True)
class Arch:
    d_model: int = 64
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    chunk_len: int = 10
    arm_count: int = 1
    latent_dim: int = 8
    grid_w: int = 12
    grid_h: int = 10

    @property
    def action_dim(self):
        return 22 * self.arm_count

    @property
    def ffn_dim(self):
        return 4 * self.d_model

    @property
    def obs_tokens(self):
        return self.arm_count * (1 + self.grid_w + self.grid_h) + 1

    def to_text(self):
        keys = ("d_model", "enc_layers", "dec_layers", "heads", "chunk_len",
                "arm_count", "latent_dim", "grid_w", "grid_h")
        return "".join(f"{k}={getattr(self, k)}\n" for k in keys)


def _attention_block(prefix, d):
    return {f"{prefix}.{n}_w": (d, d) for n in "qkvo"} \
        | {f"{prefix}.{n}_b": (d,) for n in "qkvo"}


def expected_shapes(a: Arch) -> dict:
    """The bundle's tensor contract; must match the runtime exactly."""
    d, f = a.d_model, a.ffn_dim
    shapes = {
        "embed.pose_w": (6, d), "embed.pose_b": (d,),
        "embed.force_row_w": (a.grid_h, d), "embed.force_row_b": (d,),
        "embed.deform_col_w": (a.grid_w, d), "embed.deform_col_b": (d,),
        "embed.latent_w": (a.latent_dim, d), "embed.latent_b": (d,),
        "embed.obs_pos": (a.obs_tokens, d),
        "embed.arm_seg": (a.arm_count, d),
        "dec.query_embed": (a.chunk_len, d),
        "head.out_w": (d, a.action_dim), "head.out_b": (a.action_dim,),
        "norm.obs_final_g": (d,), "norm.obs_final_b": (d,),
        "norm.dec_final_g": (d,), "norm.dec_final_b": (d,),
        "norm.action_mean": (a.action_dim,),
        "norm.action_std": (a.action_dim,),
    }
    for i in range(a.enc_layers):
        p = f"enc.{i}"
        shapes.update(_attention_block(f"{p}.attn", d))
        shapes.update({
            f"{p}.ln1_g": (d,), f"{p}.ln1_b": (d,),
            f"{p}.ln2_g": (d,), f"{p}.ln2_b": (d,),
            f"{p}.ffn.w1": (d, f), f"{p}.ffn.b1": (f,),
            f"{p}.ffn.w2": (f, d), f"{p}.ffn.b2": (d,),
        })
    for i in range(a.dec_layers):
        p = f"dec.{i}"
        shapes.update(_attention_block(f"{p}.self_attn", d))
        shapes.update(_attention_block(f"{p}.cross_attn", d))
        shapes.update({
            f"{p}.ln1_g": (d,), f"{p}.ln1_b": (d,),
            f"{p}.ln2_g": (d,), f"{p}.ln2_b": (d,),
            f"{p}.ln3_g": (d,), f"{p}.ln3_b": (d,),
            f"{p}.ffn.w1": (d, f), f"{p}.ffn.b1": (f,),
            f"{p}.ffn.w2": (f, d), f"{p}.ffn.b2": (d,),
        })
    return shapes


def write_bundle(arch: Arch, tensors: dict) -> bytes:
    exp = expected_shapes(arch)
    missing = sorted(set(exp) - set(tensors))
    extra = sorted(set(tensors) - set(exp))
    if missing or extra:
        raise ValueError(f"tensor set mismatch: missing={missing[:3]} "
                         f"extra={extra[:3]}")
    for name, shape in exp.items():
        if tuple(tensors[name].shape) != shape:
            raise ValueError(f"{name}: shape {tensors[name].shape}, "
                             f"expected {shape}")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    desc = arch.to_text().encode()
    buf.write(struct.pack("<I", len(desc)))
    buf.write(desc)
    names = sorted(tensors)
    buf.write(struct.pack("<I", len(names)))
    data = io.BytesIO()
    for name in names:
        t = np.ascontiguousarray(tensors[name], dtype="<f4")
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", t.ndim))
        buf.write(struct.pack(f"<{t.ndim}I", *t.shape))
        buf.write(struct.pack("<Q", data.tell()))
        data.write(t.tobytes())
    raw_data = data.getvalue()
    buf.write(struct.pack("<Q", len(raw_data)))
    buf.write(raw_data)
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def read_bundle(raw: bytes):
    """Parse a CFA1 bundle; returns (arch_kv: dict, tensors: dict)."""
    if raw[:4] != MAGIC:
        raise ValueError("bad magic")
    body, crc = raw[:-4], struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(body) != crc:
        raise ValueError("CRC mismatch")
    off = 4
    (version,) = struct.unpack_from("<I", body, off); off += 4
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    (dlen,) = struct.unpack_from("<I", body, off); off += 4
    kv = dict(line.split("=", 1)
              for line in body[off:off + dlen].decode().splitlines())
    off += dlen
    (count,) = struct.unpack_from("<I", body, off); off += 4
    entries = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", body, off); off += 2
        name = body[off:off + nlen].decode(); off += nlen
        (rank,) = struct.unpack_from("<B", body, off); off += 1
        dims = struct.unpack_from(f"<{rank}I", body, off); off += 4 * rank
        (doff,) = struct.unpack_from("<Q", body, off); off += 8
        entries.append((name, dims, doff))
    (data_len,) = struct.unpack_from("<Q", body, off); off += 8
    data = body[off:off + data_len]
    tensors = {}
    for name, dims, doff in entries:
        n = int(np.prod(dims)) if dims else 1
        tensors[name] = np.frombuffer(
            data, dtype="<f4", count=n, offset=doff).reshape(dims).copy()
    return {k: int(v) for k, v in kv.items()}, tensors
