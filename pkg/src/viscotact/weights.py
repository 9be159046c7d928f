"""Binary weight bundle container ("CFA1").

Layout, little-endian throughout:

    magic            4 bytes  b"CFA1"
    version          u32      (currently 1)
    descriptor_len   u32
    descriptor       UTF-8 "key=value\\n" lines
    tensor_count     u32
    per tensor:      u16 name_len, name bytes, u8 rank, rank*u32 dims,
                     u64 byte offset into the data section
    data_len         u64
    data             raw float32
    crc32            u32      over every preceding byte

The descriptor carries the architecture (d_model, enc_layers, dec_layers,
heads, chunk_len, arm_count, latent_dim, grid_w, grid_h) and load-time
validation checks every required tensor against its expected shape.
"""
from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptionError, FormatError, ShapeError

MAGIC = b"CFA1"
VERSION = 1


@dataclass(frozen=True)
class ArchDescriptor:
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
    def action_dim(self) -> int:
        return 22 * self.arm_count

    @property
    def ffn_dim(self) -> int:
        return 4 * self.d_model

    @property
    def obs_tokens(self) -> int:
        # per arm: pose token + grid_w force-row tokens + grid_h
        # deformation-column tokens; plus one latent token
        return self.arm_count * (1 + self.grid_w + self.grid_h) + 1

    def to_text(self) -> str:
        keys = ("d_model", "enc_layers", "dec_layers", "heads", "chunk_len",
                "arm_count", "latent_dim", "grid_w", "grid_h")
        return "".join(f"{k}={getattr(self, k)}\n" for k in keys)

    @classmethod
    def from_text(cls, text: str) -> "ArchDescriptor":
        kv = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            if "=" not in line:
                raise FormatError(f"bad descriptor line {line!r}")
            k, v = line.split("=", 1)
            kv[k.strip()] = int(v.strip())
        try:
            return cls(**kv)
        except TypeError as e:
            raise FormatError(f"bad descriptor keys: {e}") from None


def _attention_block(prefix: str, d: int) -> dict:
    shapes = {}
    for m in ("q", "k", "v", "o"):
        shapes[f"{prefix}.{m}_w"] = (d, d)
        shapes[f"{prefix}.{m}_b"] = (d,)
    return shapes


def expected_shapes(a: ArchDescriptor) -> dict:
    """Name -> shape map of every tensor the runtime requires."""
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
    # normalization of non-compliance action dims (identity by default)
    shapes["norm.action_mean"] = (a.action_dim,)
    shapes["norm.action_std"] = (a.action_dim,)
    return shapes


@dataclass
class WeightBundle:
    descriptor: ArchDescriptor
    tensors: dict = field(default_factory=dict)  # name -> float32 ndarray

    def __post_init__(self):
        self.validate()

    def validate(self):
        exp = expected_shapes(self.descriptor)
        missing = sorted(set(exp) - set(self.tensors))
        if missing:
            raise ShapeError(f"missing tensors: {missing[:5]}...")
        extra = sorted(set(self.tensors) - set(exp))
        if extra:
            raise ShapeError(f"unexpected tensors: {extra[:5]}")
        for name, shape in exp.items():
            got = self.tensors[name].shape
            if got != shape:
                raise ShapeError(f"{name}: shape {got}, expected {shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


def save_bundle(bundle: WeightBundle) -> bytes:
    bundle.validate()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    desc = bundle.descriptor.to_text().encode()
    buf.write(struct.pack("<I", len(desc)))
    buf.write(desc)
    names = sorted(bundle.tensors)
    buf.write(struct.pack("<I", len(names)))
    data = io.BytesIO()
    for name in names:
        t = np.ascontiguousarray(bundle.tensors[name], dtype="<f4")
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", t.ndim))
        for dim in t.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(struct.pack("<Q", data.tell()))
        data.write(t.tobytes())
    payload = data.getvalue()
    buf.write(struct.pack("<Q", len(payload)))
    buf.write(payload)
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def load_bundle(raw: bytes) -> WeightBundle:
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise FormatError("bad magic; not a CFA1 bundle")
    body, crc = raw[:-4], raw[-4:]
    if struct.unpack("<I", crc)[0] != zlib.crc32(body):
        raise CorruptionError("CRC-32 mismatch")
    off = 4
    (version,) = struct.unpack_from("<I", body, off); off += 4
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    (dlen,) = struct.unpack_from("<I", body, off); off += 4
    descriptor = ArchDescriptor.from_text(body[off:off + dlen].decode()); off += dlen
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
    if len(data) != data_len:
        raise CorruptionError("truncated data section")
    tensors = {}
    for name, dims, doff in entries:
        n = int(np.prod(dims)) if dims else 1
        end = doff + 4 * n
        if end > data_len:
            raise CorruptionError(f"tensor {name} extends past data section")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=n,
                                      offset=doff).reshape(dims).copy()
    bundle = WeightBundle(descriptor=descriptor, tensors=tensors)
    bundle.validate()
    return bundle


def seeded_bundle(seed: int, descriptor: ArchDescriptor | None = None) -> WeightBundle:
    """Deterministic random-init bundle (scaled normal, identity norms)."""
    a = descriptor or ArchDescriptor()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in expected_shapes(a).items():
        if name.endswith(("_g", ".g")) or name == "norm.action_std":
            t = np.ones(shape, dtype=np.float32)
        elif name.endswith("_b") or name.endswith(".b1") or \
                name.endswith(".b2") or name == "norm.action_mean":
            t = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = shape[0] if len(shape) > 1 else 1
            t = (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(np.float32)
        tensors[name] = t
    return WeightBundle(descriptor=a, tensors=tensors)
