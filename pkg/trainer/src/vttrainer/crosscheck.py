"""Trainer-side reference inference checked against the runtime.

The exported bundle must produce the same raw outputs through the torch
decoder (zero latent) and through the runtime's numpy forward; the
float32 accumulation-order tolerance is 1e-4.
"""
from __future__ import annotations

import numpy as np
import torch

from .bundle import read_bundle, Arch
from .model import PolicyModel, _key

TOLERANCE = 1e-4


class CrossCheckError(Exception):
    pass


def model_from_bundle(raw: bytes) -> tuple:
    kv, tensors = read_bundle(raw)
    arch = Arch(**{k: kv[k] for k in ("d_model", "enc_layers", "dec_layers",
                                      "heads", "chunk_len", "arm_count",
                                      "latent_dim", "grid_w", "grid_h")})
    model = PolicyModel(arch)
    with torch.no_grad():
        for name in list(model.params.keys()):
            dotted = name.replace("__", ".")
            model.params[name].copy_(torch.as_tensor(tensors[dotted]))
    model.eval()
    return model, arch, tensors


def torch_raw(model: PolicyModel, arch: Arch, pose, force, deform):
    tp = torch.as_tensor(np.asarray(pose, dtype=np.float32)).unsqueeze(0)
    tf = torch.as_tensor(np.asarray(force, dtype=np.float32)) \
        .reshape(1, arch.arm_count, arch.grid_w, arch.grid_h)
    td = torch.as_tensor(np.asarray(deform, dtype=np.float32)) \
        .reshape(1, arch.arm_count, arch.grid_w, arch.grid_h)
    z = torch.zeros(1, arch.latent_dim)
    with torch.no_grad():
        return model.decode(tp, tf, td, z)[0].numpy()


def _first_divergent_layer(model, arch, pose, force, deform):
    """Name the first block whose float32 output drifts from float64."""
    m64 = PolicyModel(arch).double()
    with torch.no_grad():
        for name in list(m64.params.keys()):
            m64.params[name].copy_(model.params[name].double())
    tp32 = torch.as_tensor(np.asarray(pose, dtype=np.float32)).unsqueeze(0)
    tf32 = torch.as_tensor(np.asarray(force, dtype=np.float32)) \
        .reshape(1, arch.arm_count, arch.grid_w, arch.grid_h)
    td32 = torch.as_tensor(np.asarray(deform, dtype=np.float32)) \
        .reshape(1, arch.arm_count, arch.grid_w, arch.grid_h)
    with torch.no_grad():
        x32 = model.obs_tokens(tp32, tf32, td32,
                               torch.zeros(1, arch.latent_dim))
        x64 = m64.obs_tokens(tp32.double(), tf32.double(), td32.double(),
                             torch.zeros(1, arch.latent_dim).double())
        for i in range(arch.enc_layers):
            p = f"enc.{i}"
            for m, x in ((model, x32), (m64, x64)):
                hx = m._ln(x, m.w(f"{p}.ln1_g"), m.w(f"{p}.ln1_b"))
                x = x + m._attention(hx, hx, f"{p}.attn")
                hx = m._ln(x, m.w(f"{p}.ln2_g"), m.w(f"{p}.ln2_b"))
                x = x + m._ffn(hx, f"{p}.ffn")
                if m is model:
                    x32 = x
                else:
                    x64 = x
            if float((x32.double() - x64).abs().max()) > TOLERANCE / 10:
                return p
    return "head"


def cross_check(bundle_raw: bytes, fixtures: list) -> dict:
    """fixtures: (pose, force kPa, deform mm) triples. Returns the report."""
    from viscotact import policy as rt_policy
    from viscotact import tactile as rt_tactile
    from viscotact import weights as rt_weights

    model, arch, _ = model_from_bundle(bundle_raw)
    rt_bundle = rt_weights.load_bundle(bundle_raw)
    devs = []
    for pose, force, deform in fixtures:
        ours = torch_raw(model, arch, pose, force, deform)
        obs = rt_policy.Observation(
            current_pose=np.asarray(pose, dtype=float),
            force_field=rt_tactile.ForceField(
                pressures=np.asarray(force, dtype=np.float64), timestamp=0.0),
            deformation_field=rt_tactile.DeformationField(
                displacements=np.asarray(deform, dtype=np.float64),
                timestamp=0.0))
        theirs = rt_policy.forward(obs, rt_bundle)
        dev = float(np.max(np.abs(ours - theirs)))
        if dev >= TOLERANCE:
            layer = _first_divergent_layer(model, arch, pose, force, deform)
            raise CrossCheckError(
                f"deviation {dev:.3e} >= {TOLERANCE}; first divergent "
                f"layer: {layer}")
        devs.append(dev)
    return {"tolerance": TOLERANCE, "deviations": devs,
            "max_deviation": max(devs) if devs else 0.0}
