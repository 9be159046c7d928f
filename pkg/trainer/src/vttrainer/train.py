"""Training entry point: episodes -> CVAE -> CFA1 bundle + loss curve."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np
import torch

from .bundle import Arch, write_bundle
from .episodes import load_manifest
from .model import PolicyModel, raw_targets


@dataclass
class TrainConfig:
    manifest: str
    epochs: int = 2000
    batch_size: int = 128
    chunk_len: int = 10
    latent_dim: int = 8
    beta: float = 1e-3
    lr: float = 1e-3
    seed: int = 7
    export_path: str = "policy.cfa1"
    loss_path: str = "loss_curve.txt"
    frame_stride: int = 1  # subsample chunk-start frames

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.chunk_len != Arch().chunk_len:
            raise ValueError(
                f"chunk length {self.chunk_len} does not match the runtime "
                f"descriptor ({Arch().chunk_len}); export refused")


def build_samples(episodes: dict, files: list, chunk_len: int,
                  stride: int = 1):
    """(pose, force, deform, target-chunk) tuples from chunk-start frames."""
    poses, forces, deforms, chunks, presets = [], [], [], [], []
    for name in files:
        frames = episodes[name].frames
        for k in range(0, len(frames) - chunk_len + 1, stride):
            fr = frames[k]
            poses.append(fr.pose)
            forces.append(fr.force)
            deforms.append(fr.deform)
            chunks.append([frames[k + j].action for j in range(chunk_len)])
            presets.append(fr.preset)
    return (np.asarray(poses, dtype=np.float64),
            np.asarray(forces, dtype=np.float64),
            np.asarray(deforms, dtype=np.float64),
            np.asarray(chunks, dtype=np.float64),
            presets)


def train(config: TrainConfig):
    """Returns (model, arch, stats, history); writes bundle + loss curve."""
    config.validate()
    episodes, splits, stats = load_manifest(config.manifest)
    if len(episodes) < 2:
        raise ValueError("training needs at least 2 episodes")
    first = next(iter(episodes.values()))
    arms = int(first.header["arm_count"])
    arch = Arch(arm_count=arms, latent_dim=config.latent_dim,
                chunk_len=config.chunk_len,
                grid_w=int(first.header["grid_w"]),
                grid_h=int(first.header["grid_h"]))
    mean = np.asarray(stats["action_mean"], dtype=np.float64)
    std = np.asarray(stats["action_std"], dtype=np.float64)

    poses, forces, deforms, chunks, _ = build_samples(
        episodes, splits["train"], config.chunk_len, config.frame_stride)
    targets = raw_targets(chunks, mean, std)

    torch.manual_seed(config.seed)
    model = PolicyModel(arch, seed=config.seed)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    gen = torch.Generator().manual_seed(config.seed)

    tp = torch.as_tensor(poses, dtype=torch.float32)
    tf = torch.as_tensor(forces, dtype=torch.float32).unsqueeze(1)
    td = torch.as_tensor(deforms, dtype=torch.float32).unsqueeze(1)
    tt = torch.as_tensor(targets, dtype=torch.float32)
    n = tp.shape[0]

    history = []
    for epoch in range(1, config.epochs + 1):
        perm = torch.randperm(n, generator=gen)
        tot_l2 = tot_kl = 0.0
        for i in range(0, n, config.batch_size):
            idx = perm[i:i + config.batch_size]
            mu, logvar = model.encode_style(tp[idx], tt[idx])
            z = mu + torch.exp(0.5 * logvar) \
                * torch.randn(mu.shape, generator=gen)
            pred = model.decode(tp[idx], tf[idx], td[idx], z)
            l2 = torch.mean((pred - tt[idx]) ** 2)
            kl = -0.5 * torch.mean(
                torch.sum(1 + logvar - mu ** 2 - torch.exp(logvar), dim=1))
            loss = l2 + config.beta * kl
            opt.zero_grad()
            loss.backward()
            opt.step()
            tot_l2 += float(l2.detach()) * len(idx)
            tot_kl += float(kl.detach()) * len(idx)
        history.append((epoch, tot_l2 / n + config.beta * tot_kl / n,
                        tot_l2 / n, tot_kl / n))

    with open(config.loss_path, "w") as f:
        f.write("epoch total l2 kl\n")
        for row in history:
            f.write("%d %.8g %.8g %.8g\n" % row)
    raw = write_bundle(arch, model.export_tensors(mean, std))
    with open(config.export_path, "wb") as f:
        f.write(raw)
    return model, arch, stats, history


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="viscotact-train")
    p.add_argument("--manifest", required=True)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--beta", type=float, default=1e-3)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default="policy.cfa1")
    p.add_argument("--loss-out", default="loss_curve.txt")
    p.add_argument("--stride", type=int, default=1)
    args = p.parse_args(argv)
    cfg = TrainConfig(manifest=args.manifest, epochs=args.epochs,
                      batch_size=args.batch_size, beta=args.beta,
                      lr=args.lr, seed=args.seed, export_path=args.out,
                      loss_path=args.loss_out, frame_stride=args.stride)
    _, _, _, history = train(cfg)
    first, last = history[0][1], history[-1][1]
    print(f"epochs {len(history)}  loss {first:.6g} -> {last:.6g} "
          f"({first / max(last, 1e-30):.1f}x)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
