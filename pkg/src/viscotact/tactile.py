"""Tactile sensor emulation: force/deformation fields and scalar features.

The sensor reports a 12 x 10 pressure field hard-clamped to [0, 50] kPa
and a displacement field in millimeters. Smoothing solves the screened
Poisson system (I - lambda*lap) x = raw with Neumann edges, which keeps
the field mean exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import grid as gridops
from . import sim
from .errors import ConfigurationError, NumericError

SENSOR_W, SENSOR_H = 12, 10
PRESSURE_MAX_KPA = 50.0
SAMPLE_RATE_HZ = 200.0


@dataclass(frozen=True)
class ForceField:
    pressures: np.ndarray  # kPa, (12, 10)
    timestamp: float = 0.0

    def __post_init__(self):
        if self.pressures.shape != (SENSOR_W, SENSOR_H):
            raise ConfigurationError(
                f"force field must be {SENSOR_W}x{SENSOR_H}, got {self.pressures.shape}")
        if np.any(self.pressures < 0) or np.any(self.pressures > PRESSURE_MAX_KPA):
            raise ConfigurationError("pressures outside [0, 50] kPa")


@dataclass(frozen=True)
class DeformationField:
    displacements: np.ndarray  # mm, (12, 10)
    timestamp: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.displacements)):
            raise NumericError("non-finite displacements")
        if np.any(self.displacements < 0):
            raise ConfigurationError("displacements must be non-negative")


@dataclass(frozen=True)
class FieldFeatures:
    max_force: float          # kPa
    max_deformation: float    # mm
    force_centroid: np.ndarray  # grid units (i, j)
    asymmetry: float          # [0, 1]


def sample_force_field(state: sim.SurfaceState, params: sim.MaterialParams,
                       noise_rms: float = 0.0,
                       rng: np.random.Generator | None = None,
                       timestamp: float = 0.0) -> ForceField:
    """Project per-node pressure onto the sensor normal, add noise, clamp."""
    if state.shape != (SENSOR_W, SENSOR_H):
        raise ConfigurationError(
            f"state grid {state.shape} does not match sensor {SENSOR_W}x{SENSOR_H}")
    kpa = sim.pressure_field(state, params) / 1e3
    if noise_rms > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        kpa = kpa + rng.normal(0.0, noise_rms, size=kpa.shape)
    kpa = np.clip(kpa, 0.0, PRESSURE_MAX_KPA)
    return ForceField(pressures=kpa, timestamp=timestamp)


def sample_deformation_field(state: sim.SurfaceState,
                             timestamp: float = 0.0) -> DeformationField:
    if state.shape != (SENSOR_W, SENSOR_H):
        raise ConfigurationError("state grid does not match sensor")
    return DeformationField(displacements=state.phi * 1e3, timestamp=timestamp)


@dataclass
class TactileSensor:
    """Seeded sensor instance owning its noise stream (200 Hz nominal)."""

    noise_rms: float = 0.2  # kPa
    seed: int = 0
    rng: np.random.Generator = field(init=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)

    def read(self, state: sim.SurfaceState, params: sim.MaterialParams,
             timestamp: float = 0.0):
        f = sample_force_field(state, params, self.noise_rms, self.rng, timestamp)
        d = sample_deformation_field(state, timestamp)
        return f, d


def poisson_smooth(raw: DeformationField, lam: float,
                   h: float = 2e-3) -> DeformationField:
    """Screened-Poisson smoothing (I - lambda*lap) x = raw, Neumann edges."""
    if lam < 0:
        raise ConfigurationError("lambda must be >= 0")
    if lam == 0:
        return raw
    W, H = raw.displacements.shape
    L = gridops.laplacian(W, H, h, gridops.NEUMANN)
    A = sp.identity(W * H, format="csc") - lam * L
    x = spla.spsolve(A, raw.displacements.reshape(-1))
    if not np.all(np.isfinite(x)):
        raise NumericError("screened-Poisson solve failed")
    return DeformationField(displacements=np.maximum(x.reshape(W, H), 0.0),
                            timestamp=raw.timestamp)


def features(f: ForceField, d: DeformationField) -> FieldFeatures:
    """Max readings plus pressure centroid and its normalized offset."""
    W, H = f.pressures.shape
    center = np.array([(W - 1) / 2.0, (H - 1) / 2.0])
    total = float(f.pressures.sum())
    if total <= 0.0:
        centroid = center.copy()
    else:
        ii, jj = np.meshgrid(np.arange(W), np.arange(H), indexing="ij")
        centroid = np.array([float((ii * f.pressures).sum()),
                             float((jj * f.pressures).sum())]) / total
    half_diag = float(np.linalg.norm(center))
    asym = float(np.linalg.norm(centroid - center)) / half_diag
    return FieldFeatures(max_force=float(f.pressures.max()),
                         max_deformation=float(d.displacements.max()),
                         force_centroid=centroid,
                         asymmetry=min(asym, 1.0))
