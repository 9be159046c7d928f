"""Online identification of the pad material from force/deformation history.

Strategy: grid search over the Maxwell time constant (log grid 0.05-5 s,
25 points). For each candidate tau the unit-k_m Maxwell stress is
reconstructed recursively from the deformation increments, then
(k_e, k_v, k_m) follow from linear least squares against the measured
pressures. The candidate with the lowest residual wins. The diffusion
coefficient is fit separately from full-field snapshots when free nodes
carry excitation, otherwise the previous value is carried over.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import grid as gridops
from .errors import OrderingError, UsageError
from .sim import MaterialParams

TAU_GRID = np.logspace(np.log10(0.05), np.log10(5.0), 25)
MIN_SAMPLES = 50
RESIDUAL_REL_THRESHOLD = 0.02  # residual rms vs mean |pressure|


@dataclass(frozen=True)
class Sample:
    t: float
    phi: np.ndarray        # m, at the representative nodes
    phi_dot: np.ndarray    # m/s
    pressure: np.ndarray   # Pa
    # optional full-field snapshot used for the diffusion fit
    phi_field: Optional[np.ndarray] = None
    contact_mask: Optional[np.ndarray] = None
    grid_h: float = 2e-3


@dataclass
class HistoryBuffer:
    capacity: int = 400
    samples: deque = field(init=False)

    def __post_init__(self):
        self.samples = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self.samples)

    def push(self, sample: Sample) -> "HistoryBuffer":
        if self.samples and sample.t <= self.samples[-1].t:
            raise OrderingError(
                f"timestamp {sample.t} not after {self.samples[-1].t}")
        self.samples.append(sample)
        return self

    def clear(self):
        self.samples.clear()

    def snapshot(self) -> list:
        return list(self.samples)


@dataclass(frozen=True)
class ParamEstimate:
    params: MaterialParams
    residual_rms: float  # Pa
    confident: bool


def _reconstruct_unit_stress(ts, phis, tau):
    """Maxwell stress for k_m = 1, zero initial stress (quiescent start)."""
    n, m = phis.shape
    s = np.zeros((n, m))
    for k in range(1, n):
        dt = ts[k] - ts[k - 1]
        a = np.exp(-dt / tau)
        dphi = phis[k] - phis[k - 1]
        s[k] = s[k - 1] * a + dphi * (tau / dt) * (1.0 - a)
    return s


def _regress_for_tau(ts, phis, phidots, pressures, tau):
    """Least squares (k_e, k_v, k_m) for a fixed tau candidate."""
    s = _reconstruct_unit_stress(ts, phis, tau)
    X = np.column_stack([phis.reshape(-1), phidots.reshape(-1), s.reshape(-1)])
    y = pressures.reshape(-1)
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return coef, rms, rank


def fit_diffusion(samples, k_e, k_v, fallback: float) -> float:
    """Fit D from consecutive full-field snapshots on free nodes.

    Uses the implicit update relation of the integrator:
        phi1 - phi0 = dt * (D*lap(phi1) - (k_e/k_v)*phi1)   (free nodes)
    """
    c = k_e / k_v
    num, den = 0.0, 0.0
    prev = None
    for s in samples:
        if s.phi_field is None or s.contact_mask is None:
            continue
        if prev is not None:
            dt = s.t - prev.t
            lap = gridops.apply_laplacian(s.phi_field, s.grid_h)
            free = ~s.contact_mask
            a = (dt * lap[free]).ravel()
            b = (s.phi_field[free] - prev.phi_field[free]
                 + dt * c * s.phi_field[free]).ravel()
            num += float(a @ b)
            den += float(a @ a)
        prev = s
    if den < 1e-24:
        return fallback
    return min(max(num / den, 0.0), 1.0)


def identify(buf: HistoryBuffer, prev: MaterialParams | None = None,
             residual_threshold: float = RESIDUAL_REL_THRESHOLD) -> ParamEstimate:
    """Full tau-grid sweep over the buffered history."""
    samples = buf.snapshot()
    if len(samples) < MIN_SAMPLES:
        raise UsageError(
            f"need >= {MIN_SAMPLES} samples, have {len(samples)}")
    ts = np.array([s.t for s in samples])
    phis = np.stack([s.phi for s in samples])
    phidots = np.stack([s.phi_dot for s in samples])
    pressures = np.stack([s.pressure for s in samples])

    best = None
    for tau in TAU_GRID:
        coef, rms, rank = _regress_for_tau(ts, phis, phidots, pressures, tau)
        if best is None or rms < best[1]:
            best = (coef, rms, rank, tau)
    coef, rms, rank, tau = best

    mean_p = float(np.mean(np.abs(pressures)))
    confident = rank >= 3 and mean_p > 0 and rms <= residual_threshold * mean_p
    clamped = np.maximum(coef, (1.0, 1.0, 1.0))  # strictly positive floor
    if np.any(coef <= 0):
        confident = False
    k_e, k_v, k_m = (float(v) for v in clamped)
    D_prev = prev.D if prev is not None else 0.02
    D = fit_diffusion(samples, k_e, k_v, fallback=D_prev)
    params = MaterialParams(k_e=k_e, k_v=k_v, k_m=k_m,
                            tau=float(tau), D=max(D, 1e-6) if D == 0 else D)
    return ParamEstimate(params=params, residual_rms=rms, confident=confident)


class AmortizedIdentifier:
    """Spreads one tau sweep over 25 control cycles (one candidate per tick)."""

    def __init__(self, initial: MaterialParams,
                 residual_threshold: float = RESIDUAL_REL_THRESHOLD):
        self.estimate = ParamEstimate(params=initial, residual_rms=float("inf"),
                                      confident=False)
        self.residual_threshold = residual_threshold
        self._idx = 0
        self._frozen = None
        self._best = None

    def tick(self, buf: HistoryBuffer) -> ParamEstimate:
        if self._frozen is None:
            if len(buf) < MIN_SAMPLES:
                return self.estimate
            self._frozen = (
                np.array([s.t for s in buf.samples]),
                np.stack([s.phi for s in buf.samples]),
                np.stack([s.phi_dot for s in buf.samples]),
                np.stack([s.pressure for s in buf.samples]),
                buf.snapshot(),
            )
            self._idx = 0
            self._best = None
        ts, phis, phidots, pressures, samples = self._frozen
        tau = TAU_GRID[self._idx]
        coef, rms, rank = _regress_for_tau(ts, phis, phidots, pressures, tau)
        if self._best is None or rms < self._best[1]:
            self._best = (coef, rms, rank, tau)
        self._idx += 1
        if self._idx == len(TAU_GRID):
            coef, rms, rank, tau = self._best
            mean_p = float(np.mean(np.abs(pressures)))
            confident = (rank >= 3 and mean_p > 0
                         and rms <= self.residual_threshold * mean_p
                         and np.all(coef > 0))
            k_e, k_v, k_m = (float(v) for v in np.maximum(coef, 1.0))
            D = fit_diffusion(samples, k_e, k_v,
                              fallback=self.estimate.params.D)
            params = MaterialParams(k_e=k_e, k_v=k_v, k_m=k_m, tau=float(tau),
                                    D=max(D, 1e-6))
            self.estimate = ParamEstimate(params, rms, confident)
            self._frozen = None
        return self.estimate
