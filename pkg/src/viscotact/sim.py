"""Viscoelastic surface integrator.

The pad is a W x H grid of through-thickness standard-linear-solid
elements (spring k_e and dashpot k_v in parallel, plus a Maxwell branch
k_m / tau) coupled laterally by diffusion of the deformation field:

    contact nodes:  phi = commanded indentation (Dirichlet)
    free nodes:     d(phi)/dt = D * lap(phi) - (k_e / k_v) * phi

The free-node update is backward Euler (unconditionally stable); the
Maxwell stress uses the exact exponential update over the step. Per-node
pressure is p = k_e*phi + k_v*phi_dot + sigma_m.
"""
from __future__ import annotations

import math

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import grid as gridops
from .errors import ConfigurationError, NumericError

MAX_DT = 0.010  # s, the control cycle period is the coarsest legal step


@dataclass(frozen=True)
class MaterialParams:
    """Constitutive constants of the pad (densities per meter of indentation)."""

    k_e: float = 2.0e6   # Pa/m elastic
    k_v: float = 1.0e4   # Pa*s/m viscous
    k_m: float = 5.0e5   # Pa/m Maxwell branch
    tau: float = 0.5     # s Maxwell relaxation time
    D: float = 0.02      # m^2/s lateral diffusion

    def __post_init__(self):
        for name in ("k_e", "k_v", "k_m", "tau", "D"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise NumericError(f"material {name} is not finite")
        if min(self.k_e, self.k_v, self.k_m, self.tau) <= 0:
            raise ConfigurationError("material constants must be strictly positive")
        if self.tau < 1e-3:
            raise ConfigurationError("tau must be >= 1e-3 s")
        if not 0.0 <= self.D <= 1.0:
            raise ConfigurationError("D must lie in [0, 1] m^2/s")

    def as_tuple(self):
        return (self.k_e, self.k_v, self.k_m, self.tau, self.D)


@dataclass(frozen=True)
class SurfaceState:
    phi: np.ndarray          # deformation (m), shape (W, H)
    phi_dot: np.ndarray      # deformation rate (m/s)
    sigma_m: np.ndarray      # Maxwell stress (Pa)
    contact_mask: np.ndarray  # bool
    h: float = 2e-3          # node spacing (m)
    bc: str = gridops.NEUMANN

    @property
    def shape(self):
        return self.phi.shape

    def validate(self):
        shapes = {self.phi.shape, self.phi_dot.shape, self.sigma_m.shape,
                  self.contact_mask.shape}
        if len(shapes) != 1:
            raise ConfigurationError("surface grids have mismatched shapes")
        for name, arr in (("phi", self.phi), ("phi_dot", self.phi_dot),
                          ("sigma_m", self.sigma_m)):
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite values in {name}")
        if np.any(self.phi < -1e-12):
            raise NumericError("negative deformation")


def zero_state(W: int = 12, H: int = 10, h: float = 2e-3,
               bc: str = gridops.NEUMANN) -> SurfaceState:
    z = np.zeros((W, H))
    return SurfaceState(phi=z, phi_dot=z.copy(), sigma_m=z.copy(),
                        contact_mask=np.zeros((W, H), dtype=bool), h=h, bc=bc)


@dataclass(frozen=True)
class ContactCommand:
    """Dirichlet indentation command over a contact mask."""

    indentation: np.ndarray             # m, zero off mask
    mask: np.ndarray                    # bool
    tangential_velocity: np.ndarray = field(
        default_factory=lambda: np.zeros(2))

    def validate(self, shape=None):
        if self.indentation.shape != self.mask.shape:
            raise ConfigurationError("indentation/mask shape mismatch")
        if shape is not None and self.mask.shape != shape:
            raise ConfigurationError("command grid does not match state grid")
        if not np.all(np.isfinite(self.indentation)):
            raise NumericError("non-finite indentation")
        if np.any(self.indentation[self.mask] < 0):
            raise ConfigurationError("indentation must be >= 0 on the mask")
        if np.any(self.indentation[~self.mask] != 0):
            raise ConfigurationError("indentation must be zero off the mask")


def no_contact(W: int = 12, H: int = 10) -> ContactCommand:
    return ContactCommand(indentation=np.zeros((W, H)),
                          mask=np.zeros((W, H), dtype=bool))


@lru_cache(maxsize=256)
def _factorized_step_matrix(W, H, h, bc, dt, k_e, k_v, D, mask_bytes):
    """LU factorization of the implicit step matrix for a fixed mask."""
    mask = np.frombuffer(mask_bytes, dtype=bool).reshape(W, H).reshape(-1)
    N = W * H
    L = gridops.laplacian(W, H, h, bc)
    c = k_e / k_v
    A = sp.identity(N, format="csr") * (1.0 + dt * c) - (dt * D) * L
    A = A.tolil()
    for k in np.nonzero(mask)[0]:
        A.rows[k] = [k]
        A.data[k] = [1.0]
    return spla.splu(A.tocsc())


@lru_cache(maxsize=256)
def _factorized_steady_matrix(W, H, h, bc, k_e, k_v, D, mask_bytes):
    mask = np.frombuffer(mask_bytes, dtype=bool).reshape(-1)
    N = W * H
    L = gridops.laplacian(W, H, h, bc)
    c = k_e / k_v
    A = (sp.identity(N, format="csr") * c - D * L).tolil()
    for k in np.nonzero(mask)[0]:
        A.rows[k] = [k]
        A.data[k] = [1.0]
    return spla.splu(A.tocsc())


def step(state: SurfaceState, cmd: ContactCommand, params: MaterialParams,
         dt: float) -> SurfaceState:
    """Advance the surface one implicit step under the contact command."""
    if not (0.0 < dt <= MAX_DT):
        raise ConfigurationError(f"dt must lie in (0, {MAX_DT}] s, got {dt}")
    state.validate()
    cmd.validate(state.shape)
    W, H = state.shape
    lu = _factorized_step_matrix(W, H, state.h, state.bc, dt,
                                 params.k_e, params.k_v, params.D,
                                 cmd.mask.tobytes())
    rhs = state.phi.reshape(-1).copy()
    flat_mask = cmd.mask.reshape(-1)
    rhs[flat_mask] = cmd.indentation.reshape(-1)[flat_mask]
    phi_new = lu.solve(rhs).reshape(W, H)
    phi_new = np.maximum(phi_new, 0.0)  # guards roundoff-level negatives

    dphi = phi_new - state.phi
    phi_dot = dphi / dt
    a = np.exp(-dt / params.tau)
    sigma_new = state.sigma_m * a + params.k_m * dphi * (params.tau / dt) * (1.0 - a)
    return SurfaceState(phi=phi_new, phi_dot=phi_dot, sigma_m=sigma_new,
                        contact_mask=cmd.mask.copy(), h=state.h, bc=state.bc)


def pressure_field(state: SurfaceState, params: MaterialParams) -> np.ndarray:
    """Per-node contact pressure (Pa)."""
    return params.k_e * state.phi + params.k_v * state.phi_dot + state.sigma_m


def contact_force(state: SurfaceState, params: MaterialParams) -> float:
    """Total normal force (N): pressure integrated over the contact mask.

    Exactly-rounded summation (fsum) so independent recomputations of the
    defining sum agree bit-for-bit.
    """
    p = pressure_field(state, params)
    F = math.fsum(p[state.contact_mask]) * state.h ** 2
    return max(F, 0.0)


def steady_state(cmd: ContactCommand, params: MaterialParams,
                 W: int = 12, H: int = 10, h: float = 2e-3,
                 bc: str = gridops.NEUMANN) -> SurfaceState:
    """Fixed point of step() under a held command (direct linear solve)."""
    cmd.validate((W, H))
    if not cmd.mask.any():
        return zero_state(W, H, h, bc)
    lu = _factorized_steady_matrix(W, H, h, bc, params.k_e, params.k_v,
                                   params.D, cmd.mask.tobytes())
    rhs = np.zeros(W * H)
    flat_mask = cmd.mask.reshape(-1)
    rhs[flat_mask] = cmd.indentation.reshape(-1)[flat_mask]
    phi = lu.solve(rhs).reshape(W, H)
    if not np.all(np.isfinite(phi)):
        raise NumericError("steady-state solve produced non-finite values")
    z = np.zeros((W, H))
    return SurfaceState(phi=np.maximum(phi, 0.0), phi_dot=z, sigma_m=z.copy(),
                        contact_mask=cmd.mask.copy(), h=h, bc=bc)


def energy(state: SurfaceState) -> float:
    """Field energy proxy sum(phi^2), used by the dissipativity invariant."""
    return float(np.sum(state.phi ** 2))


def replace_state(state: SurfaceState, **kw) -> SurfaceState:
    return replace(state, **kw)
