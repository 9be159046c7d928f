"""Dual-loop compliance controller.

Outer loop: force error drives a virtual mass-damper-spring admittance
whose displacement offsets a model-based indentation feedforward (plus a
slow integral trim that removes residual model error). Inner loop:
reaction-diffusion boundary control integrates the deformation tracking
error into the Dirichlet indentation command. Safety clamps cap the
commanded depth so the predicted steady force stays under the limit.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from . import sim as simmod
from . import tactile
from .errors import ConfigurationError, NumericError
from .observer import AmortizedIdentifier, HistoryBuffer, Sample
from .sim import ContactCommand, MaterialParams, SurfaceState

LAMBDA1_RANGE = (50.0, 500.0)   # N/m
LAMBDA2_RANGE = (0.1, 5.0)      # N*s/m
EPS_RANGE = (0.01, 0.1)         # m^2/s


@dataclass(frozen=True)
class ComplianceParams:
    lambda1: float  # stiffness N/m
    lambda2: float  # damping N*s/m
    eps: float      # diffusion m^2/s

    def __post_init__(self):
        for name, v, rng in (("lambda1", self.lambda1, LAMBDA1_RANGE),
                             ("lambda2", self.lambda2, LAMBDA2_RANGE),
                             ("eps", self.eps, EPS_RANGE)):
            if not rng[0] <= v <= rng[1]:
                raise ConfigurationError(
                    f"{name}={v} outside [{rng[0]}, {rng[1]}]")

    def as_array(self):
        return np.array([self.lambda1, self.lambda2, self.eps])


PRESETS = {
    "Low": ComplianceParams(60.0, 0.3, 0.08),
    "Mid": ComplianceParams(250.0, 2.0, 0.05),
    "High": ComplianceParams(480.0, 4.0, 0.02),
}
PRESET_NAMES = ("Low", "Mid", "High")


def nearest_preset(lambda1: float) -> str:
    """Preset whose stiffness is closest to the given lambda1."""
    return min(PRESET_NAMES, key=lambda n: abs(PRESETS[n].lambda1 - lambda1))


@dataclass(frozen=True)
class AdmittanceState:
    ref_depth: float = 0.0      # m
    ref_velocity: float = 0.0   # m/s
    virtual_mass: float = 1.0   # kg
    max_depth: float = 0.015    # m, safe deformation cap
    saturated: bool = False


def admittance_step(a: AdmittanceState, f_des: float, f_meas: float,
                    c: ComplianceParams, dt: float) -> AdmittanceState:
    """Exact discrete update of M x'' + lambda2 x' + lambda1 x = f_err.

    The 2x2 system is integrated with its matrix exponential (zero-order
    hold on the force error), so the step is passive for any dt and
    matches a fine-step reference integration to roundoff.
    """
    if not (0.0 < dt <= simmod.MAX_DT):
        raise ConfigurationError("dt must lie in (0, 10 ms]")
    if not (np.isfinite(f_des) and np.isfinite(f_meas)):
        raise NumericError("non-finite force input")
    f_err = f_des - f_meas
    M = a.virtual_mass
    A = np.array([[0.0, 1.0], [-c.lambda1 / M, -c.lambda2 / M]])
    z_eq = np.array([f_err / c.lambda1, 0.0])
    z = np.array([a.ref_depth, a.ref_velocity])
    z_new = expm(A * dt) @ (z - z_eq) + z_eq
    depth, vel = float(z_new[0]), float(z_new[1])
    saturated = False
    if depth < 0.0:
        depth, saturated = 0.0, True
    elif depth > a.max_depth:
        depth, saturated = a.max_depth, True
    return replace(a, ref_depth=depth, ref_velocity=vel, saturated=saturated)


def admittance_energy(a: AdmittanceState, c: ComplianceParams) -> float:
    return 0.5 * a.virtual_mass * a.ref_velocity ** 2 + 0.5 * c.lambda1 * a.ref_depth ** 2


FLAT_PUNCH = "FlatPunch"
SPHERICAL_CAP = "SphericalCap"


def synthesize_reference(template: str, depth: float, mask: np.ndarray,
                         cap_radius_cells: float = 4.0) -> np.ndarray:
    """Analytic Dirichlet indentation profile over the mask (m)."""
    if depth < 0:
        raise ConfigurationError("depth must be >= 0")
    out = np.zeros(mask.shape)
    if depth == 0.0 or not mask.any():
        return out
    if template == FLAT_PUNCH:
        out[mask] = depth
    elif template == SPHERICAL_CAP:
        idx = np.argwhere(mask)
        center = idx.mean(axis=0)
        r2 = ((idx - center) ** 2).sum(axis=1)
        prof = depth * np.maximum(1.0 - r2 / cap_radius_cells ** 2, 0.0)
        out[idx[:, 0], idx[:, 1]] = prof
    else:
        raise ConfigurationError(f"unknown template {template!r}")
    return out


@lru_cache(maxsize=256)
def _masked_smoother(mask_bytes: bytes, shape, h: float, eps_dt: float):
    """Inverse of (I + eps*dt*A) on the masked subset, A = -laplacian.

    The Laplacian sees Neumann conditions at the patch edge, so constants
    pass through unchanged.
    """
    mask = np.frombuffer(mask_bytes, dtype=bool).reshape(shape)
    idx = np.argwhere(mask)
    n = len(idx)
    pos = {tuple(p): k for k, p in enumerate(idx)}
    A = np.zeros((n, n))
    inv_h2 = 1.0 / (h * h)
    for k, (i, j) in enumerate(idx):
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = (i + di, j + dj)
            if nb in pos:
                A[k, k] += inv_h2
                A[k, pos[nb]] -= inv_h2
    return np.linalg.inv(np.eye(n) + eps_dt * A)


def inner_boundary_step(u: ContactCommand, phi_ref: np.ndarray,
                        phi_meas: np.ndarray, eps: float, dt: float,
                        k_p: float = 5.0, h: float = 2e-3) -> ContactCommand:
    """Reaction-diffusion boundary update of the indentation command.

    The tracking error decays by a proportional term plus an implicit
    diffusion term restricted to the contact patch (Neumann at the patch
    edge), giving unconditional stability at the 10 ms cycle. For a
    spatially uniform error this reduces exactly to u + dt*k_p*e.
    """
    if phi_ref.shape != phi_meas.shape or phi_ref.shape != u.mask.shape:
        raise ConfigurationError("inner-loop grid mismatch")
    e = np.where(u.mask, phi_ref - phi_meas, 0.0)
    if u.mask.any() and eps > 0.0:
        S = _masked_smoother(u.mask.tobytes(), u.mask.shape, h, eps * dt)
        ev = e[u.mask]
        diffused = ev - S @ ev  # ~ -dt*eps*lap(e), implicit
    else:
        diffused = 0.0
    upd = u.indentation.copy()
    if u.mask.any():
        upd[u.mask] = upd[u.mask] + dt * k_p * e[u.mask] + np.asarray(diffused)
    new_ind = np.where(u.mask, np.maximum(upd, 0.0), 0.0)
    return ContactCommand(indentation=new_ind, mask=u.mask,
                          tangential_velocity=u.tangential_velocity)


@dataclass(frozen=True)
class SafetyLimits:
    max_force: float = 15.0   # N
    max_depth: float = 0.015  # m


def safety_clamp(cmd: ContactCommand, limits: SafetyLimits,
                 k_e: float, h: float = 2e-3):
    """Cap commanded depth so predicted steady force k_e*depth*area <= max."""
    if limits.max_force <= 0 or limits.max_depth <= 0:
        raise ConfigurationError("safety limits must be positive")
    violations = []
    ind = cmd.indentation
    if np.any(ind > limits.max_depth):
        violations.append("depth")
        ind = np.minimum(ind, limits.max_depth)
    area = cmd.mask.sum() * h ** 2
    predicted = k_e * float(np.sum(ind[cmd.mask])) / max(cmd.mask.sum(), 1) * area
    if predicted > limits.max_force and predicted > 0:
        violations.append("force")
        ind = ind * (limits.max_force / predicted)
    if violations:
        cmd = ContactCommand(indentation=ind, mask=cmd.mask,
                             tangential_velocity=cmd.tangential_velocity)
    return cmd, violations


@dataclass
class CycleLog:
    t: float
    f_des: float
    f_meas: float
    ref_depth: float
    preset: str
    compliance: ComplianceParams
    violations: list
    observer_params: MaterialParams
    observer_confident: bool
    applied_depth: float = 0.0  # mean indentation actually sent to the plant


class ControlLoop:
    """100 Hz force/deformation regulation loop over one contact patch.

    Owns the simulator state, the amortized observer, and both control
    loops. One cycle() call advances the plant by one control period.
    """

    CYCLE_DT = 0.010  # s

    def __init__(self, state: SurfaceState, material: MaterialParams,
                 mask: np.ndarray, f_des: float,
                 preset: str = "Mid",
                 model: MaterialParams | None = None,
                 limits: SafetyLimits = SafetyLimits(),
                 template: str = FLAT_PUNCH,
                 integral_gain: float = 3.0,
                 engage_ramp_s: float = 0.3,
                 sensor: tactile.TactileSensor | None = None,
                 observer_enabled: bool = True):
        self.state = state
        self.material = material          # plant truth (not read by control path)
        self.mask = mask
        self.f_des = f_des
        self.preset = preset
        self.limits = limits
        self.template = template
        self.model = model if model is not None else material
        self.identifier = AmortizedIdentifier(self.model)
        self.observer_enabled = observer_enabled
        self.buffer = HistoryBuffer()
        self.adm = AdmittanceState(max_depth=limits.max_depth)
        self.d_int = 0.0
        self.ki = integral_gain
        self.engage_ramp_s = engage_ramp_s
        self.cmd = ContactCommand(indentation=np.zeros(mask.shape), mask=mask)
        self.sensor = sensor
        self.t = 0.0
        self._engage_t0 = None
        self._nodes = None
        self.last_force_field = None
        self.last_deform_field = None
        self.last_applied = self.cmd
        self.logs: list[CycleLog] = []

    @property
    def compliance(self) -> ComplianceParams:
        return PRESETS[self.preset]

    def _contact_area(self) -> float:
        return float(self.mask.sum()) * self.state.h ** 2

    def _select_nodes(self):
        p = simmod.pressure_field(self.state, self.material)
        masked = np.where(self.mask, p, -np.inf).reshape(-1)
        order = np.argsort(masked)[::-1][:5]
        self._nodes = np.unravel_index(order, self.mask.shape)

    def _push_sample(self):
        if self._nodes is None:
            self._select_nodes()
        ii, jj = self._nodes
        if self.last_force_field is not None:
            p_meas = self.last_force_field.pressures * 1e3
        else:
            p_meas = simmod.pressure_field(self.state, self.material)
        self.buffer.push(Sample(
            t=self.t,
            phi=self.state.phi[ii, jj].copy(),
            phi_dot=self.state.phi_dot[ii, jj].copy(),
            pressure=p_meas[ii, jj].copy(),
            phi_field=self.state.phi.copy(),
            contact_mask=self.state.contact_mask.copy(),
            grid_h=self.state.h))

    def cycle(self, height_disturbance: float = 0.0) -> CycleLog:
        dt = self.CYCLE_DT
        c = self.compliance
        f_meas = simmod.contact_force(self.state, self.material)

        # tactile read: exactly one per cycle so replay stays bit-exact
        if self.sensor is not None:
            self.last_force_field, self.last_deform_field = \
                self.sensor.read(self.state, self.material, self.t)

        # observer: one amortized step per cycle
        if self.state.contact_mask.any():
            self._push_sample()
            if self.observer_enabled:
                est = self.identifier.tick(self.buffer)
                if est.confident:
                    self.model = est.params

        # outer loop: soft-started force target, feedforward + admittance
        # + integral trim against residual model error
        area = self._contact_area()
        if self._engage_t0 is None:
            self._engage_t0 = self.t
        ramp = min((self.t - self._engage_t0) / self.engage_ramp_s, 1.0) \
            if self.engage_ramp_s > 0 else 1.0
        f_target = ramp * self.f_des
        d_ff = f_target / (self.model.k_e * area) if area > 0 else 0.0
        self.adm = admittance_step(self.adm, f_target, f_meas, c, dt)
        if area > 0:
            self.d_int += self.ki * (f_target - f_meas) / (self.model.k_e * area) * dt
            cap = abs(self.f_des) / (self.model.k_e * area)
            self.d_int = float(np.clip(self.d_int, -cap, cap))
        depth = max(d_ff + self.d_int + self.adm.ref_depth, 0.0)

        # inner loop: track the analytic reference profile
        phi_ref = synthesize_reference(self.template, depth, self.mask)
        cmd = ContactCommand(indentation=self.cmd.indentation, mask=self.mask,
                             tangential_velocity=self.cmd.tangential_velocity)
        cmd = inner_boundary_step(cmd, phi_ref, self.state.phi, c.eps, dt,
                                  h=self.state.h)
        cmd, violations = safety_clamp(cmd, self.limits, self.model.k_e,
                                       self.state.h)
        self.cmd = cmd

        # plant: apply external height disturbance on top of the command
        applied = cmd
        if height_disturbance != 0.0:
            ind = np.where(cmd.mask,
                           np.maximum(cmd.indentation + height_disturbance, 0.0),
                           0.0)
            applied = ContactCommand(indentation=ind, mask=cmd.mask,
                                     tangential_velocity=cmd.tangential_velocity)
        self.last_applied = applied
        self.state = simmod.step(self.state, applied, self.material, dt)
        self.t += dt

        n_mask = max(int(applied.mask.sum()), 1)
        applied_depth = float(np.sum(applied.indentation[applied.mask])) / n_mask
        est = self.identifier.estimate
        log = CycleLog(t=self.t, f_des=self.f_des, f_meas=f_meas,
                       ref_depth=depth, preset=self.preset, compliance=c,
                       violations=violations, observer_params=est.params,
                       observer_confident=est.confident,
                       applied_depth=applied_depth)
        self.logs.append(log)
        return log

    def set_preset(self, name: str):
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}")
        self.preset = name

    def set_target(self, f_des: float, reset_ramp: bool = True):
        self.f_des = f_des
        if reset_ramp:
            self._engage_t0 = None

    def set_mask(self, mask: np.ndarray, carry_depth: bool = True):
        if mask.shape != self.mask.shape:
            raise ConfigurationError("mask shape mismatch")
        if np.array_equal(mask, self.mask):
            return
        depth = 0.0
        if carry_depth and self.mask.any():
            depth = float(np.mean(self.cmd.indentation[self.mask]))
        ind = np.where(mask, depth, 0.0)
        self.mask = mask
        self.cmd = ContactCommand(indentation=ind, mask=mask)
        self.buffer.clear()
        self._nodes = None
