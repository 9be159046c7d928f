"""Versioned plain-text configuration (key = value).

Schema (all keys optional unless noted):

    config_version        required, currently 1
    grid.w, grid.h        sensor/pad grid dimensions (default 12 x 10)
    grid.spacing          node spacing in m (default 2e-3)
    grid.bc               neumann | dirichlet0
    material.k_e          Pa/m     material.k_v   Pa*s/m
    material.k_m          Pa/m     material.tau   s
    material.D            m^2/s
    controller.k_p        inner-loop proportional gain (1/s)
    controller.integral_gain
    controller.virtual_mass
    controller.max_force  N        controller.max_depth  m
    preset.<Name>.lambda1/.lambda2/.eps   compliance presets
    sensor.noise_rms      kPa      sensor.seed
    teleop.port, teleop.stream_hz, teleop.motion_scale
    # reserved for a second diffusion coefficient should the inner and
    # outer diffusion ever need to split:
    controller.eps_inner
"""
from __future__ import annotations

import hashlib

from .control import ComplianceParams, PRESETS, SafetyLimits
from .errors import ConfigurationError
from .sim import MaterialParams

CONFIG_VERSION = 1

DEFAULT_CONFIG = """\
config_version = 1
grid.w = 12
grid.h = 10
grid.spacing = 0.002
grid.bc = neumann
material.k_e = 2e6
material.k_v = 1e4
material.k_m = 5e5
material.tau = 0.5
material.D = 0.02
controller.k_p = 5.0
controller.integral_gain = 3.0
controller.virtual_mass = 1.0
controller.max_force = 15.0
controller.max_depth = 0.015
sensor.noise_rms = 0.2
sensor.seed = 0
teleop.port = 8765
teleop.stream_hz = 60
teleop.motion_scale = 1.5
"""


def parse_config(text: str) -> dict:
    """Parse key = value lines; '#' starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        k, v = (s.strip() for s in body.split("=", 1))
        if not k:
            raise ConfigurationError(f"line {lineno}: empty key")
        out[k] = v
    if "config_version" not in out:
        raise ConfigurationError("missing config_version")
    if int(out["config_version"]) != CONFIG_VERSION:
        raise ConfigurationError(
            f"unsupported config_version {out['config_version']}")
    return out


def load_config(path: str) -> dict:
    try:
        with open(path) as f:
            return parse_config(f.read())
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from None


def _get(cfg, key, default, cast=float):
    return cast(cfg.get(key, default))


def material_from_config(cfg: dict) -> MaterialParams:
    return MaterialParams(
        k_e=_get(cfg, "material.k_e", 2e6),
        k_v=_get(cfg, "material.k_v", 1e4),
        k_m=_get(cfg, "material.k_m", 5e5),
        tau=_get(cfg, "material.tau", 0.5),
        D=_get(cfg, "material.D", 0.02))


def grid_from_config(cfg: dict):
    return (_get(cfg, "grid.w", 12, int), _get(cfg, "grid.h", 10, int),
            _get(cfg, "grid.spacing", 2e-3), cfg.get("grid.bc", "neumann"))


def limits_from_config(cfg: dict) -> SafetyLimits:
    return SafetyLimits(max_force=_get(cfg, "controller.max_force", 15.0),
                        max_depth=_get(cfg, "controller.max_depth", 0.015))


def presets_from_config(cfg: dict) -> dict:
    presets = dict(PRESETS)
    names = {k.split(".")[1] for k in cfg if k.startswith("preset.")}
    for name in names:
        presets[name] = ComplianceParams(
            lambda1=float(cfg[f"preset.{name}.lambda1"]),
            lambda2=float(cfg[f"preset.{name}.lambda2"]),
            eps=float(cfg[f"preset.{name}.eps"]))
    return presets


def material_hash(params: MaterialParams) -> str:
    text = ",".join(f"{v:.12g}" for v in params.as_tuple())
    return hashlib.sha256(text.encode()).hexdigest()[:16]
