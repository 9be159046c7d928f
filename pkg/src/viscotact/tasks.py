"""Simulated contact tasks, scripted expert, and evaluation harness.

Tasks share one embodiment: a tool presses a viscoelastic pad through the
dual-loop controller at 100 Hz while task-level kinematics (traverse
position, peg alignment, fixture wobble) evolve on top. Policies differ
in how they schedule compliance presets and whether they exploit the
force-field observation:

    traj-only       frozen Mid preset (trajectory-only baseline)
    preset-sched    phase-scheduled presets, no field feedback
    fields          phase-scheduled presets + field-centroid feedback
    no-fields       scheduled presets with delayed phase switching and no
                    field feedback (fieldless co-prediction analog)
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import dataset, sim, tactile
from .control import PRESETS, ControlLoop, SafetyLimits
from .errors import ConfigurationError, GenerationError, UsageError
from .sim import ContactCommand, MaterialParams

TASK_IDS = ("PressHold", "Wipe", "Insert", "BimanualInsert")
POLICY_ROWS = ("traj-only", "preset-sched", "fields", "no-fields")
CYCLES_PER_FRAME = 10  # 100 Hz control, 10 Hz action frames
GRID_W, GRID_H, GRID_SPACING = 12, 10, 2e-3


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    f_des: float = 3.0
    time_limit: float = 10.0
    # phase -> preset, per arm ("right" drives the contact, "left" holds)
    preset_schedule: dict = field(default_factory=dict)
    # randomization bounds
    yaw_deg: float = 15.0          # peg yaw (Insert)
    mark_offset_cm: float = 5.0    # wipe mark placement
    hole_tol_mm: float = 2.0       # insertion tolerance
    # success parameters
    hold_band: float = 0.05        # PressHold relative force band
    hold_time: float = 1.0         # s in band
    wipe_band: tuple = (0.75, 1.25)
    wipe_in_band_min: float = 0.90
    insert_target_mm: float = 8.0
    max_peak_force: float = 15.0
    wobble_limit_mm: float = 1.5   # bimanual fixture stability


def default_spec(task_id: str, **overrides) -> TaskSpec:
    if task_id == "PressHold":
        sched = {"Approach": "Mid", "Contact": "Mid", "Engage": "High",
                 "Hold": "High", "Release": "Mid"}
        base = TaskSpec(task_id, f_des=3.0, time_limit=10.0,
                        preset_schedule=sched)
    elif task_id == "Wipe":
        sched = {"Approach": "Mid", "Contact": "Mid", "Engage": "Low",
                 "Traverse": "Low", "Release": "Mid"}
        base = TaskSpec(task_id, f_des=3.0, time_limit=14.0,
                        preset_schedule=sched)
    elif task_id == "Insert":
        sched = {"Approach": "Mid", "Contact": "Mid", "Engage": "Low",
                 "Insert": "Low", "Release": "Mid"}
        base = TaskSpec(task_id, f_des=3.0, time_limit=4.0,
                        preset_schedule=sched)
    elif task_id == "BimanualInsert":
        sched = {"Approach": "Mid", "Contact": "Mid", "Engage": "Low",
                 "Insert": "Low", "Release": "Mid",
                 "left.Approach": "Mid", "left.Contact": "Mid",
                 "left.Engage": "High", "left.Insert": "High",
                 "left.Release": "Mid"}
        base = TaskSpec(task_id, f_des=3.0, time_limit=4.0,
                        preset_schedule=sched)
    else:
        raise ConfigurationError(f"unknown task {task_id!r}")
    return replace(base, **overrides) if overrides else base


@dataclass
class TrialResult:
    success: bool
    phase_reached: str
    peak_force: float
    force_in_band_fraction: float
    wall_time: float
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PolicySpec:
    name: str
    scheduled: bool
    field_feedback: bool
    switch_delay: float = 0.0  # s, late preset switching (no-fields analog)
    # optional override: (loop, spec, phase, arm) -> preset name
    preset_fn: object = None


POLICIES = {
    "traj-only": PolicySpec("traj-only", scheduled=False, field_feedback=False),
    "preset-sched": PolicySpec("preset-sched", scheduled=True,
                               field_feedback=False),
    "fields": PolicySpec("fields", scheduled=True, field_feedback=True),
    "no-fields": PolicySpec("no-fields", scheduled=True, field_feedback=False,
                            switch_delay=0.5),
}


def _preset_for(policy: PolicySpec, spec: TaskSpec, phase: str,
                arm: str = "right", loop=None) -> str:
    if policy.preset_fn is not None:
        return policy.preset_fn(loop, spec, phase, arm)
    if not policy.scheduled:
        return "Mid"
    key = phase if arm == "right" else f"left.{phase}"
    return spec.preset_schedule.get(key, "Mid")


def _centered_mask(w_cells: int = 8, h_cells: int = 6,
                   shift_x: int = 0) -> np.ndarray:
    mask = np.zeros((GRID_W, GRID_H), dtype=bool)
    i0 = (GRID_W - w_cells) // 2 + shift_x
    j0 = (GRID_H - h_cells) // 2
    i0 = min(max(i0, 0), GRID_W - w_cells)
    mask[i0:i0 + w_cells, j0:j0 + h_cells] = True
    return mask


class _Recorder:
    """Accumulates 10 Hz frames during a rollout."""

    def __init__(self, spec: TaskSpec, seed: int, material: MaterialParams,
                 sensor_seed: int, noise_rms: float, arm_count: int = 1,
                 mask: np.ndarray | None = None):
        from .config import material_hash
        extra = {"highrate": 1, "noise_rms": noise_rms,
                 "sensor_seed": sensor_seed}
        for k, v in zip(("k_e", "k_v", "k_m", "tau", "D"),
                        material.as_tuple()):
            extra[f"material.{k}"] = repr(v)
        if mask is not None:
            idx = np.argwhere(mask)
            extra["mask_bbox"] = ",".join(map(str, (
                idx[:, 0].min(), idx[:, 0].max() + 1,
                idx[:, 1].min(), idx[:, 1].max() + 1)))
        self.header = dataset.make_header(
            spec.task_id, arm_count=arm_count, grid_w=GRID_W, grid_h=GRID_H,
            material_hash=material_hash(material), seed=seed, **extra)
        self.frames: list[dataset.Frame] = []
        self._base_i0 = int(np.argwhere(mask)[:, 0].min()) \
            if mask is not None else 0
        self._depths: list[float] = []
        self._shifts: list[int] = []

    def tick(self, loop: ControlLoop, t, pose, action, preset, phase):
        self._depths.append(loop.last_applied.indentation.reshape(-1).copy())
        i0 = int(np.argwhere(loop.mask)[:, 0].min()) if loop.mask.any() \
            else self._base_i0
        self._shifts.append(i0 - self._base_i0)
        if len(self._depths) == CYCLES_PER_FRAME:
            est = loop.identifier.estimate
            obs_ch = np.array(list(est.params.as_tuple())
                              + [est.residual_rms, float(est.confident)],
                              dtype=np.float32)
            log = loop.logs[-1]
            c = log.compliance
            ctl_ch = np.array([log.f_des, log.f_meas, log.ref_depth,
                               c.lambda1, c.lambda2, c.eps,
                               float(len(log.violations)), 0.0],
                              dtype=np.float32)
            self.frames.append(dataset.Frame(
                t=t, pose=np.asarray(pose, dtype=np.float32),
                force=loop.last_force_field.pressures.astype(np.float32),
                deform=loop.last_deform_field.displacements.astype(np.float32),
                action=np.asarray(action, dtype=np.float32),
                preset=preset, phase=phase,
                observer=obs_ch, controller=ctl_ch,
                highrate=np.stack(self._depths).astype(np.float64),
                hr_shift=np.array(self._shifts, dtype=np.int8)))
            self._depths = []
            self._shifts = []

    def episode(self) -> dataset.Episode:
        return dataset.Episode(header=self.header, frames=self.frames)


def _action_vector(x, y, depth, yaw, preset, grip=0.0) -> np.ndarray:
    joints = np.full(13, grip)
    comp = PRESETS[preset].as_array()
    return np.concatenate([[x, y, depth], [0.0, 0.0, yaw], joints, comp])


# --- PressHold ---------------------------------------------------------------

def _run_press_hold(spec: TaskSpec, policy: PolicySpec, seed: int,
                    record: bool = False):
    rng = np.random.default_rng(seed)
    material = MaterialParams()
    err = 1.0 + 0.10 * rng.choice([-1.0, 1.0])
    model0 = MaterialParams(k_e=material.k_e * err, k_v=material.k_v * err,
                            k_m=material.k_m * err, tau=material.tau,
                            D=material.D)
    mask = _centered_mask(8, 6)
    sensor_seed = seed + 17
    sensor = tactile.TactileSensor(noise_rms=0.2, seed=sensor_seed)
    loop = ControlLoop(sim.zero_state(GRID_W, GRID_H, GRID_SPACING),
                       material, mask, f_des=0.0, preset="Mid", model=model0,
                       sensor=sensor)
    rec = _Recorder(spec, seed, material, sensor_seed, 0.2, mask=mask) \
        if record else None

    phase = "Approach"
    phase_t = 0.0
    switch_pending = None
    in_band_t = 0.0
    band_time_total = 0.0
    contact_time = 0.0
    peak = 0.0
    n_cycles = int(round(spec.time_limit / ControlLoop.CYCLE_DT))
    t0 = time.perf_counter()
    success = False
    for k in range(n_cycles):
        want_phase = phase
        if phase == "Approach" and loop.t >= 0.3:
            want_phase = "Contact"
        elif phase == "Contact":
            want_phase = "Engage"
        elif phase == "Engage" and loop.logs and \
                abs(loop.logs[-1].f_meas - spec.f_des) <= spec.hold_band * spec.f_des:
            want_phase = "Hold"
        if want_phase != phase:
            if policy.switch_delay > 0.0 and switch_pending is None:
                switch_pending = (want_phase, loop.t + policy.switch_delay)
            elif policy.switch_delay == 0.0:
                phase = want_phase
                phase_t = loop.t
                if phase == "Contact":
                    loop.set_target(spec.f_des)
        if switch_pending is not None and loop.t >= switch_pending[1]:
            phase = switch_pending[0]
            phase_t = loop.t
            if phase == "Contact":
                loop.set_target(spec.f_des)
            switch_pending = None
        loop.set_preset(_preset_for(policy, spec, phase, loop=loop))
        log = loop.cycle()
        peak = max(peak, log.f_meas)
        if phase in ("Engage", "Hold"):
            contact_time += ControlLoop.CYCLE_DT
            if abs(log.f_meas - spec.f_des) <= spec.hold_band * spec.f_des:
                band_time_total += ControlLoop.CYCLE_DT
                in_band_t += ControlLoop.CYCLE_DT
            else:
                in_band_t = 0.0
            if phase == "Hold" and in_band_t >= spec.hold_time:
                success = True
        if rec is not None:
            action = _action_vector(0.0, 0.0, log.applied_depth, 0.0,
                                    loop.preset)
            rec.tick(loop, loop.t, [0.0, 0.0, log.applied_depth, 0, 0, 0],
                     action, loop.preset, phase)
        if success:
            break
    wall = time.perf_counter() - t0
    frac = band_time_total / contact_time if contact_time > 0 else 0.0
    result = TrialResult(success=success, phase_reached=phase,
                         peak_force=peak, force_in_band_fraction=frac,
                         wall_time=wall,
                         detail={"model_err": err})
    return result, (rec.episode() if rec else None)


# --- Wipe --------------------------------------------------------------------

# board undulation: per-mode amplitude (m) and spatial frequency (rad/m)
WIPE_AMP_RANGE = (8.0e-3, 12.0e-3)
WIPE_FREQ_RANGE = (60.0, 100.0)


def _run_wipe(spec: TaskSpec, policy: PolicySpec, seed: int,
              record: bool = False):
    rng = np.random.default_rng(seed)
    material = MaterialParams()
    err = 1.0 + 0.10 * rng.choice([-1.0, 1.0])
    model0 = MaterialParams(k_e=material.k_e * err, k_v=material.k_v * err,
                            k_m=material.k_m * err, tau=material.tau,
                            D=material.D)
    mark_offset = float(rng.uniform(-spec.mark_offset_cm, spec.mark_offset_cm)) / 100.0
    # board height profile along the wipe path: smooth random undulation
    n_modes = 3
    amp = rng.uniform(*WIPE_AMP_RANGE, size=n_modes)
    freq = rng.uniform(*WIPE_FREQ_RANGE, size=n_modes)  # rad/m along the path
    ph = rng.uniform(0.0, 2 * np.pi, size=n_modes)

    def board_height(s):
        return float(np.sum(amp * np.sin(freq * s + ph)))

    path_len = 0.12 + abs(mark_offset)  # m, covers the mark
    v_wipe = 0.04                       # m/s
    mask = _centered_mask(8, 6)
    sensor_seed = seed + 17
    sensor = tactile.TactileSensor(noise_rms=0.2, seed=sensor_seed)
    loop = ControlLoop(sim.zero_state(GRID_W, GRID_H, GRID_SPACING),
                       material, mask, f_des=0.0, preset="Mid", model=model0,
                       sensor=sensor)
    rec = _Recorder(spec, seed, material, sensor_seed, 0.2, mask=mask) \
        if record else None

    # arm stiffness in series with the contact: only a fraction of a board
    # height change reaches the pad before the loops react
    k_contact = material.k_e * float(mask.sum()) * GRID_SPACING ** 2

    phase = "Approach"
    s_pos = 0.0
    switch_at = {}
    settled = 0
    in_band = 0
    traverse_cycles = 0
    peak = 0.0
    n_cycles = int(round(spec.time_limit / ControlLoop.CYCLE_DT))
    t0 = time.perf_counter()
    done = False
    for k in range(n_cycles):
        if loop.logs and abs(loop.logs[-1].f_meas - spec.f_des) <= 0.05 * spec.f_des:
            settled += 1
        else:
            settled = 0
        want = phase
        if phase == "Approach" and loop.t >= 0.3:
            want = "Contact"
        elif phase == "Contact":
            want = "Engage"
        elif phase == "Engage" and settled >= 50:
            want = "Traverse"
        elif phase == "Traverse" and s_pos >= path_len:
            want = "Release"
        if want != phase:
            due = switch_at.setdefault(want, loop.t + policy.switch_delay)
            if loop.t >= due:
                phase = want
                if phase == "Contact":
                    loop.set_target(spec.f_des)
                if phase == "Release":
                    loop.set_target(0.0)
        loop.set_preset(_preset_for(policy, spec, phase, loop=loop))
        dist = 0.0
        if phase == "Traverse":
            s_pos += v_wipe * ControlLoop.CYCLE_DT
            lam1 = loop.compliance.lambda1
            dist = board_height(s_pos) * lam1 / (lam1 + k_contact)
        log = loop.cycle(height_disturbance=dist)
        peak = max(peak, log.f_meas)
        if phase == "Traverse":
            traverse_cycles += 1
            lo, hi = spec.wipe_band
            if lo * spec.f_des <= log.f_meas <= hi * spec.f_des:
                in_band += 1
        if rec is not None:
            action = _action_vector(s_pos, 0.0, log.applied_depth, 0.0,
                                    loop.preset)
            rec.tick(loop, loop.t, [s_pos, 0.0, log.applied_depth, 0, 0, 0],
                     action, loop.preset, phase)
        if phase == "Release" and log.f_meas < 0.1:
            done = True
            break
    wall = time.perf_counter() - t0
    frac = in_band / traverse_cycles if traverse_cycles else 0.0
    # zero-length path: trivially complete after the contact phase
    completed = done or s_pos >= path_len or path_len <= 0.0
    success = completed and (traverse_cycles == 0 or
                             frac >= spec.wipe_in_band_min)
    result = TrialResult(success=success, phase_reached=phase,
                         peak_force=peak, force_in_band_fraction=frac,
                         wall_time=wall,
                         detail={"mark_offset_m": mark_offset,
                                 "path_len": path_len})
    return result, (rec.episode() if rec else None)


# --- Insert ------------------------------------------------------------------

def _run_insert(spec: TaskSpec, policy: PolicySpec, seed: int,
                record: bool = False, bimanual: bool = False):
    rng = np.random.default_rng(seed)
    material = MaterialParams()
    err = 1.0 + 0.10 * rng.choice([-1.0, 1.0])
    model0 = MaterialParams(k_e=material.k_e * err, k_v=material.k_v * err,
                            k_m=material.k_m * err, tau=material.tau,
                            D=material.D)
    yaw = float(rng.uniform(-np.radians(spec.yaw_deg),
                            np.radians(spec.yaw_deg)))
    # initial lateral misalignment grows with the commanded yaw error
    e_lat = float(np.sign(yaw) * (2.2e-3 + 3.0e-3 * abs(yaw) / np.radians(15.0)))
    tol = spec.hole_tol_mm * 1e-3
    target = spec.insert_target_mm * 1e-3
    v_ins = 8e-3  # m/s descent when aligned

    mask = _centered_mask(6, 6)
    sensor_seed = seed + 17
    sensor = tactile.TactileSensor(noise_rms=0.2, seed=sensor_seed)
    loop = ControlLoop(sim.zero_state(GRID_W, GRID_H, GRID_SPACING),
                       material, mask, f_des=0.0, preset="Mid", model=model0,
                       sensor=sensor)
    arm_count = 2 if bimanual else 1
    rec = _Recorder(spec, seed, material, sensor_seed, 0.2,
                    arm_count=arm_count, mask=mask) if record else None

    # bimanual: the holding arm's stiffness damps fixture wobble
    wobble = 0.0
    wobble_peak = 0.0

    phase = "Approach"
    switch_at = {}
    depth_ins = 0.0
    peak = 0.0
    n_cycles = int(round(spec.time_limit / ControlLoop.CYCLE_DT))
    t0 = time.perf_counter()
    guidance_gain = 0.040   # lateral m/s per (N / (N/m))
    fb_gain = 2.4e-3        # m/s per unit normalized centroid offset
    success = False
    for k in range(n_cycles):
        want = phase
        if phase == "Approach" and loop.t >= 0.3:
            want = "Contact"
        elif phase == "Contact":
            want = "Engage"
        elif phase == "Engage" and loop.logs and \
                loop.logs[-1].f_meas >= 0.6 * spec.f_des:
            want = "Insert"
        if want != phase:
            due = switch_at.setdefault(want, loop.t + policy.switch_delay)
            if loop.t >= due:
                phase = want
                if phase == "Contact":
                    loop.set_target(spec.f_des)
        loop.set_preset(_preset_for(policy, spec, phase, loop=loop))
        left_preset = _preset_for(policy, spec, phase, arm="left",
                                   loop=loop)

        # lateral alignment dynamics during contact-driven insertion
        if phase == "Insert":
            lam1 = loop.compliance.lambda1
            f_n = loop.logs[-1].f_meas if loop.logs else 0.0
            if abs(e_lat) > tol:
                rate = guidance_gain * f_n / lam1
                if policy.field_feedback and loop.last_force_field is not None:
                    feats = tactile.features(loop.last_force_field,
                                             loop.last_deform_field)
                    off = feats.force_centroid[0] - (GRID_W - 1) / 2.0
                    rate += fb_gain * min(abs(off) / 3.0, 1.0)
                step_lat = min(rate * ControlLoop.CYCLE_DT, abs(e_lat))
                e_lat -= np.sign(e_lat) * step_lat
            else:
                depth_ins = min(depth_ins + v_ins * ControlLoop.CYCLE_DT,
                                target)
        # contact patch follows the misalignment (asymmetric field)
        shift = int(round(e_lat / GRID_SPACING))
        loop.set_mask(_centered_mask(6, 6, shift_x=shift))

        log = loop.cycle()
        peak = max(peak, log.f_meas)

        if bimanual:
            lam_left = PRESETS[left_preset].lambda1
            xi = rng.standard_normal()
            wobble += (0.5 * log.f_meas / lam_left) * xi * ControlLoop.CYCLE_DT
            wobble *= 0.98
            wobble_peak = max(wobble_peak, abs(wobble))

        if rec is not None:
            action = _action_vector(e_lat, 0.0, log.applied_depth, yaw,
                                    loop.preset, grip=0.4)
            if bimanual:
                left = _action_vector(0.0, 0.0, 2e-3, 0.0, left_preset,
                                      grip=0.6)
                action = np.concatenate([action, left])
                pose = [e_lat, 0.0, log.applied_depth, 0, 0, yaw,
                        0, 0, 2e-3, 0, 0, 0]
            else:
                pose = [e_lat, 0.0, log.applied_depth, 0, 0, yaw]
            rec.tick(loop, loop.t, pose, action, loop.preset, phase)

        if depth_ins >= target and abs(e_lat) <= tol:
            success = peak <= spec.max_peak_force
            if bimanual:
                success = success and wobble_peak <= spec.wobble_limit_mm * 1e-3
            break
    wall = time.perf_counter() - t0
    result = TrialResult(success=success, phase_reached=phase,
                         peak_force=peak, force_in_band_fraction=0.0,
                         wall_time=wall,
                         detail={"yaw_deg": float(np.degrees(yaw)),
                                 "residual_offset_m": e_lat,
                                 "insert_depth_m": depth_ins,
                                 "wobble_peak_m": wobble_peak})
    return result, (rec.episode() if rec else None)


# --- public entry points -----------------------------------------------------

def run_trial(spec: TaskSpec, policy: PolicySpec, seed: int,
              record: bool = False):
    if spec.task_id == "PressHold":
        return _run_press_hold(spec, policy, seed, record)
    if spec.task_id == "Wipe":
        return _run_wipe(spec, policy, seed, record)
    if spec.task_id == "Insert":
        return _run_insert(spec, policy, seed, record)
    if spec.task_id == "BimanualInsert":
        return _run_insert(spec, policy, seed, record, bimanual=True)
    raise ConfigurationError(f"unknown task {spec.task_id!r}")


def scripted_expert(spec: TaskSpec, seed: int) -> dataset.Episode:
    """Run the field-feedback scheduled policy and record a demonstration."""
    if spec.task_id == "Insert" and spec.hole_tol_mm <= 0.0:
        raise GenerationError("insertion with zero tolerance is infeasible")
    result, episode = run_trial(spec, POLICIES["fields"], seed, record=True)
    if not result.success:
        raise GenerationError(
            f"expert failed {spec.task_id} seed={seed}: "
            f"phase={result.phase_reached} detail={result.detail}")
    return episode


DEMO_COUNTS = {"PressHold": 20, "Wipe": 20, "Insert": 30,
               "BimanualInsert": 20}


def evaluate(policy_names: list, spec: TaskSpec, n_trials: int,
             seed: int) -> dict:
    """Success table across policy rows; deterministic per seed."""
    if n_trials < 1:
        raise UsageError("n_trials must be >= 1")
    table = {}
    for name in policy_names:
        if name not in POLICIES:
            raise ConfigurationError(f"unknown policy row {name!r}")
        results = []
        for trial in range(n_trials):
            r, _ = run_trial(spec, POLICIES[name], seed * 1000 + trial)
            results.append(r)
        table[name] = {
            "success_rate": 100.0 * sum(r.success for r in results) / n_trials,
            "results": results,
        }
    return table


def format_table(task_id: str, table: dict) -> str:
    lines = [f"task: {task_id}",
             f"{'policy':<14} {'success_rate_%':>14} {'trials':>7}"]
    for name in table:
        row = table[name]
        lines.append(f"{name:<14} {row['success_rate']:>14.1f} "
                     f"{len(row['results']):>7}")
    return "\n".join(lines) + "\n"


# --- determinism audit --------------------------------------------------------

def determinism_audit(ep: dataset.Episode) -> float:
    """Re-simulate a recorded episode from its high-rate command channel.

    Returns the max absolute deviation between re-simulated and recorded
    observation fields (in their recorded units).
    """
    hdr = ep.header
    if str(hdr.get("highrate", 0)) != "1":
        raise UsageError("episode lacks the high-rate command channel")
    material = MaterialParams(
        k_e=float(hdr["material.k_e"]), k_v=float(hdr["material.k_v"]),
        k_m=float(hdr["material.k_m"]), tau=float(hdr["material.tau"]),
        D=float(hdr["material.D"]))
    i0, i1, j0, j1 = (int(v) for v in hdr["mask_bbox"].split(","))
    sensor = tactile.TactileSensor(noise_rms=float(hdr["noise_rms"]),
                                   seed=int(hdr["sensor_seed"]))
    state = sim.zero_state(GRID_W, GRID_H, GRID_SPACING)
    dt = ControlLoop.CYCLE_DT
    dev = 0.0
    t = 0.0
    for fr in ep.frames:
        for ind_flat, shift in zip(fr.highrate, fr.hr_shift):
            f_field, d_field = sensor.read(state, material, t)
            mask = np.zeros((GRID_W, GRID_H), dtype=bool)
            mask[i0 + shift:i1 + shift, j0:j1] = True
            ind = ind_flat.reshape(GRID_W, GRID_H)
            state = sim.step(state, ContactCommand(indentation=ind, mask=mask),
                             material, dt)
            t += dt
        dev = max(dev, float(np.max(np.abs(
            f_field.pressures.astype(np.float32) - fr.force))))
        dev = max(dev, float(np.max(np.abs(
            d_field.displacements.astype(np.float32) - fr.deform))))
    return dev
