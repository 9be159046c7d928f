"""Command-line entry points.

Exit codes: 0 success, 1 acceptance/benchmark failure, 2 usage error,
3 configuration error. Every subcommand is deterministic given --seed and
writes a plain-text results file with a stable field order when --out is
given.

Environment overrides: VISCOTACT_PORT and VISCOTACT_STREAM_HZ for serve.
"""
from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import config as cfgmod
from . import dataset, sim, tasks
from .control import ControlLoop, nearest_preset
from .errors import ConfigurationError, GenerationError, UsageError, ViscotactError
from .sim import ContactCommand, MaterialParams

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3


def _load_cfg(path):
    if path is None:
        return cfgmod.parse_config(cfgmod.DEFAULT_CONFIG)
    if not os.path.exists(path):
        raise ConfigurationError(f"config file not found: {path}")
    return cfgmod.load_config(path)


def _write_results(path, lines):
    if path:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")


# --- simulate ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_cfg(args.config)
    material = cfgmod.material_from_config(cfg)
    W, H, h, _ = cfgmod.grid_from_config(cfg)
    if args.dt <= 0.0:
        raise UsageError("dt must be positive")
    if args.duration <= 0.0:
        raise UsageError("duration must be positive")
    state = sim.zero_state(W, H, h)
    mask = np.zeros((W, H), dtype=bool)
    mask[W // 4:3 * W // 4, H // 4:3 * H // 4] = True
    ind = np.where(mask, args.depth, 0.0)
    cmd = ContactCommand(indentation=ind, mask=mask)
    n = int(round(args.duration / args.dt))
    forces = []
    for _ in range(n):
        state = sim.step(state, cmd, material, args.dt)
        forces.append(sim.contact_force(state, material))
    lines = [
        "subcommand = simulate",
        f"seed = {args.seed}",
        f"steps = {n}",
        f"depth_m = {args.depth!r}",
        f"final_force_n = {forces[-1]!r}",
        f"peak_force_n = {max(forces)!r}",
        f"final_max_phi_m = {float(state.phi.max())!r}",
    ]
    print("\n".join(lines))
    _write_results(args.out, lines)
    return EXIT_OK


# --- demo-gen ---------------------------------------------------------------

def cmd_demo_gen(args) -> int:
    spec = tasks.default_spec(args.task)
    count = args.trials if args.trials else tasks.DEMO_COUNTS[args.task]
    outdir = args.out or f"demos_{args.task.lower()}"
    os.makedirs(outdir, exist_ok=True)
    episodes, files = [], []
    seed = args.seed
    attempts = 0
    while len(episodes) < count:
        if attempts > count * 10:
            raise GenerationError(
                f"expert cannot produce {count} episodes for {args.task}")
        attempts += 1
        try:
            ep = tasks.scripted_expert(spec, seed)
        except GenerationError:
            seed += 1
            continue
        name = f"{args.task.lower()}_{len(episodes):03d}.ep"
        with open(os.path.join(outdir, name), "wb") as f:
            f.write(dataset.serialize(ep))
        episodes.append(ep)
        files.append(name)
        seed += 1
    stats = dataset.compute_stats(episodes)
    n_train = max(int(round(0.8 * len(files))), 1)
    splits = {"train": files[:n_train], "val": files[n_train:]}
    dataset.write_manifest(os.path.join(outdir, "manifest.json"),
                           files, splits, stats)
    lines = [
        "subcommand = demo-gen",
        f"task = {args.task}",
        f"seed = {args.seed}",
        f"episodes = {len(files)}",
        f"frames = {sum(len(e.frames) for e in episodes)}",
        f"out = {outdir}",
    ]
    print("\n".join(lines))
    _write_results(os.path.join(outdir, "results.txt"), lines)
    return EXIT_OK


# --- identify-bench ---------------------------------------------------------

def _observer_errors(noise_rms: float, seed: int):
    """Closed-loop identification error against the plant truth."""
    from . import tactile
    material = MaterialParams()
    model0 = MaterialParams(k_e=material.k_e * 1.2, k_v=material.k_v * 0.8,
                            k_m=material.k_m * 1.2, tau=material.tau,
                            D=material.D)
    mask = tasks._centered_mask(8, 6)
    sensor = tactile.TactileSensor(noise_rms=noise_rms, seed=seed) \
        if noise_rms > 0 else None
    loop = ControlLoop(sim.zero_state(12, 10, 2e-3), material, mask,
                       f_des=3.0, model=model0, sensor=sensor)
    for _ in range(400):
        loop.cycle()
    est = loop.identifier.estimate
    rel = [abs(a - b) / b for a, b in
           zip((est.params.k_e, est.params.k_v, est.params.k_m),
               (material.k_e, material.k_v, material.k_m))]
    return max(rel), est.confident


def cmd_identify_bench(args) -> int:
    clean, ok1 = _observer_errors(0.0, args.seed)
    noisy, ok2 = _observer_errors(0.2, args.seed)
    passed = ok1 and ok2 and clean <= 0.01 and noisy <= 0.05
    lines = [
        "subcommand = identify-bench",
        f"seed = {args.seed}",
        f"noiseless_max_rel_error = {clean!r}",
        f"noisy_max_rel_error = {noisy!r}",
        f"confident = {ok1 and ok2}",
        f"pass = {passed}",
    ]
    print("\n".join(lines))
    _write_results(args.out, lines)
    return EXIT_OK if passed else EXIT_FAIL


# --- control-bench ----------------------------------------------------------

def cmd_control_bench(args) -> int:
    from . import tactile
    material = MaterialParams()
    model0 = MaterialParams(k_e=material.k_e * 1.1, k_v=material.k_v * 1.1,
                            k_m=material.k_m * 1.1, tau=material.tau,
                            D=material.D)
    mask = tasks._centered_mask(8, 6)
    loop = ControlLoop(sim.zero_state(12, 10, 2e-3), material, mask,
                       f_des=3.0, model=model0,
                       sensor=tactile.TactileSensor(seed=args.seed))
    in_band_since = None
    t_in_band = None
    wall = []
    for k in range(500):
        t0 = time.perf_counter()
        log = loop.cycle()
        wall.append(time.perf_counter() - t0)
        if abs(log.f_meas - 3.0) <= 0.05 * 3.0:
            if in_band_since is None:
                in_band_since = log.t
        else:
            in_band_since = None
        if in_band_since is not None and t_in_band is None:
            t_in_band = in_band_since
    settled = t_in_band is not None and in_band_since is not None
    mean_ms = 1e3 * float(np.mean(wall))
    passed = settled and t_in_band <= 2.0 and mean_ms <= 10.0
    lines = [
        "subcommand = control-bench",
        f"seed = {args.seed}",
        f"time_to_band_s = {t_in_band!r}",
        f"held_band = {settled}",
        f"mean_cycle_ms = {round(mean_ms, 3)!r}",
        f"pass = {passed}",
    ]
    print("\n".join(lines))
    _write_results(args.out, lines)
    return EXIT_OK if passed else EXIT_FAIL


# --- evaluate ---------------------------------------------------------------

def _bundle_policy(path):
    """Policy row driven by a weight bundle: network picks the preset."""
    from . import policy as polmod
    from . import weights as wmod
    with open(path, "rb") as f:
        bundle = wmod.load_bundle(f.read())

    def preset_fn(loop, spec, phase, arm):
        if loop is None or loop.last_force_field is None:
            return "Mid"
        obs = polmod.Observation(
            current_pose=np.zeros(6 * bundle.descriptor.arm_count),
            force_field=loop.last_force_field,
            deformation_field=loop.last_deform_field)
        chunk = polmod.predict_chunk(obs, bundle, start_time=loop.t)
        comp = chunk.actions[0][19:22]
        return nearest_preset(float(comp[0]))

    return tasks.PolicySpec("bundle", scheduled=True, field_feedback=True,
                            preset_fn=preset_fn)


def cmd_evaluate(args) -> int:
    spec = tasks.default_spec(args.task)
    rows = list(args.rows.split(",")) if args.rows else list(tasks.POLICY_ROWS)
    table = tasks.evaluate(rows, spec, args.trials, args.seed)
    if args.weights:
        pol = _bundle_policy(args.weights)
        results = [tasks.run_trial(spec, pol, args.seed * 1000 + t)[0]
                   for t in range(args.trials)]
        table["bundle"] = {
            "success_rate": 100.0 * sum(r.success for r in results)
            / args.trials,
            "results": results,
        }
    text = tasks.format_table(args.task, table)
    print(text, end="")
    lines = ["subcommand = evaluate", f"task = {args.task}",
             f"seed = {args.seed}", f"trials = {args.trials}"]
    for name in table:
        lines.append(f"success.{name} = {table[name]['success_rate']!r}")
    _write_results(args.out, lines)
    if args.check_ordering:
        sched = table.get("preset-sched", {}).get("success_rate", 0.0)
        frozen = table.get("traj-only", {}).get("success_rate", 100.0)
        if not sched > frozen:
            print("ordering check failed: preset-sched <= traj-only")
            return EXIT_FAIL
    return EXIT_OK


# --- serve --------------------------------------------------------------------

def cmd_serve(args) -> int:
    from . import teleop
    cfg = {}
    if args.task:
        cfg["task_id"] = args.task
    if args.headless:
        # headless: run the service without any UI assumptions; the
        # websocket endpoint is the whole surface either way
        pass
    teleop.serve(port=args.port, config=cfg)
    return EXIT_OK


# --- export-goldens ----------------------------------------------------------

def cmd_export_goldens(args) -> int:
    """Regenerate the golden fixtures consumed by the test suite."""
    from . import policy as polmod
    from . import tactile
    from . import weights as wmod
    outdir = args.out or "goldens"
    os.makedirs(outdir, exist_ok=True)
    bundle = wmod.seeded_bundle(42)
    with open(os.path.join(outdir, "bundle_seed42.cfa1"), "wb") as f:
        f.write(wmod.save_bundle(bundle))
    state = sim.zero_state(12, 10, 2e-3)
    mask = tasks._centered_mask(8, 6)
    cmd = ContactCommand(indentation=np.where(mask, 2e-3, 0.0), mask=mask)
    material = MaterialParams()
    for _ in range(50):
        state = sim.step(state, cmd, material, 0.01)
    f_field = tactile.sample_force_field(state, material, 0.0, None, 0.5)
    d_field = tactile.sample_deformation_field(state, 0.5)
    obs = polmod.Observation(current_pose=np.zeros(6), force_field=f_field,
                             deformation_field=d_field)
    chunk = polmod.predict_chunk(obs, bundle)
    np.savez(os.path.join(outdir, "golden_chunk_seed42.npz"),
             actions=np.stack(chunk.actions))
    lines = ["subcommand = export-goldens", f"out = {outdir}",
             "files = bundle_seed42.cfa1, golden_chunk_seed42.npz"]
    print("\n".join(lines))
    _write_results(os.path.join(outdir, "results.txt"), lines)
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viscotact",
                                description="viscoelastic-contact toolkit")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("simulate", help="open-loop pad simulation")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dt", type=float, default=0.01)
    s.add_argument("--duration", type=float, default=1.0)
    s.add_argument("--depth", type=float, default=2e-3)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("demo-gen", help="generate scripted demonstrations")
    s.add_argument("--task", choices=tasks.TASK_IDS, required=True)
    s.add_argument("--trials", type=int, default=0,
                   help="episode count (default: bundled protocol count)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_demo_gen)

    s = sub.add_parser("identify-bench", help="observer recovery benchmark")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_identify_bench)

    s = sub.add_parser("control-bench", help="force tracking benchmark")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_control_bench)

    s = sub.add_parser("evaluate", help="policy-row success table")
    s.add_argument("--task", choices=tasks.TASK_IDS, required=True)
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--rows", help="comma-separated policy rows")
    s.add_argument("--weights", help="CFA1 bundle for a network-driven row")
    s.add_argument("--check-ordering", action="store_true")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("serve", help="teleoperation websocket service")
    s.add_argument("--task", choices=tasks.TASK_IDS)
    s.add_argument("--port", type=int, default=None)
    s.add_argument("--headless", action="store_true")
    s.set_defaults(fn=cmd_serve)

    s = sub.add_parser("export-goldens", help="write golden test fixtures")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_export_goldens)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if e.code is not None else EXIT_USAGE
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ViscotactError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
