"""Command-line entry point: ``tetherperturb <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, drivetrain, gait, orchestrator, workspace
from .core import Geometry, load_geometry
from .errors import EStop, TetherPerturbError


def _geometry(args) -> Geometry:
    return load_geometry(args.geometry) if getattr(args, "geometry", None) else Geometry()


def cmd_workspace(args) -> int:
    geom = _geometry(args)
    wmap = workspace.workspace_map(args.force_n, args.res, args.directions, geom)
    if args.csv:
        Path(args.csv).write_text(wmap.to_csv())
    else:
        sys.stdout.write(wmap.to_csv())
    if args.svg:
        Path(args.svg).write_text(workspace.render_svg(wmap, geom))
    print(wmap.summary(), file=sys.stderr if not args.csv else sys.stdout)
    return 0


def _plant_gains(args):
    plant, gains = drivetrain.PlantParams(), drivetrain.ControllerGains()
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text())
        if "plant" in data:
            plant = drivetrain.PlantParams.from_dict(data["plant"])
        if "gains" in data:
            gains = drivetrain.ControllerGains.from_dict(data["gains"])
    return plant, gains


def cmd_simulate(args) -> int:
    plant, gains = _plant_gains(args)
    if args.no_feedforward:
        gains = gains.without_feedforward()
    profile = drivetrain.CommandProfile.from_csv(args.profile) if args.profile else drivetrain.CommandProfile.pulse()
    trace = drivetrain.simulate_force(plant, gains, profile, args.load, seed=args.seed, duration=args.duration,
                                      noise_std=args.noise)
    if args.out:
        trace.write_csv(args.out)
    base = profile.forces[0]
    if profile.peak > base:
        try:
            m = drivetrain.step_metrics(trace, base, profile.peak)
            print(f"overshoot_pct={m.percent_overshoot:.2f} rise_ms={m.rise_time_ms:.1f} "
                  f"ripple_n={m.ripple_pp:.2f} steady_error_n={m.steady_error:.3f} "
                  f"net_impulse_ns={m.net_impulse:.3f}")
        except TetherPerturbError as exc:
            print(f"metrics unavailable: {exc}")
    return 0


def cmd_bode(args) -> int:
    plant, _ = _plant_gains(args)
    omega = np.geomspace(args.wmin, args.wmax, args.points)
    res = drivetrain.bode(plant, omega)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("omega_rad_s,magnitude_db,phase_deg\n")
            for w, m, p in zip(res.omega, res.magnitude_db, res.phase_deg):
                fh.write(f"{w:.6g},{m:.6f},{p:.6f}\n")
    settle = drivetrain.step_settling_time(plant)
    print(f"bandwidth_rad_s={res.bandwidth:.3f} bandwidth_hz={res.bandwidth / (2 * np.pi):.3f} "
          f"step_settling_ms={settle:.1f}")
    return 0


def cmd_fit_damping(args) -> int:
    plant, _ = _plant_gains(args)
    trace = drivetrain.ForceTrace.from_csv(args.trace)
    fit = drivetrain.fit_damping(trace, plant)
    print(f"total_damping={fit.total_damping:.6g} rmse_n={fit.rmse:.6g}")
    return 0


def cmd_gait_generate(args) -> int:
    rec = gait.generate_gait(args.cadence, args.speed, args.duration, seed=args.seed, cov=args.jitter)
    if args.out:
        with open(args.out, "w") as fh:
            rec.stream.write(fh)
    else:
        rec.stream.write(sys.stdout)
    if args.truth:
        Path(args.truth).write_text("".join(f"{t:.6f}\n" for t in rec.stance_times))
    return 0


def cmd_gait_detect(args) -> int:
    if args.input == "-":
        stream = gait.MarkerStream.read(sys.stdin)
    else:
        with open(args.input) as fh:
            stream = gait.MarkerStream.read(fh)
    for ev in gait.detect_stance(stream, online=True, window=args.window):
        print(f"{ev.kind} {ev.timestamp:.3f} {ev.stride_period_estimate:.4f}")
    return 0


def cmd_orchestrate(args) -> int:
    if args.config:
        config, geom, plant, gains = orchestrator.load_config(args.config)
    else:
        config, geom, plant, gains = (orchestrator.SessionConfig(), Geometry(), drivetrain.PlantParams(),
                                      drivetrain.ControllerGains())
    if args.seed is not None:
        config = replace(config, rng_seed=args.seed)
    monitor = orchestrator.EStopMonitor(args.estop_file)
    try:
        result = orchestrator.run_session(config, geom, plant, gains, estop=monitor)
    except EStop as stop:
        log = orchestrator.write_session(stop.result, args.out)
        print(f"emergency stop: {len(stop.result.records)} record(s) written to {log}", file=sys.stderr)
        return 130
    log = orchestrator.write_session(result, args.out)
    s = result.summary()
    print(f"records={s['records']} completed={s['completed']} log={log}")
    return 0


def cmd_analyze(args) -> int:
    records = orchestrator.read_trial_log(args.input)
    fits = analysis.analyze_records(records, args.out)
    for d, fit in fits.items():
        offs = " ".join(f"{k}={v:.1f}" for k, v in fit.offsets.items())
        print(f"{d}: intercept={fit.intercept:.1f} {offs}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tetherperturb", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("workspace", help="omnidirectional feasible workspace map")
    p.add_argument("--force-n", type=float, required=True)
    p.add_argument("--res", type=float, default=workspace.DEFAULT_RESOLUTION)
    p.add_argument("--directions", type=int, default=workspace.DEFAULT_DIRECTIONS)
    p.add_argument("--geometry", help="geometry JSON")
    p.add_argument("--csv", help="write the cell CSV here instead of stdout")
    p.add_argument("--svg", help="also render an SVG map")
    p.set_defaults(func=cmd_workspace)

    p = sub.add_parser("simulate", help="closed-loop single-tether force response")
    p.add_argument("--profile", help="CSV with t_s,force_N,mode (default: 125 N, 250 ms pulse)")
    p.add_argument("--load", choices=("stationary", "runner"), default="stationary")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float)
    p.add_argument("--noise", type=float, default=0.0, help="load-cell noise std (N)")
    p.add_argument("--no-feedforward", action="store_true")
    p.add_argument("--config", help="JSON with plant/gains sections")
    p.add_argument("--out", help="trace CSV output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bode", help="plant frequency response and -3 dB bandwidth")
    p.add_argument("--wmin", type=float, default=0.1)
    p.add_argument("--wmax", type=float, default=1000.0)
    p.add_argument("--points", type=int, default=400)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("fit-damping", help="identify lumped damping from a step trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_fit_damping)

    p = sub.add_parser("gait", help="marker streams and stance detection")
    gsub = p.add_subparsers(dest="gait_command", required=True)
    g = gsub.add_parser("generate")
    g.add_argument("--cadence", type=float, default=3.57)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--duration", type=float, default=60.0)
    g.add_argument("--speed", type=float, default=3.0)
    g.add_argument("--jitter", type=float, default=0.03)
    g.add_argument("--out")
    g.add_argument("--truth", help="write ground-truth stance times here")
    g.set_defaults(func=cmd_gait_generate)
    g = gsub.add_parser("detect")
    g.add_argument("--in", dest="input", required=True, help="marker stream file or '-' for stdin")
    g.add_argument("--window", type=int, default=gait.DEFAULT_WINDOW)
    g.set_defaults(func=cmd_gait_detect)

    p = sub.add_parser("orchestrate", help="run a full perturbation session")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--estop-file", help="stop when this file appears")
    p.set_defaults(func=cmd_orchestrate)

    p = sub.add_parser("analyze", help="statistics from a trial log")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TetherPerturbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
