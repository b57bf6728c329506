"""Time the hot kernels with numba enabled and disabled.

Each backend runs in its own interpreter because the switch
(``TETHERPERTURB_DISABLE_NUMBA``) is read at import time.

    python benchmarks/bench_kernels.py [--repeat 3] [--session]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def run_cases(repeat: int, session: bool) -> dict:
    import numpy as np

    from tetherperturb import _accel
    from tetherperturb.core import ForceCommand, Geometry, allocate_tensions
    from tetherperturb.drivetrain import CommandProfile, ControllerGains, PlantParams, simulate_force
    from tetherperturb.gait import detect_stance, generate_gait
    from tetherperturb.orchestrator import SessionConfig, run_session
    from tetherperturb.workspace import workspace_map

    geom = Geometry()
    rng = np.random.default_rng(0)
    pairs = [((rng.uniform(-0.9, 0.9), rng.uniform(-1.625, 1.625)),
              ForceCommand(rng.uniform(0, 400), rng.uniform(0, 360))) for _ in range(2000)]
    stream = generate_gait(3.57, duration=60.0, seed=0).stream

    def allocate():
        for p, c in pairs:
            try:
                allocate_tensions(c, geom, p)
            except Exception:
                pass

    cases = {
        "allocate x2000": allocate,
        "workspace 300 N @ 0.05 m": lambda: workspace_map(300.0, 0.05),
        "drivetrain 125 N pulse (10 kHz, 1 s)": lambda: simulate_force(PlantParams(), ControllerGains(),
                                                                     CommandProfile.pulse(duration=0.25),
                                                                     duration=1.0),
        "runner-coupled pulse": lambda: simulate_force(PlantParams(), ControllerGains(), CommandProfile.pulse(),
                                                       "runner", seed=0),
        "stance detection 60 s (online)": lambda: detect_stance(stream, online=True),
        "stance detection 60 s (batch)": lambda: detect_stance(stream, online=False),
    }
    if session:
        cases["session, 4 trials"] = lambda: run_session(SessionConfig(trials_per_scenario=4))
    out = {"numba": _accel.USE_NUMBA, "times": {}}
    for name, fn in cases.items():
        fn()  # warm-up, includes any compilation
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out["times"][name] = best
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--session", action="store_true", help="also time a short orchestrated session")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.worker:
        print(json.dumps(run_cases(args.repeat, args.session)))
        return 0
    results = {}
    for label, flag in (("numba", "0"), ("python", "1")):
        cmd = [sys.executable, __file__, "--worker", "--repeat", str(args.repeat)]
        if args.session:
            cmd.append("--session")
        env = dict(os.environ, TETHERPERTURB_DISABLE_NUMBA=flag)
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        results[label] = json.loads(proc.stdout.strip().splitlines()[-1])
    if not results["numba"]["numba"]:
        print("note: numba unavailable, both columns use the fallback")
    names = list(results["numba"]["times"])
    width = max(len(n) for n in names)
    print(f"{'kernel':<{width}}  {'numba s':>10}  {'python s':>10}  {'speedup':>8}")
    for n in names:
        a, b = results["numba"]["times"][n], results["python"]["times"][n]
        print(f"{n:<{width}}  {a:>10.4f}  {b:>10.4f}  {b / a:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
