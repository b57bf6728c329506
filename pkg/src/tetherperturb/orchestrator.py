"""Randomized perturbation sessions: trial planning, warning and stance
triggering, three-tether force application on a surrogate runner, logging."""
from __future__ import annotations

import json
import math
import signal
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .analysis import extract_displacement
from .core import GRAVITY, ForceCommand, Geometry, allocate_tensions
from .drivetrain import LOADCELL_RESOLUTION, ControllerGains, PlantParams
from .errors import DegenerateGeometry, EStop, Infeasible, InvalidConfig, UnstableSimulation
from .gait import (
    DIRECTION_ANGLE,
    DIRECTIONS,
    GaitRecording,
    MarkerStream,
    WarningSpec,
    detect_stance,
    generate_gait,
    plan_trigger,
    stance_times,
)
from .runner import RunnerParams, RunnerState, free_response, runner_step

__all__ = [
    "BracingTable", "SessionConfig", "TrialSpec", "TrialRecord", "SessionResult", "EStopMonitor",
    "build_trial_plan", "run_session", "write_session", "read_trial_log", "simulate_study",
    "RunnerParams", "RunnerState", "runner_step", "free_response", "load_config",
]

SCENARIOS = ("none", "audio", "visual", "audio_visual")
MASTER_RATE = 1000.0
SUB_STEPS = 10
WAIST_DECIMATION = 5  # 1 kHz master clock -> 200 Hz waist trajectory
PRE_WINDOW = 1.0
POST_WINDOW = 2.5
BRACE_HOLD = 2.0
HOME_TOLERANCE = 0.01


@dataclass(frozen=True)
class BracingTable:
    """How a warning changes the runner's impedance.

    A warning is perceived with the right direction with probability
    ``p_lateral`` (left/right) or ``p_sagittal`` (front/back).  A correct
    perception scales the runner's stiffness and damping by the modality gain
    (times a log-normal trial jitter) from ``latency`` after emission until
    two seconds after onset; a wrong one leaves the runner unbraced.
    """

    gain_audio: float = 1.14
    gain_visual: float = 1.4
    gain_audio_visual: float = 1.3
    p_lateral: dict = field(default_factory=lambda: {"audio": 0.95, "visual": 0.97, "audio_visual": 0.95})
    p_sagittal: dict = field(default_factory=lambda: {"audio": 0.65, "visual": 0.97, "audio_visual": 0.85})
    latency: float = 0.25
    gain_jitter: float = 0.05

    def __post_init__(self):
        if min(self.gain_audio, self.gain_visual, self.gain_audio_visual) < 1.0:
            raise InvalidConfig("bracing gains must be >= 1")
        for table in (self.p_lateral, self.p_sagittal):
            if set(table) != {"audio", "visual", "audio_visual"} or not all(0 <= v <= 1 for v in table.values()):
                raise InvalidConfig("perception probabilities need audio/visual/audio_visual in [0, 1]")
        if self.latency < 0 or self.gain_jitter < 0:
            raise InvalidConfig("latency and gain_jitter must be >= 0")

    def gain(self, modality: str) -> float:
        return {"audio": self.gain_audio, "visual": self.gain_visual,
                "audio_visual": self.gain_audio_visual}.get(modality, 1.0)

    def p_correct(self, modality: str, direction: str) -> float:
        if modality == "none":
            return 0.0
        table = self.p_lateral if direction in ("left", "right") else self.p_sagittal
        return table[modality]

    def to_dict(self) -> dict:
        return {"gain_audio": self.gain_audio, "gain_visual": self.gain_visual,
                "gain_audio_visual": self.gain_audio_visual, "p_lateral": dict(self.p_lateral),
                "p_sagittal": dict(self.p_sagittal), "latency_s": self.latency,
                "gain_jitter": self.gain_jitter}

    @classmethod
    def from_dict(cls, d: dict) -> "BracingTable":
        d = dict(d)
        if "latency_s" in d:
            d["latency"] = d.pop("latency_s")
        return cls(**d)


@dataclass(frozen=True)
class SessionConfig:
    participant_mass: float = 80.0
    belt_speed: float = 3.0
    force_fraction: float = 0.30
    pulse_duration: float = 0.25
    interval_min: float = 15.0
    interval_max: float = 25.0
    trials_per_scenario: int = 12
    scenarios: tuple[str, ...] = SCENARIOS
    rng_seed: int = 0
    participant_id: str = "P01"
    force_override: float | None = None  # fixed magnitude (N) instead of a body-weight fraction
    cadence: float = 3.57
    gait_jitter: float = 0.03
    lead_time: float = 0.5
    stance_window: int = 5
    loadcell_noise: float = 0.05
    stiffness_scale: float = 1.0  # participant-level multiplier on runner stiffness/damping
    trial_stiffness_sd: float = 0.10  # log-normal per-trial variation
    runner: RunnerParams = RunnerParams()  # mass is taken from participant_mass
    bracing: BracingTable = BracingTable()

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if self.participant_mass <= 0:
            raise InvalidConfig("participant_mass must be > 0")
        if not 0 < self.force_fraction <= 0.5:
            raise InvalidConfig("force_fraction must lie in (0, 0.5]")
        if not self.interval_min < self.interval_max or self.interval_min <= 0:
            raise InvalidConfig("need 0 < interval_min < interval_max")
        if sorted(self.scenarios) != sorted(SCENARIOS):
            raise InvalidConfig("scenarios must be a permutation of none/audio/visual/audio_visual")
        if self.trials_per_scenario < 1 or self.trials_per_scenario % len(DIRECTIONS):
            raise InvalidConfig("trials_per_scenario must be a positive multiple of 4")
        if self.pulse_duration <= 0 or self.lead_time <= 0:
            raise InvalidConfig("pulse_duration and lead_time must be > 0")
        if self.force_override is not None and self.force_override <= 0:
            raise InvalidConfig("force_override must be > 0")
        if self.stiffness_scale <= 0 or self.trial_stiffness_sd < 0 or self.loadcell_noise < 0:
            raise InvalidConfig("invalid runner variability settings")

    @property
    def force_magnitude(self) -> float:
        if self.force_override is not None:
            return float(self.force_override)
        return self.force_fraction * self.participant_mass * GRAVITY

    @property
    def n_trials(self) -> int:
        return self.trials_per_scenario * len(self.scenarios)

    def to_dict(self) -> dict:
        return {
            "participant_mass_kg": self.participant_mass,
            "belt_speed_mps": self.belt_speed,
            "force_fraction": self.force_fraction,
            "pulse_duration_s": self.pulse_duration,
            "interval_s": [self.interval_min, self.interval_max],
            "trials_per_scenario": self.trials_per_scenario,
            "scenarios": list(self.scenarios),
            "rng_seed": self.rng_seed,
            "participant_id": self.participant_id,
            "force_override_n": self.force_override,
            "cadence_hz": self.cadence,
            "gait_jitter": self.gait_jitter,
            "lead_time_s": self.lead_time,
            "stance_window": self.stance_window,
            "loadcell_noise_n": self.loadcell_noise,
            "stiffness_scale": self.stiffness_scale,
            "trial_stiffness_sd": self.trial_stiffness_sd,
            "runner": {"natural_frequency_rad_s": self.runner.natural_frequency,
                       "damping_ratio": self.runner.damping_ratio, "home_m": list(self.runner.home)},
            "bracing": self.bracing.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        names = {
            "participant_mass_kg": "participant_mass", "belt_speed_mps": "belt_speed",
            "force_fraction": "force_fraction", "pulse_duration_s": "pulse_duration",
            "trials_per_scenario": "trials_per_scenario", "scenarios": "scenarios",
            "rng_seed": "rng_seed", "participant_id": "participant_id",
            "force_override_n": "force_override", "cadence_hz": "cadence", "gait_jitter": "gait_jitter",
            "lead_time_s": "lead_time", "stance_window": "stance_window",
            "loadcell_noise_n": "loadcell_noise", "stiffness_scale": "stiffness_scale",
            "trial_stiffness_sd": "trial_stiffness_sd",
        }
        kw = {}
        for key, value in d.items():
            if key == "interval_s":
                kw["interval_min"], kw["interval_max"] = (float(v) for v in value)
            elif key == "runner":
                defaults = RunnerParams()
                kw["runner"] = RunnerParams(
                    natural_frequency=value.get("natural_frequency_rad_s", defaults.natural_frequency),
                    damping_ratio=value.get("damping_ratio", defaults.damping_ratio),
                    home=tuple(value.get("home_m", defaults.home)))
            elif key == "bracing":
                kw["bracing"] = BracingTable.from_dict(value)
            elif key in names:
                kw[names[key]] = value
            else:
                raise InvalidConfig(f"unknown session key {key!r}")
        return cls(**kw)


def load_config(path) -> tuple[SessionConfig, Geometry, PlantParams, ControllerGains]:
    """Read a JSON file with optional ``session``, ``geometry``, ``plant`` and ``gains`` sections."""
    data = json.loads(Path(path).read_text())
    unknown = set(data) - {"session", "geometry", "plant", "gains"}
    if unknown:
        raise InvalidConfig(f"unknown config sections: {sorted(unknown)}")
    return (SessionConfig.from_dict(data.get("session", {})),
            Geometry.from_dict(data["geometry"]) if "geometry" in data else Geometry(),
            PlantParams.from_dict(data["plant"]) if "plant" in data else PlantParams(),
            ControllerGains.from_dict(data["gains"]) if "gains" in data else ControllerGains())


@dataclass(frozen=True)
class TrialSpec:
    index: int
    block: int
    modality: str
    direction: str
    interval: float
    gait_event: str = "stance"

    def __post_init__(self):
        if self.gait_event != "stance":
            raise InvalidConfig("only stance-triggered perturbations are supported")
        if self.modality not in SCENARIOS or self.direction not in DIRECTIONS:
            raise InvalidConfig("bad modality or direction")

    @property
    def angle_deg(self) -> float:
        return DIRECTION_ANGLE[self.direction]

    def to_dict(self) -> dict:
        return {"index": self.index, "block": self.block, "modality": self.modality,
                "direction": self.direction, "angle_deg": self.angle_deg,
                "interval_s": round(self.interval, 6), "gait_event": self.gait_event}


def _streams(config: SessionConfig):
    plan_ss, gait_ss, trial_ss = np.random.SeedSequence(config.rng_seed).spawn(3)
    return plan_ss, gait_ss, trial_ss


def build_trial_plan(config: SessionConfig) -> list[TrialSpec]:
    """Scenario blocks in config order, each direction-balanced and shuffled."""
    rng = np.random.default_rng(_streams(config)[0])
    per_dir = config.trials_per_scenario // len(DIRECTIONS)
    specs = []
    for b, modality in enumerate(config.scenarios):
        dirs = np.array([d for d in DIRECTIONS for _ in range(per_dir)])
        dirs = dirs[rng.permutation(dirs.size)]
        intervals = rng.uniform(config.interval_min, config.interval_max, dirs.size)
        for d, iv in zip(dirs, intervals):
            specs.append(TrialSpec(len(specs), b, modality, str(d), float(iv)))
    return specs


@dataclass
class TrialRecord:
    spec: TrialSpec
    participant_id: str
    status: str  # ok | infeasible | estopped
    reason: str = ""
    commanded_force: float = 0.0
    tensions: tuple[float, float, float] | None = None
    warning_time: float | None = None
    onset: float | None = None
    lead_time: float | None = None
    net_impulse: float | None = None
    max_displacement_mm: float | None = None
    braced: bool = False
    brace_gain: float = 1.0
    stimulus: dict | None = None
    trace_t: np.ndarray | None = field(default=None, repr=False)
    trace_cmd: np.ndarray | None = field(default=None, repr=False)  # (n, 3)
    trace_meas: np.ndarray | None = field(default=None, repr=False)  # (n, 3)
    waist: np.ndarray | None = field(default=None, repr=False)  # (m, 3): t, x, y
    trace_files: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def r(v, nd=6):
            return None if v is None else round(float(v), nd)
        return {
            "participant_id": self.participant_id,
            **self.spec.to_dict(),
            "status": self.status,
            "reason": self.reason,
            "commanded_force_n": r(self.commanded_force),
            "tensions_n": None if self.tensions is None else [r(v) for v in self.tensions],
            "warning_time_s": r(self.warning_time),
            "onset_s": r(self.onset),
            "lead_time_s": r(self.lead_time),
            "net_impulse_ns": r(self.net_impulse),
            "max_displacement_mm": r(self.max_displacement_mm, 4),
            "braced": self.braced,
            "brace_gain": r(self.brace_gain),
            "stimulus": self.stimulus,
            "traces": dict(self.trace_files),
        }


@dataclass
class SessionResult:
    config: SessionConfig
    records: list[TrialRecord]
    estopped: bool = False

    def summary(self) -> dict:
        ok = [r for r in self.records if r.status == "ok"]
        leads = [r.lead_time for r in ok if r.lead_time is not None]
        imp = [r.net_impulse for r in ok]
        by_mod = {}
        for m in SCENARIOS:
            disp = [r.max_displacement_mm for r in ok if r.spec.modality == m]
            by_mod[m] = {"trials": sum(1 for r in self.records if r.spec.modality == m),
                         "mean_displacement_mm": round(float(np.mean(disp)), 4) if disp else None}

        def stat(v):
            return {"mean": round(float(np.mean(v)), 6), "std": round(float(np.std(v, ddof=1)), 6)} \
                if len(v) > 1 else None
        return {
            "participant_id": self.config.participant_id,
            "rng_seed": self.config.rng_seed,
            "planned_trials": self.config.n_trials,
            "records": len(self.records),
            "completed": len(ok),
            "skipped": [{"index": r.spec.index, "reason": r.reason} for r in self.records if r.status == "infeasible"],
            "estopped": self.estopped,
            "commanded_force_n": round(self.config.force_magnitude, 6),
            "lead_time_s": stat(leads),
            "net_impulse_ns": stat(imp),
            "by_modality": by_mod,
            "config": self.config.to_dict(),
        }


class EStopMonitor:
    """Emergency stop from SIGINT or from a sentinel file appearing."""

    def __init__(self, sentinel=None):
        self.sentinel = None if sentinel is None else Path(sentinel)
        self._flag = False
        self._prev = None

    def trip(self) -> None:
        self._flag = True

    def triggered(self) -> bool:
        if not self._flag and self.sentinel is not None and self.sentinel.exists():
            self._flag = True
        return self._flag

    def __enter__(self):
        if threading.current_thread() is threading.main_thread():
            self._prev = signal.signal(signal.SIGINT, lambda *_: self.trip())
        return self

    def __exit__(self, *exc):
        if self._prev is not None:
            signal.signal(signal.SIGINT, self._prev)
            self._prev = None
        return False


def _session_gait(config: SessionConfig, plan: list[TrialSpec], gait_source):
    if isinstance(gait_source, GaitRecording):
        return gait_source.stream
    if isinstance(gait_source, MarkerStream):
        return gait_source
    if gait_source is not None:
        raise TypeError("gait_source must be a GaitRecording, MarkerStream or None")
    span = sum(s.interval for s in plan) + len(plan) * (POST_WINDOW + 2.0) + 10.0
    rng = np.random.default_rng(_streams(config)[1])
    return generate_gait(config.cadence, config.belt_speed, span, seed=rng.integers(2**63),
                         cov=config.gait_jitter).stream


def _nominal_resultant(ax, ay, px, py, nominal):
    dx, dy = ax - px, ay - py
    d = np.hypot(dx, dy)
    return float(np.sum(nominal * dx / d)), float(np.sum(nominal * dy / d))


def _total_command(magnitude, angle_deg, duration, ax, ay, px, py, nominal) -> ForceCommand:
    """Net tether force whose change from the nominal-tension resultant is the perturbation.

    Three tethers at equal nominal tension do not cancel exactly, and the
    runner already leans against that steady pull, so the perturbation is
    added on top of it.
    """
    bx, by = _nominal_resultant(ax, ay, px, py, nominal)
    b = math.radians(angle_deg)
    fx = magnitude * math.cos(b) + bx
    fy = magnitude * math.sin(b) + by
    return ForceCommand(math.hypot(fx, fy), math.degrees(math.atan2(fy, fx)), duration)


def run_session(config: SessionConfig | None = None, geometry: Geometry | None = None,
                plant: PlantParams | None = None, gains: ControllerGains | None = None,
                gait_source=None, estop: EStopMonitor | None = None) -> SessionResult:
    """Run every planned trial on one continuous gait stream.

    Raises :class:`EStop` (with ``.result`` holding the partial session) if
    the monitor trips; commands drop to nominal within one master tick.
    """
    config = config or SessionConfig()
    geometry = geometry or Geometry()
    plant = plant or PlantParams()
    gains = gains or ControllerGains()
    estop = estop or EStopMonitor()
    plan = build_trial_plan(config)
    stream = _session_gait(config, plan, gait_source)
    stances = stance_times(detect_stance(stream, online=False))
    trial_rngs = [np.random.default_rng(s) for s in _streams(config)[2].spawn(len(plan))]

    ax, ay = geometry.anchor_arrays()
    nominal = geometry.nominal_tension
    rp = replace(config.runner, mass=config.participant_mass)
    home = np.array(rp.home, dtype=float)
    plant_arr = plant.kernel_array()
    gain_arr = gains.kernel_array(nominal)
    dt_master = 1.0 / MASTER_RATE
    dt_ctrl = dt_master / SUB_STEPS
    magnitude = config.force_magnitude
    force_limit = 10.0 * max(geometry.tension_max, magnitude)
    base_fx, base_fy = _nominal_resultant(ax, ay, home[0], home[1], nominal)
    sway_t = stream.t
    sway_x = stream.waist[:, 0] - np.mean(stream.waist[:, 0])
    sway_y = stream.waist[:, 1] - np.mean(stream.waist[:, 1])

    runner = RunnerState(position=tuple(home))
    records: list[TrialRecord] = []
    clock = 0.0  # session time at which the runner state is valid
    t_end = 0.0
    result = SessionResult(config, records)
    with estop:
        for spec, rng in zip(plan, trial_rngs):
            if estop.triggered():
                result.estopped = True
                raise EStop("emergency stop", result=result)
            t_ready = t_end + spec.interval
            wspec = WarningSpec(spec.modality, spec.direction, config.lead_time)
            trig = plan_trigger(stances, t_ready, wspec, config.stance_window)
            onset = trig.onset
            t0 = math.floor((t_ready - PRE_WINDOW) * MASTER_RATE) / MASTER_RATE
            runner = free_response(runner, max(0.0, t0 - clock), rp)
            if math.hypot(runner.position[0] - home[0], runner.position[1] - home[1]) > HOME_TOLERANCE:
                raise UnstableSimulation("runner failed to return home between trials")
            clock = t0

            # per-trial draws, always in the same order
            perceived = rng.random() < config.bracing.p_correct(spec.modality, spec.direction)
            jitter = math.exp(rng.normal(0.0, config.bracing.gain_jitter))
            stiff = config.stiffness_scale * math.exp(rng.normal(0.0, config.trial_stiffness_sd))
            n_ticks = int(round((onset + POST_WINDOW - t0) * MASTER_RATE)) + 1
            noise = rng.normal(0.0, config.loadcell_noise, (n_ticks, 3, SUB_STEPS))

            record = TrialRecord(spec, config.participant_id, "ok", commanded_force=magnitude,
                                 onset=onset, stimulus=trig.warning.stimulus)
            if trig.warning.emission_time is not None:
                record.warning_time = trig.warning.emission_time
                record.lead_time = onset - trig.warning.emission_time
            brace_gain = config.bracing.gain(spec.modality) * jitter if perceived else 1.0
            record.braced = bool(perceived and spec.modality != "none")
            record.brace_gain = brace_gain if record.braced else 1.0
            brace_on = (record.warning_time + config.bracing.latency) if record.braced else math.inf
            brace_off = onset + BRACE_HOLD

            # allocate at the runner's position at onset (unknown until then)
            tensions = None
            state = np.zeros((3, 6))
            tt = np.arange(n_ticks) * dt_master + t0
            wx = runner.position[0] + np.interp(t0, sway_t, sway_x)
            wy = runner.position[1] + np.interp(t0, sway_t, sway_y)
            rest = np.hypot(ax - wx, ay - wy)
            for i in range(3):
                kernels.drivetrain_equilibrium(state[i], nominal, 0.0, plant_arr, gain_arr)
            body = runner.as_array()
            sx = np.interp(tt, sway_t, sway_x)
            sy = np.interp(tt, sway_t, sway_y)
            cmds = np.full(3, nominal)
            out_f = np.zeros(3)
            out_m = np.zeros(3)
            cmd_log = np.zeros((n_ticks, 3))
            meas_log = np.zeros((n_ticks, 3))
            waist = np.zeros((n_ticks, 2))
            i_on = int(round((onset - t0) * MASTER_RATE))
            i_off = i_on + int(round(config.pulse_duration * MASTER_RATE))
            stopped_at = None
            for k in range(n_ticks):
                if estop.triggered():
                    stopped_at = k
                    break
                if k == i_on:
                    try:
                        alloc = allocate_tensions(
                            _total_command(magnitude, spec.angle_deg, config.pulse_duration, ax, ay,
                                           body[0] + sx[k], body[1] + sy[k], nominal),
                            geometry, (body[0] + sx[k], body[1] + sy[k]))
                    except (Infeasible, DegenerateGeometry) as exc:
                        record.status = "infeasible"
                        record.reason = str(exc)
                        break
                    tensions = alloc.as_array()
                    record.tensions = tuple(float(v) for v in tensions)
                mode = 1 if tensions is not None and i_on <= k < i_off else 0
                if mode:
                    cmds[:] = tensions
                else:
                    cmds[:] = nominal
                g = brace_gain if brace_on <= tt[k] <= brace_off else 1.0
                waist[k] = body[0] + sx[k], body[1] + sy[k]
                status = kernels.coupled_tick(state, cmds, mode, body, sx[k], sy[k], home[0], home[1],
                                              ax, ay, rest, plant_arr, gain_arr, LOADCELL_RESOLUTION,
                                              dt_ctrl, SUB_STEPS, noise[k], force_limit, base_fx, base_fy,
                                              rp.mass, rp.stiffness * stiff, rp.damping * stiff, g,
                                              out_f, out_m)
                if status >= 0:
                    raise UnstableSimulation(f"tether {status} diverged in trial {spec.index}")
                cmd_log[k] = cmds
                meas_log[k] = out_m

            if record.status == "infeasible":
                # perturbation skipped; the runner keeps station-keeping at nominal tension
                records.append(record)
                runner = runner.with_array(body)
                clock = t0 + k * dt_master
                t_end = clock
                continue

            n_done = n_ticks if stopped_at is None else stopped_at
            record.trace_t = tt[:n_done]
            record.trace_cmd = cmd_log[:n_done]
            record.trace_meas = meas_log[:n_done]
            dec = slice(0, n_done, WAIST_DECIMATION)
            record.waist = np.column_stack([tt[dec], waist[dec]])
            if stopped_at is not None:
                record.status = "estopped"
                record.reason = "emergency stop: commands returned to nominal"
                records.append(record)
                result.estopped = True
                raise EStop("emergency stop", result=result)

            record.net_impulse = _projected_impulse(record, ax, ay, spec.angle_deg, nominal,
                                                    onset, onset + config.pulse_duration + 0.5)
            record.max_displacement_mm = extract_displacement(record.waist, onset)
            records.append(record)
            runner = runner.with_array(body)
            clock = tt[-1] + dt_master
            t_end = clock
    return result


def _projected_impulse(record: TrialRecord, ax, ay, angle_deg, nominal, t_a, t_b) -> float:
    """Integral of the measured tension resultant change along the command direction.

    Unit vectors follow the recorded waist position (linearly interpolated to
    the tension samples); the nominal-tension resultant is subtracted.
    """
    t = record.trace_t
    wx = np.interp(t, record.waist[:, 0], record.waist[:, 1])
    wy = np.interp(t, record.waist[:, 0], record.waist[:, 2])
    dx = ax[None, :] - wx[:, None]
    dy = ay[None, :] - wy[:, None]
    d = np.hypot(dx, dy)
    b = math.radians(angle_deg)
    along = (dx * math.cos(b) + dy * math.sin(b)) / d
    excess = np.sum((record.trace_meas - nominal) * along, axis=1)
    mask = (t >= t_a - 1e-9) & (t <= t_b + 1e-9)
    return float(np.trapezoid(excess[mask], t[mask]))


def _trace_csv(t, cmd, meas) -> str:
    lines = ["t_s,commanded_N,measured_N"]
    lines += [f"{a:.3f},{b:.4f},{c:.4f}" for a, b, c in zip(t, cmd, meas)]
    return "\n".join(lines) + "\n"


def write_session(result: SessionResult, out_dir, log_name: str = "trials.jsonl",
                  summary_name: str = "summary.json") -> Path:
    """Write trace CSVs, the JSONL trial log and ``summary.json``; return the log path."""
    out = Path(out_dir)
    traces = out / "traces"
    traces.mkdir(parents=True, exist_ok=True)
    pid = result.config.participant_id
    lines = []
    for rec in result.records:
        if rec.trace_t is not None:
            stem = f"{pid}_trial{rec.spec.index:03d}"
            files = {}
            for i, name in enumerate(("left", "right", "back")):
                path = traces / f"{stem}_{name}.csv"
                path.write_text(_trace_csv(rec.trace_t, rec.trace_cmd[:, i], rec.trace_meas[:, i]))
                files[name] = str(path.relative_to(out))
            wpath = traces / f"{stem}_waist.csv"
            wpath.write_text("t_s,x_m,y_m\n" + "".join(f"{a:.3f},{b:.6f},{c:.6f}\n" for a, b, c in rec.waist))
            files["waist"] = str(wpath.relative_to(out))
            rec.trace_files = files
        lines.append(json.dumps(rec.to_dict(), sort_keys=True))
    log = out / log_name
    log.write_text("\n".join(lines) + ("\n" if lines else ""))
    (out / summary_name).write_text(json.dumps(result.summary(), sort_keys=True, indent=2) + "\n")
    return log


def read_trial_log(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def simulate_study(n_participants: int = 6, seed: int = 0, mass_range=(60.0, 115.0),
                   base: SessionConfig | None = None, participant_sd: float = 0.12,
                   geometry: Geometry | None = None, plant: PlantParams | None = None,
                   gains: ControllerGains | None = None) -> list[SessionResult]:
    """Several participants with random mass, scenario order and stiffness."""
    base = base or SessionConfig()
    rng = np.random.default_rng(seed)
    out = []
    for p in range(n_participants):
        mass = float(rng.uniform(*mass_range))
        order = tuple(SCENARIOS[i] for i in rng.permutation(len(SCENARIOS)))
        scale = float(math.exp(rng.normal(0.0, participant_sd)))
        cfg = replace(base, participant_mass=mass, scenarios=order, stiffness_scale=scale,
                      rng_seed=int(rng.integers(2**31)), participant_id=f"P{p + 1:02d}")
        out.append(run_session(cfg, geometry, plant, gains))
    return out

