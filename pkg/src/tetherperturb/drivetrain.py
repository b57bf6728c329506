"""Single-tether drive-train: plant model, PID + feedforward force loop,
step/impulse metrics, frequency response and damping identification.

The plant maps motor torque to drum angle,

    theta_out / T_m = N / ((N^2 J_m + J_D) s^2 + (N^2 B_m + B_p r_D + B_D) s + K_T r_D^2)

and tether tension is K_T times the stretch r_D * theta + endpoint displacement.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import optimize

from . import kernels
from .errors import GridTooCoarse, NoStepDetected, NonConvexWarning, UnstableSimulation, WindowNotFound
from .runner import RunnerParams

CONTROL_RATE = 10_000.0
LOADCELL_RESOLUTION = 0.01358
NOMINAL_TENSION = 30.0
HALF_POWER = 1.0 / math.sqrt(2.0)
HOLD_START_FRACTION = 0.4


@dataclass(frozen=True)
class PlantParams:
    """Drive-train constants.

    Only the aggregate coefficients are pinned by data: drum inertia and drum
    damping are the free terms set by :func:`calibrate_plant` so that the
    half-power bandwidth is 35.343 rad/s with damping ratio 1.2 (step settling
    about 112 ms).
    """

    gear_ratio: float = 10.0
    motor_inertia: float = 5e-6
    drum_inertia: float = 0.0010973583796509915
    motor_damping: float = 0.001
    pulley_damping: float = 0.2
    drum_damping: float = 0.15130476246154934
    tether_stiffness: float = 800.0
    drum_radius: float = 0.1

    def __post_init__(self):
        positive = (self.gear_ratio, self.motor_inertia, self.drum_inertia,
                    self.tether_stiffness, self.drum_radius)
        if any(v <= 0 for v in positive):
            raise ValueError("gear ratio, inertias, stiffness and radius must be positive")
        if min(self.motor_damping, self.pulley_damping, self.drum_damping) < 0:
            raise ValueError("damping terms must be >= 0")

    @property
    def a2(self) -> float:
        return self.gear_ratio**2 * self.motor_inertia + self.drum_inertia

    @property
    def a1(self) -> float:
        return (self.gear_ratio**2 * self.motor_damping + self.pulley_damping * self.drum_radius
                + self.drum_damping)

    @property
    def a0(self) -> float:
        return self.tether_stiffness * self.drum_radius**2

    def with_total_damping(self, a1: float) -> "PlantParams":
        """Same plant with the lumped damping set to ``a1`` (split kept proportional)."""
        if a1 < 0:
            raise ValueError("damping must be >= 0")
        cur = self.a1
        if cur == 0:
            return replace(self, drum_damping=a1)
        s = a1 / cur
        return replace(self, motor_damping=self.motor_damping * s,
                       pulley_damping=self.pulley_damping * s, drum_damping=self.drum_damping * s)

    def kernel_array(self, a1: float | None = None) -> np.ndarray:
        return np.array([self.gear_ratio, self.drum_radius, self.tether_stiffness, self.a2,
                         self.a1 if a1 is None else a1])

    def to_dict(self) -> dict:
        return {
            "gear_ratio": self.gear_ratio,
            "motor_inertia_kgm2": self.motor_inertia,
            "drum_inertia_kgm2": self.drum_inertia,
            "motor_damping_nms": self.motor_damping,
            "pulley_damping_nms": self.pulley_damping,
            "drum_damping_nms": self.drum_damping,
            "tether_stiffness_n_per_m": self.tether_stiffness,
            "drum_radius_m": self.drum_radius,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PlantParams":
        names = {
            "gear_ratio": "gear_ratio",
            "motor_inertia_kgm2": "motor_inertia",
            "drum_inertia_kgm2": "drum_inertia",
            "motor_damping_nms": "motor_damping",
            "pulley_damping_nms": "pulley_damping",
            "drum_damping_nms": "drum_damping",
            "tether_stiffness_n_per_m": "tether_stiffness",
            "drum_radius_m": "drum_radius",
        }
        return cls(**{names[k]: v for k, v in data.items()})


def half_power_ratio(damping_ratio: float) -> float:
    """-3 dB bandwidth over natural frequency for a standard second-order lag."""
    z2 = damping_ratio**2
    return math.sqrt(1 - 2 * z2 + math.sqrt(4 * z2 * z2 - 4 * z2 + 2))


def calibrate_plant(bandwidth: float = 35.343, damping_ratio: float = 1.2,
                    base: PlantParams | None = None) -> PlantParams:
    """Pick drum inertia and drum damping so the plant hits ``bandwidth`` (rad/s)."""
    base = base or PlantParams()
    wn = bandwidth / half_power_ratio(damping_ratio)
    a2 = base.a0 / wn**2
    a1 = 2 * damping_ratio * wn * a2
    j_d = a2 - base.gear_ratio**2 * base.motor_inertia
    b_d = a1 - base.gear_ratio**2 * base.motor_damping - base.pulley_damping * base.drum_radius
    if j_d <= 0 or b_d < 0:
        raise ValueError("base motor/pulley terms already exceed the calibrated aggregates")
    return replace(base, drum_inertia=j_d, drum_damping=b_d)


@dataclass(frozen=True)
class ControllerGains:
    # torque per newton of force error; separate sets for nominal and perturbation modes
    kp_nominal: float = 0.002
    ki_nominal: float = 0.02
    kd_nominal: float = 0.0
    kp_perturb: float = 0.001
    ki_perturb: float = 0.05
    kd_perturb: float = 1e-5
    k_feedforward: float = 0.9

    def __post_init__(self):
        if any(v < 0 for v in (self.kp_nominal, self.ki_nominal, self.kd_nominal, self.kp_perturb,
                               self.ki_perturb, self.kd_perturb, self.k_feedforward)):
            raise ValueError("gains must be >= 0")

    def kernel_array(self, f_ref: float = NOMINAL_TENSION) -> np.ndarray:
        return np.array([self.kp_nominal, self.ki_nominal, self.kd_nominal, self.kp_perturb,
                         self.ki_perturb, self.kd_perturb, self.k_feedforward, f_ref])

    def without_feedforward(self) -> "ControllerGains":
        return replace(self, k_feedforward=0.0)

    @classmethod
    def open_loop(cls) -> "ControllerGains":
        """Feedforward only: the motor torque is the static torque for the command."""
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerGains":
        return cls(**data)


@dataclass(frozen=True)
class CommandProfile:
    """Piecewise-constant tether force command; segment i starts at ``times[i]``."""

    times: tuple[float, ...]
    forces: tuple[float, ...]
    modes: tuple[str, ...]

    def __post_init__(self):
        if not (len(self.times) == len(self.forces) == len(self.modes)) or not self.times:
            raise ValueError("profile needs matching, non-empty times/forces/modes")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("profile times must increase")
        if any(f < 0 for f in self.forces):
            raise ValueError("commanded force must be >= 0")
        if any(m not in ("nominal", "perturbation") for m in self.modes):
            raise ValueError("mode must be 'nominal' or 'perturbation'")

    @property
    def span(self) -> float:
        return self.times[-1]

    @property
    def peak(self) -> float:
        return max(self.forces)

    @classmethod
    def pulse(cls, baseline: float = NOMINAL_TENSION, amplitude: float = 125.0, onset: float = 0.2,
              duration: float = 0.25) -> "CommandProfile":
        return cls((0.0, onset, onset + duration), (baseline, baseline + amplitude, baseline),
                   ("nominal", "perturbation", "nominal"))

    @classmethod
    def step(cls, baseline: float, level: float, onset: float, mode: str = "perturbation") -> "CommandProfile":
        return cls((0.0, onset), (baseline, level), ("nominal", mode))

    def sample(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        idx = np.searchsorted(np.asarray(self.times), t, side="right") - 1
        idx = np.clip(idx, 0, len(self.times) - 1)
        forces = np.asarray(self.forces, dtype=float)[idx]
        modes = np.array([m == "perturbation" for m in self.modes], dtype=np.int64)[idx]
        return forces, modes

    def to_csv(self) -> str:
        lines = ["t_s,force_N,mode"]
        lines += [f"{t!r},{f!r},{m}" for t, f, m in zip(self.times, self.forces, self.modes)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, source) -> "CommandProfile":
        text = Path(source).read_text() if not isinstance(source, io.StringIO) else source.getvalue()
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty profile")
        return cls(tuple(float(r["t_s"]) for r in rows), tuple(float(r["force_N"]) for r in rows),
                   tuple((r.get("mode") or "perturbation").strip() for r in rows))


@dataclass
class ForceTrace:
    t: np.ndarray
    commanded: np.ndarray
    measured: np.ndarray
    sample_rate: float = CONTROL_RATE
    true_force: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.commanded = np.asarray(self.commanded, dtype=float)
        self.measured = np.asarray(self.measured, dtype=float)
        if not (self.t.shape == self.commanded.shape == self.measured.shape):
            raise ValueError("trace columns must have equal length")
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trace time must increase")

    def __len__(self):
        return self.t.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t_s,commanded_N,measured_N\n")
        for t, c, m in zip(self.t, self.commanded, self.measured):
            buf.write(f"{t:.6f},{c:.6f},{m:.6f}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, path) -> "ForceTrace":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            return cls(np.empty(0), np.empty(0), np.empty(0))
        t = data[:, 0]
        rate = 1.0 / np.median(np.diff(t)) if t.size > 1 else CONTROL_RATE
        return cls(t, data[:, 1], data[:, 2], float(rate))


@dataclass(frozen=True)
class RunnerLoad:
    """Runner-coupled endpoint: a 1-D runner on the tether line plus gait sway."""

    runner: RunnerParams = RunnerParams()
    sway_amplitude: float = 0.01
    sway_frequency: float = 3.57


@dataclass(frozen=True)
class StepMetrics:
    percent_overshoot: float
    rise_time_ms: float
    ripple_pp: float
    steady_error: float
    net_impulse: float
    settling_time_ms: float


@dataclass(frozen=True)
class TransferFunction:
    numerator: float
    denominator: tuple[float, float, float]  # a2, a1, a0

    @property
    def dc_gain(self) -> float:
        return self.numerator / self.denominator[2]

    def poles(self) -> np.ndarray:
        return np.roots(self.denominator)

    def __call__(self, s):
        a2, a1, a0 = self.denominator
        return self.numerator / (a2 * s * s + a1 * s + a0)


@dataclass(frozen=True)
class BodeResult:
    omega: np.ndarray
    magnitude_db: np.ndarray
    phase_deg: np.ndarray
    bandwidth: float  # rad/s, -3 dB (half power) below the DC gain


@dataclass(frozen=True)
class DampingFit:
    total_damping: float
    rmse: float
    scan_damping: np.ndarray = field(repr=False)
    scan_rmse: np.ndarray = field(repr=False)


def transfer_function(params: PlantParams) -> TransferFunction:
    return TransferFunction(params.gear_ratio, (params.a2, params.a1, params.a0))


def bode(params: PlantParams, omega) -> BodeResult:
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 1 or omega.size < 2 or omega[0] <= 0 or np.any(np.diff(omega) <= 0):
        raise ValueError("frequency grid must be positive and increasing")
    tf = transfer_function(params)
    resp = tf(1j * omega)
    mag = np.abs(resp)
    phase = np.degrees(np.unwrap(np.angle(resp)))
    target = abs(tf.dc_gain) * HALF_POWER
    below = np.nonzero(mag < target)[0]
    if below.size == 0 or below[0] == 0:
        raise GridTooCoarse("the -3 dB crossing is not bracketed by the grid")
    lo, hi = omega[below[0] - 1], omega[below[0]]
    while hi - lo > 1e-3:
        mid = 0.5 * (lo + hi)
        if abs(tf(1j * mid)) < target:
            hi = mid
        else:
            lo = mid
    return BodeResult(omega, 20 * np.log10(mag), phase, 0.5 * (lo + hi))


def step_response(a2: float, a1: float, a0: float, t) -> np.ndarray:
    """Unit-DC step response of a0 / (a2 s^2 + a1 s + a0), zero for t < 0."""
    t = np.asarray(t, dtype=float)
    tt = np.maximum(t, 0.0)
    disc = a1 * a1 - 4 * a2 * a0
    if abs(disc) <= 1e-12 * a1 * a1:
        p = -a1 / (2 * a2)
        y = 1 - (1 - p * tt) * np.exp(p * tt)
    else:
        root = np.sqrt(complex(disc))
        p1 = (-a1 + root) / (2 * a2)
        p2 = (-a1 - root) / (2 * a2)
        y = 1 + (p2 * np.exp(p1 * tt) - p1 * np.exp(p2 * tt)) / (p1 - p2)
        y = y.real
    return np.where(t < 0, 0.0, y)


def step_settling_time(params: PlantParams, band: float = 0.02, horizon: float = 2.0,
                       a1: float | None = None) -> float:
    """Settling time (ms) of the plant's normalised step response."""
    t = np.linspace(0.0, horizon, int(horizon * 100_000) + 1)
    y = step_response(params.a2, params.a1 if a1 is None else a1, params.a0, t)
    out = np.nonzero(np.abs(y - 1) > band)[0]
    if out.size == 0:
        return 0.0
    if out[-1] + 1 >= t.size:
        return math.nan
    return 1000.0 * t[out[-1] + 1]


def simulate_arrays(params: PlantParams, gains: ControllerGains, cmd, mode, disp=None, *,
                    dt: float = 1.0 / CONTROL_RATE, noise=None, quantization: float = 0.0,
                    nominal: float = NOMINAL_TENSION, force_limit: float = math.inf,
                    a1: float | None = None):
    """Low-level stationary run over explicit per-step arrays; returns (force, measured)."""
    cmd = np.ascontiguousarray(cmd, dtype=float)
    mode = np.ascontiguousarray(mode, dtype=np.int64)
    n = cmd.size
    disp = np.zeros(n) if disp is None else np.ascontiguousarray(disp, dtype=float)
    noise = np.zeros(n) if noise is None else np.ascontiguousarray(noise, dtype=float)
    plant = params.kernel_array(a1)
    garr = gains.kernel_array(nominal)
    state = np.zeros(6)
    kernels.drivetrain_equilibrium(state, float(cmd[0]) if n else 0.0, float(disp[0]) if n else 0.0,
                                   plant, garr)
    force = np.zeros(n)
    meas = np.zeros(n)
    bad = kernels.drivetrain_run(state, cmd, mode, disp, noise, plant, garr, quantization, dt,
                                 force_limit, force, meas)
    if bad >= 0:
        raise UnstableSimulation(f"tether force exceeded {force_limit:.1f} N at step {bad}")
    return force, meas


def open_loop_response(params: PlantParams, torque, dt: float = 1.0 / CONTROL_RATE) -> np.ndarray:
    """Tether force for a motor-torque sequence with no feedback, from rest."""
    torque = np.ascontiguousarray(torque, dtype=float)
    n = torque.size
    # the feedforward path with unit gain and zero reference passes torque straight through
    cmd = torque * params.gear_ratio / params.drum_radius
    state = np.zeros(6)
    force = np.zeros(n)
    meas = np.zeros(n)
    kernels.drivetrain_run(state, cmd, np.ones(n, dtype=np.int64), np.zeros(n), np.zeros(n),
                           params.kernel_array(), ControllerGains.open_loop().kernel_array(0.0), 0.0, dt,
                           math.inf, force, meas)
    return force


def simulate_force(params: PlantParams, gains: ControllerGains, command: CommandProfile,
                   load_model: str = "stationary", seed=None, duration: float | None = None, *,
                   dt: float = 1.0 / CONTROL_RATE, noise_std: float = 0.0,
                   quantization: float = LOADCELL_RESOLUTION, nominal: float = NOMINAL_TENSION,
                   runner: RunnerLoad | None = None) -> ForceTrace:
    """Closed-loop force response of one tether to ``command``.

    ``load_model`` is ``"stationary"`` (fixed endpoint) or ``"runner"``
    (endpoint moves with a coupled 1-D runner plus sinusoidal gait sway).
    """
    if load_model not in ("stationary", "runner"):
        raise ValueError("load_model must be 'stationary' or 'runner'")
    if duration is None:
        duration = command.span + 0.5
    if duration < command.span:
        raise ValueError("duration shorter than the command profile")
    n = int(round(duration / dt)) + 1
    t = np.arange(n) * dt
    cmd, mode = command.sample(t)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_std, n) if noise_std > 0 else np.zeros(n)
    limit = 10.0 * max(command.peak, 1e-9)
    if load_model == "stationary":
        force, meas = simulate_arrays(params, gains, cmd, mode, dt=dt, noise=noise,
                                      quantization=quantization, nominal=nominal, force_limit=limit)
    else:
        load = runner or RunnerLoad()
        rp = load.runner
        sway = load.sway_amplitude * np.sin(2 * np.pi * load.sway_frequency * t)
        plant = params.kernel_array()
        garr = gains.kernel_array(nominal)
        state = np.zeros(6)
        kernels.drivetrain_equilibrium(state, float(cmd[0]), float(sway[0]), plant, garr)
        body = np.zeros(2)
        force = np.zeros(n)
        meas = np.zeros(n)
        disp = np.zeros(n)
        bad = kernels.tether_runner_run(state, body, cmd, mode, sway, noise, plant, garr,
                                        quantization, dt, limit, rp.mass, rp.stiffness, rp.damping,
                                        float(cmd[0]), force, meas, disp)
        if bad >= 0:
            raise UnstableSimulation(f"tether force exceeded {limit:.1f} N at step {bad}")
    return ForceTrace(t, cmd, meas, 1.0 / dt, true_force=force)


def _crossing_time(t, y, level, start):
    """First time at or after index ``start`` where y reaches ``level`` (linear interp)."""
    idx = np.nonzero(y[start:] >= level)[0]
    if idx.size == 0:
        return math.nan
    k = start + idx[0]
    if k == start or y[k] == level:
        return t[k]
    y0, y1 = y[k - 1], y[k]
    return t[k - 1] + (level - y0) / (y1 - y0) * (t[k] - t[k - 1])


def net_impulse(trace: ForceTrace, baseline: float, t_start: float, t_end: float) -> float:
    """Exact integral of the linearly interpolated (measured - baseline) over [t_start, t_end]."""
    t, y = trace.t, trace.measured - baseline
    if t_end < t_start:
        return -net_impulse(trace, baseline, t_end, t_start)
    if t.size < 2 or t_start < t[0] - 1e-12 or t_end > t[-1] + 1e-12:
        raise WindowNotFound("integration window outside the trace")
    inner = (t > t_start) & (t < t_end)
    ts = np.concatenate(([t_start], t[inner], [t_end]))
    ys = np.interp(ts, t, y)
    return float(np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(ts)))


def perturbation_window(trace: ForceTrace, baseline: float, command_peak: float) -> tuple[float, float]:
    if trace.t.size == 0 or command_peak <= baseline:
        raise WindowNotFound("no command above baseline")
    above = np.nonzero(trace.commanded > baseline + 0.5 * (command_peak - baseline))[0]
    if above.size == 0:
        raise WindowNotFound("command never leaves the baseline")
    on = trace.t[above[0]]
    last = above[-1]
    off = trace.t[last + 1] if last + 1 < trace.t.size else trace.t[last]
    return float(on), float(off)


def step_metrics(trace: ForceTrace, baseline: float, command_peak: float, margin: float = 0.5,
                 settle_band: float = 0.02) -> StepMetrics:
    on, off = perturbation_window(trace, baseline, command_peak)
    if trace.t[-1] < off + margin - 1e-9:
        raise WindowNotFound("trace must extend 0.5 s past the command window")
    t, y = trace.t, trace.measured
    step = command_peak - baseline
    i_on = int(np.searchsorted(t, on))
    i_off = int(np.searchsorted(t, off))
    hold = y[i_on:i_off]
    overshoot = max(0.0, (hold.max() - command_peak) / step * 100.0) if hold.size else 0.0
    t10 = _crossing_time(t, y, baseline + 0.1 * step, i_on)
    t90 = _crossing_time(t, y, baseline + 0.9 * step, i_on)
    rise = (t90 - t10) * 1000.0 if not (math.isnan(t10) or math.isnan(t90) or t90 > off) else math.nan
    # hold phase: the last 60% of the command window, after the initial transient
    i_hold = int(np.searchsorted(t, on + HOLD_START_FRACTION * (off - on)))
    seg = y[i_hold:i_off]
    ripple = float(np.ptp(seg)) if seg.size else 0.0
    steady = float(np.mean(command_peak - seg)) if seg.size else 0.0
    outside = np.nonzero(np.abs(hold - command_peak) > settle_band * step)[0]
    if outside.size == 0:
        settling = 0.0
    elif outside[-1] + 1 >= hold.size:
        settling = math.nan
    else:
        settling = (t[i_on + outside[-1] + 1] - on) * 1000.0
    # start at the last baseline sample so the interpolated rising edge is counted
    impulse = net_impulse(trace, baseline, t[max(i_on - 1, 0)], off + margin)
    return StepMetrics(float(overshoot), float(rise), ripple, steady, impulse, float(settling))


def _detect_step(trace: ForceTrace):
    c = trace.commanded
    if c.size < 3:
        raise NoStepDetected("trace too short")
    span = np.ptp(c)
    if span <= 1e-9:
        raise NoStepDetected("commanded channel is flat")
    moved = np.nonzero(np.abs(c - c[0]) > 1e-3 * span)[0]
    k0 = moved[0]
    level = c[k0]
    after = np.nonzero(np.abs(c[k0:] - level) > 1e-3 * span)[0]
    k1 = k0 + after[0] if after.size else c.size
    return k0, k1, float(c[0]), float(level - c[0])


def fit_damping(recorded: ForceTrace, known: PlantParams, n_scan: int = 81,
                rel_tol: float = 1e-4) -> DampingFit:
    """Lumped damping a1 minimising RMSE between the model step and the recording.

    ``known`` supplies N, inertias, stiffness and radius; its damping is ignored.
    """
    k0, k1, base, amp = _detect_step(recorded)
    t = recorded.t[k0 - 1:k1] - recorded.t[k0 - 1]
    y = recorded.measured[k0 - 1:k1]
    a2, a0 = known.a2, known.a0

    def rmse(a1):
        model = base + amp * step_response(a2, a1, a0, t)
        return float(np.sqrt(np.mean((model - y) ** 2)))

    crit = 2.0 * math.sqrt(a2 * a0)
    grid = np.geomspace(crit / 50.0, crit * 50.0, n_scan)
    errs = np.array([rmse(a) for a in grid])
    best = int(np.argmin(errs))
    if best in (0, n_scan - 1):
        raise NoStepDetected("damping optimum lies outside the search range")
    minima = [i for i in range(1, n_scan - 1) if errs[i] <= errs[i - 1] and errs[i] <= errs[i + 1]]
    rivals = [i for i in minima if abs(i - best) > 1 and errs[i] <= 1.05 * errs[best]]
    if rivals:
        warnings.warn(f"{len(rivals) + 1} near-equal RMSE minima in the damping scan", NonConvexWarning,
                      stacklevel=2)
    a_opt = optimize.golden(rmse, brack=(grid[best - 1], grid[best], grid[best + 1]), tol=rel_tol)
    return DampingFit(float(a_opt), rmse(a_opt), grid, errs)
