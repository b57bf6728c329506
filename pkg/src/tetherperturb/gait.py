"""Synthetic marker streams, causal right-foot stance detection, stance
prediction and warning scheduling."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

import numpy as np

from . import kernels
from .errors import InsufficientHistory, InvalidCadence, WindowNotFound

SAMPLE_RATE = 200.0
DEBOUNCE = 0.15
DEFAULT_WINDOW = 5
DEFAULT_LEAD = 0.5
ARM_ADVANCE = 0.04  # heel-strike prediction precedes the predicted stance by this much
DIRECTIONS = ("right", "front", "left", "back")
MODALITIES = ("audio", "visual", "audio_visual", "none")
DIRECTION_ANGLE = {"right": 0.0, "front": 90.0, "left": 180.0, "back": 270.0}
TONES = {"back": (2000.0, 0.06), "right": (1000.0, 0.03), "front": (1000.0, 0.03), "left": (1000.0, 0.03)}
LED_CLUSTERS = {"right": 0, "front": 1, "left": 2, "back": 3}
MARKERS = ("toe", "heel", "ankle", "waist")


# --------------------------------------------------------------------------
# marker streams
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkerFrame:
    timestamp: float
    toe: tuple[float, float, float]
    heel: tuple[float, float, float]
    ankle: tuple[float, float, float]
    waist: tuple[float, float, float]

    def to_line(self) -> str:
        vals = [self.timestamp, *self.toe, *self.heel, *self.ankle, *self.waist]
        return " ".join(f"{v:.6f}" for v in vals)

    @classmethod
    def from_line(cls, line: str) -> "MarkerFrame":
        v = [float(x) for x in line.split()]
        if len(v) != 13:
            raise ValueError(f"expected 13 columns, got {len(v)}")
        return cls(v[0], tuple(v[1:4]), tuple(v[4:7]), tuple(v[7:10]), tuple(v[10:13]))


@dataclass
class MarkerStream:
    """Column-oriented marker recording; each marker array is (n, 3)."""

    t: np.ndarray
    toe: np.ndarray
    heel: np.ndarray
    ankle: np.ndarray
    waist: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        n = self.t.size
        for name in MARKERS:
            arr = np.asarray(getattr(self, name), dtype=float).reshape(n, 3)
            setattr(self, name, arr)
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, i) -> MarkerFrame:
        return MarkerFrame(float(self.t[i]), *(tuple(float(v) for v in getattr(self, m)[i]) for m in MARKERS))

    def frames(self) -> Iterator[MarkerFrame]:
        for i in range(len(self)):
            yield self[i]

    def head(self, n: int) -> "MarkerStream":
        return MarkerStream(self.t[:n], self.toe[:n], self.heel[:n], self.ankle[:n], self.waist[:n])

    @classmethod
    def from_frames(cls, frames: Iterable[MarkerFrame]) -> "MarkerStream":
        frames = list(frames)
        return cls(np.array([f.timestamp for f in frames]),
                   *(np.array([getattr(f, m) for f in frames]).reshape(-1, 3) for m in MARKERS))

    def write(self, fh: TextIO) -> None:
        data = np.column_stack([self.t, self.toe, self.heel, self.ankle, self.waist])
        np.savetxt(fh, data, fmt="%.6f", delimiter=" ")

    def to_text(self) -> str:
        buf = io.StringIO()
        self.write(buf)
        return buf.getvalue()

    @classmethod
    def read(cls, fh: TextIO) -> "MarkerStream":
        return cls.from_frames(MarkerFrame.from_line(line) for line in fh if line.strip())


@dataclass
class GaitRecording:
    stream: MarkerStream
    stance_times: np.ndarray  # ground truth, phase-0 instants
    periods: np.ndarray
    cadence: float


def _bump(phase, start, width):
    """Half-sine bump on [start, start + width), zero elsewhere."""
    u = (phase - start) / width
    return np.where((u >= 0) & (u < 1), np.sin(np.pi * np.clip(u, 0, 1)), 0.0)


def foot_heights(phase) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Toe, heel and ankle heights (m) versus stride phase; phase 0 is stance.

    The toe dips to its lowest point at stance; the heel and ankle rise during
    swing, and the ankle drops below the heel once per stride late in swing.
    """
    phase = np.asarray(phase, dtype=float) % 1.0
    toe = 0.03 + 0.06 * (1 - np.cos(2 * np.pi * phase)) / 2
    heel = 0.05 + 0.12 * _bump(phase, 0.45, 0.50)
    ankle = 0.08 + 0.20 * _bump(phase, 0.40, 0.45)
    return toe, heel, ankle


def markers_from_phase(t, phase, stride_length: float = 0.8, sway=(0.01, 0.008),
                       cadence: float = 3.57) -> MarkerStream:
    t = np.asarray(t, dtype=float)
    phase = np.asarray(phase, dtype=float)
    toe_z, heel_z, ankle_z = foot_heights(phase)
    ang = 2 * np.pi * phase
    foot_y = 0.5 * stride_length * np.cos(ang)
    foot_x = np.full_like(t, 0.12)
    waist = np.column_stack([sway[0] * np.sin(2 * np.pi * cadence * t / 2),
                             sway[1] * np.sin(ang),
                             1.0 + 0.04 * np.cos(2 * ang)])
    toe = np.column_stack([foot_x, foot_y + 0.12, toe_z])
    heel = np.column_stack([foot_x, foot_y - 0.08, heel_z])
    ankle = np.column_stack([foot_x, foot_y - 0.04, ankle_z])
    return MarkerStream(t, toe, heel, ankle, waist)


def generate_gait(cadence: float = 3.57, speed: float = 2.8, duration: float = 10.0, seed=None,
                  cov: float = 0.03, sample_rate: float = SAMPLE_RATE, start_phase: float = 0.5) -> GaitRecording:
    """Synthetic right-foot marker stream with ground-truth stance instants.

    ``cadence`` is the right-stride rate in Hz.  Stride periods are drawn
    i.i.d. normal with coefficient of variation ``cov`` (clipped to half and
    one-and-a-half nominal periods).
    """
    if not 1.0 <= cadence <= 6.0:
        raise InvalidCadence(f"cadence {cadence} Hz outside [1, 6]")
    if duration <= 0:
        raise ValueError("duration must be > 0")
    if cov < 0 or speed < 0:
        raise ValueError("cov and speed must be >= 0")
    rng = np.random.default_rng(seed)
    period = 1.0 / cadence
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    n_strides = int(math.ceil(duration / period * 1.6)) + 4
    periods = np.full(n_strides, period)
    if cov > 0:
        periods = np.clip(rng.normal(period, cov * period, n_strides), 0.5 * period, 1.5 * period)
    starts = np.concatenate(([-start_phase * periods[0]], -start_phase * periods[0] + np.cumsum(periods)))
    k = np.searchsorted(starts, t, side="right") - 1
    phase = (t - starts[k]) / periods[k]
    stream = markers_from_phase(t, phase, stride_length=speed / cadence, cadence=cadence)
    # a stance counts only if the stream carries at least two frames after it
    last_ok = t[-1] - 2.0 / sample_rate if n else -1.0
    truth = starts[(starts > 0) & (starts <= last_ok + 1e-12)]
    used = periods[: int(np.searchsorted(starts, t[-1], side="right"))] if n else periods[:0]
    return GaitRecording(stream, truth, used, cadence)


# --------------------------------------------------------------------------
# stance detection
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GaitEvent:
    kind: str  # stance | heel_strike_prediction | warning_emitted | perturbation_trigger
    timestamp: float
    stride_period_estimate: float = math.nan


def stride_estimate(stance_times, window: int = DEFAULT_WINDOW) -> float:
    s = np.asarray(stance_times, dtype=float)
    if s.size < 2:
        return math.nan
    w = min(window, s.size - 1)
    return float(np.mean(np.diff(s[-(w + 1):])))


class StanceDetector:
    """Online right-foot stance detector.

    Arms when ankle minus heel height goes from positive to non-positive, then
    fires on the first later frame whose backward-difference toe slope turns
    positive.  Events closer than the debounce interval are suppressed.
    """

    def __init__(self, debounce: float = DEBOUNCE, window: int = DEFAULT_WINDOW):
        self.debounce = debounce
        self.window = window
        self._state = np.empty(6)
        self.reset()

    def reset(self) -> None:
        kernels.stance_reset(self._state)
        self.stances: list[float] = []

    def update(self, t: float, toe_z: float, heel_z: float, ankle_z: float) -> GaitEvent | None:
        if kernels.stance_step(self._state, float(t), float(toe_z), float(heel_z), float(ankle_z),
                               self.debounce):
            self.stances.append(float(t))
            return GaitEvent("stance", float(t), stride_estimate(self.stances, self.window))
        return None

    def feed(self, frame: MarkerFrame) -> GaitEvent | None:
        return self.update(frame.timestamp, frame.toe[2], frame.heel[2], frame.ankle[2])


def detect_stance(stream: MarkerStream, online: bool = True, debounce: float = DEBOUNCE,
                  window: int = DEFAULT_WINDOW) -> list[GaitEvent]:
    """Stance events for ``stream``; the online and batch paths give identical output."""
    if len(stream) < 3:
        raise ValueError("need at least 3 frames")
    if online:
        det = StanceDetector(debounce, window)
        events = []
        for i in range(len(stream)):
            ev = det.update(stream.t[i], stream.toe[i, 2], stream.heel[i, 2], stream.ankle[i, 2])
            if ev is not None:
                events.append(ev)
        return events
    idx = kernels.detect_stance_kernel(stream.t, np.ascontiguousarray(stream.toe[:, 2]),
                                       np.ascontiguousarray(stream.heel[:, 2]),
                                       np.ascontiguousarray(stream.ankle[:, 2]), debounce)
    times = stream.t[idx]
    return [GaitEvent("stance", float(tt), stride_estimate(times[: k + 1], window))
            for k, tt in enumerate(times)]


def stance_times(events: Iterable) -> np.ndarray:
    out = [e.timestamp if isinstance(e, GaitEvent) else float(e) for e in events
           if not isinstance(e, GaitEvent) or e.kind == "stance"]
    return np.asarray(out, dtype=float)


def predict_next_stance(history, window: int = DEFAULT_WINDOW) -> float:
    """Last stance plus the mean of the last ``window`` inter-stance intervals."""
    if window < 1:
        raise ValueError("window must be >= 1")
    s = stance_times(history)
    if s.size < 2:
        raise InsufficientHistory("need at least two stance events")
    return float(s[-1] + stride_estimate(s, window))


# --------------------------------------------------------------------------
# warnings
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WarningSpec:
    modality: str
    direction: str
    lead_time: float = DEFAULT_LEAD

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.lead_time <= 0:
            raise ValueError("lead_time must be > 0")

    @property
    def tone(self) -> tuple[float, float] | None:
        return TONES[self.direction] if self.modality in ("audio", "audio_visual") else None

    @property
    def led_cluster(self) -> int | None:
        return LED_CLUSTERS[self.direction] if self.modality in ("visual", "audio_visual") else None

    def stimulus(self) -> dict | None:
        if self.modality == "none":
            return None
        out = {"modality": self.modality, "direction": self.direction}
        if self.tone:
            out["tone_hz"], out["tone_s"] = self.tone
        if self.led_cluster is not None:
            out["led_cluster"] = self.led_cluster
        return out


@dataclass(frozen=True)
class ScheduledWarning:
    emission_time: float | None  # None when the modality is "none"
    target_stance: float
    stimulus: dict | None
    deferred_strides: int = 0


def schedule_warning(prediction: float, spec: WarningSpec, now: float,
                     stride_period: float | None = None) -> ScheduledWarning:
    """Warning emission ``lead_time`` before ``prediction``.

    If that instant is not in the future the target moves to the following
    predicted stance(s), one ``stride_period`` at a time, so a warning is
    never emitted late.
    """
    if prediction <= now:
        raise ValueError("prediction must lie after now")
    if spec.modality == "none":
        return ScheduledWarning(None, float(prediction), None, 0)
    target = float(prediction)
    deferred = 0
    while target - spec.lead_time <= now:
        if stride_period is None or stride_period <= 0:
            raise ValueError("a positive stride_period is needed to defer the warning")
        target += stride_period
        deferred += 1
    return ScheduledWarning(target - spec.lead_time, target, spec.stimulus(), deferred)


@dataclass(frozen=True)
class TriggerPlan:
    prediction: float
    warning: ScheduledWarning
    arm_time: float
    onset: float
    stride_period: float
    events: tuple[GaitEvent, ...] = field(default=())

    @property
    def lead_time(self) -> float | None:
        if self.warning.emission_time is None:
            return None
        return self.onset - self.warning.emission_time


def plan_trigger(stances, now: float, spec: WarningSpec, window: int = DEFAULT_WINDOW,
                 arm_advance: float = ARM_ADVANCE) -> TriggerPlan:
    """Predict, warn, arm and fire against a causal list of detected stances.

    Only stances at or before ``now`` feed the prediction; the perturbation
    fires at the first detected stance at or after the arm instant, which is
    ``arm_advance`` before the (possibly deferred) target stance.
    """
    s = stance_times(stances)
    past = s[s <= now]
    if past.size < 2:
        raise InsufficientHistory("need at least two stances before the trial start")
    period = stride_estimate(past, window)
    prediction = float(past[-1] + period)
    while prediction <= now:
        prediction += period
    warn = schedule_warning(prediction, spec, now, period)
    arm = warn.target_stance - arm_advance
    later = s[s >= arm - 1e-12]
    if later.size == 0:
        raise WindowNotFound("stream ended before the armed stance")
    onset = float(later[0])
    events = [GaitEvent("heel_strike_prediction", arm, period)]
    if warn.emission_time is not None:
        events.append(GaitEvent("warning_emitted", warn.emission_time, period))
    events.append(GaitEvent("perturbation_trigger", onset, period))
    events.sort(key=lambda e: e.timestamp)
    return TriggerPlan(prediction, warn, arm, onset, period, tuple(events))


def lead_time_trials(n_trials: int = 100, cadence: float = 3.57, cov: float = 0.03, seed=None,
                     lead: float = DEFAULT_LEAD, window: int = DEFAULT_WINDOW, spacing: float = 3.0) -> np.ndarray:
    """Achieved warning-to-onset times over ``n_trials`` warnings in one synthetic run."""
    rng = np.random.default_rng(seed)
    duration = spacing * (n_trials + 2)
    rec = generate_gait(cadence, duration=duration, seed=rng.integers(2**32), cov=cov)
    stances = stance_times(detect_stance(rec.stream, online=False))
    spec = WarningSpec("audio", "right", lead)
    leads = []
    for k in range(n_trials):
        now = spacing * (k + 1) + rng.uniform(0, 1.0)
        leads.append(plan_trigger(stances, now, spec, window).lead_time)
    return np.asarray(leads)
