"""Planar tether geometry, force decomposition and tension allocation.

Frame: origin at the treadmill centre, +x to the runner's right, +y forward.
Force angles are in degrees, 0 = right, 90 = forward, 180 = left, 270 = back.
Tethers are always ordered (left, right, back).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (
    DegenerateGeometry,
    Infeasible,
    InvalidConfig,
    NonPositiveParameter,
    ParticipantOutsideTreadmill,
)

GRAVITY = 9.81


@dataclass(frozen=True)
class Geometry:
    treadmill_half_width: float = 0.9
    treadmill_half_length: float = 1.625
    anchor_left: tuple[float, float] = (-2.0, 0.6)
    anchor_right: tuple[float, float] = (2.0, 0.6)
    anchor_back: tuple[float, float] = (0.0, -2.0)
    tension_min: float = 30.0
    tension_max: float = 600.0
    nominal_tension: float = 30.0
    tether_length: float = 7.0
    tether_mass: float = 0.014

    def __post_init__(self):
        object.__setattr__(self, "anchor_left", tuple(float(v) for v in self.anchor_left))
        object.__setattr__(self, "anchor_right", tuple(float(v) for v in self.anchor_right))
        object.__setattr__(self, "anchor_back", tuple(float(v) for v in self.anchor_back))
        if self.treadmill_half_width <= 0 or self.treadmill_half_length <= 0:
            raise InvalidConfig("treadmill extents must be positive")
        if not 0 <= self.tension_min < self.tension_max:
            raise InvalidConfig("need 0 <= tension_min < tension_max")
        if not self.tension_min <= self.nominal_tension <= self.tension_max:
            raise InvalidConfig("nominal_tension must lie within the tension bounds")
        if self.tether_length <= 0 or self.tether_mass <= 0:
            raise InvalidConfig("tether length and mass must be positive")
        for name, (x, y) in self.anchors_named():
            if self.contains((x, y)):
                raise InvalidConfig(f"anchor_{name} lies on the treadmill")
        if self.anchor_left[0] >= 0 or self.anchor_right[0] <= 0 or self.anchor_back[1] >= 0:
            raise InvalidConfig("expected left x<0, right x>0, back y<0")

    def anchors_named(self):
        return (("left", self.anchor_left), ("right", self.anchor_right), ("back", self.anchor_back))

    def anchor_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.array([self.anchor_left, self.anchor_right, self.anchor_back], dtype=float)
        return np.ascontiguousarray(a[:, 0]), np.ascontiguousarray(a[:, 1])

    def contains(self, point, tol: float = 1e-12) -> bool:
        x, y = point
        return abs(x) <= self.treadmill_half_width + tol and abs(y) <= self.treadmill_half_length + tol

    @property
    def treadmill_area(self) -> float:
        return 4.0 * self.treadmill_half_width * self.treadmill_half_length

    def to_dict(self) -> dict:
        return {
            "treadmill_half_width_m": self.treadmill_half_width,
            "treadmill_half_length_m": self.treadmill_half_length,
            "anchor_left_m": list(self.anchor_left),
            "anchor_right_m": list(self.anchor_right),
            "anchor_back_m": list(self.anchor_back),
            "tension_min_n": self.tension_min,
            "tension_max_n": self.tension_max,
            "nominal_tension_n": self.nominal_tension,
            "tether_length_m": self.tether_length,
            "tether_mass_kg": self.tether_mass,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Geometry":
        keys = {
            "treadmill_half_width_m": "treadmill_half_width",
            "treadmill_half_length_m": "treadmill_half_length",
            "anchor_left_m": "anchor_left",
            "anchor_right_m": "anchor_right",
            "anchor_back_m": "anchor_back",
            "tension_min_n": "tension_min",
            "tension_max_n": "tension_max",
            "nominal_tension_n": "nominal_tension",
            "tether_length_m": "tether_length",
            "tether_mass_kg": "tether_mass",
        }
        unknown = set(data) - set(keys)
        if unknown:
            raise InvalidConfig(f"unknown geometry keys: {sorted(unknown)}")
        return cls(**{keys[k]: v for k, v in data.items()})


def load_geometry(path) -> Geometry:
    with open(Path(path)) as fh:
        return Geometry.from_dict(json.load(fh))


@dataclass(frozen=True)
class TetherTensionSet:
    left: float
    right: float
    back: float

    def as_array(self) -> np.ndarray:
        return np.array([self.left, self.right, self.back])


@dataclass(frozen=True)
class ForceCommand:
    magnitude: float
    angle_deg: float
    duration: float = 0.25

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("force magnitude must be >= 0")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        object.__setattr__(self, "angle_deg", float(self.angle_deg) % 360.0)

    def components(self) -> tuple[float, float]:
        b = math.radians(self.angle_deg)
        return self.magnitude * math.cos(b), self.magnitude * math.sin(b)


@dataclass(frozen=True)
class TetherAngles:
    """Tether angles with the sign convention

    F_x = F_RT cos(theta) - F_LT cos(gamma) + F_BT sin(alpha)
    F_y = F_RT sin(theta) + F_LT sin(gamma) - F_BT cos(alpha)
    """

    theta: float
    gamma: float
    alpha: float
    units: np.ndarray = field(repr=False)  # (3, 2) rows left, right, back


@dataclass(frozen=True)
class PlanarForce:
    fx: float
    fy: float

    @property
    def magnitude(self) -> float:
        return math.hypot(self.fx, self.fy)

    @property
    def angle_deg(self) -> float:
        return math.degrees(math.atan2(self.fy, self.fx)) % 360.0


def _check_participant(geometry: Geometry, participant) -> tuple[float, float]:
    px, py = float(participant[0]), float(participant[1])
    if not geometry.contains((px, py)):
        raise ParticipantOutsideTreadmill(f"participant ({px:.3f}, {py:.3f}) is off the treadmill")
    return px, py


def tether_angles(geometry: Geometry, participant) -> TetherAngles:
    px, py = _check_participant(geometry, participant)
    units = np.empty((3, 2))
    for i, (_, (x, y)) in enumerate(geometry.anchors_named()):
        dx, dy = x - px, y - py
        d = math.hypot(dx, dy)
        if d < kernels.MIN_ANCHOR_DISTANCE:
            raise DegenerateGeometry("participant within 1 cm of an anchor")
        units[i] = dx / d, dy / d
    (lx, ly), (rx, ry), (bx, by) = units
    return TetherAngles(
        theta=math.atan2(ry, rx),
        gamma=math.atan2(ly, -lx),
        alpha=math.atan2(bx, -by),
        units=units,
    )


def resultant_force(tensions: TetherTensionSet, angles: TetherAngles) -> PlanarForce:
    f_lt, f_rt, f_bt = tensions.left, tensions.right, tensions.back
    th, ga, al = angles.theta, angles.gamma, angles.alpha
    fx = f_rt * math.cos(th) - f_lt * math.cos(ga) + f_bt * math.sin(al)
    fy = f_rt * math.sin(th) + f_lt * math.sin(ga) - f_bt * math.cos(al)
    return PlanarForce(fx, fy)


def allocate_tensions(command: ForceCommand, geometry: Geometry, participant) -> TetherTensionSet:
    """Tensions realising ``command`` at ``participant``.

    Among all in-bound solutions (a segment along the null direction of the
    2x3 force map) this picks the one closest to the nominal tension in the
    least-squares sense.  The objective is strictly convex on that segment,
    so the minimiser is unique whenever the three tethers span the plane.
    """
    px, py = _check_participant(geometry, participant)
    ax, ay = geometry.anchor_arrays()
    fx, fy = command.components()
    out = np.empty(3)
    code = kernels.allocate_kernel(
        px, py, fx, fy, ax, ay,
        geometry.tension_min, geometry.tension_max, geometry.nominal_tension, out,
    )
    if code == kernels.ALLOC_DEGENERATE:
        raise DegenerateGeometry("tether directions do not span the plane here")
    if code == kernels.ALLOC_INFEASIBLE:
        raise Infeasible(
            f"{command.magnitude:.1f} N at {command.angle_deg:.1f} deg is not realisable "
            f"at ({px:.3f}, {py:.3f}) within [{geometry.tension_min}, {geometry.tension_max}] N"
        )
    return TetherTensionSet(float(out[0]), float(out[1]), float(out[2]))


def natural_frequency(tension: float, length: float, mass: float, mode: int = 1) -> float:
    """Transverse vibration frequency (Hz) of a taut tether: (n/2l) sqrt(tau l / m)."""
    if tension <= 0 or length <= 0 or mass <= 0:
        raise NonPositiveParameter("tension, length and mass must be positive")
    if int(mode) != mode or mode < 1:
        raise NonPositiveParameter("mode must be an integer >= 1")
    return mode / (2.0 * length) * math.sqrt(tension * length / mass)


def min_nominal_tension(target_frequency: float, length: float, mass: float) -> float:
    """Smallest tension whose first mode sits at or above ``target_frequency``."""
    if length <= 0 or mass <= 0:
        raise NonPositiveParameter("length and mass must be positive")
    if target_frequency < 0:
        raise ValueError("target frequency must be >= 0")
    return 4.0 * target_frequency**2 * length * mass
