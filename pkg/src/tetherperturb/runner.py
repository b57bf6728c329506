"""Surrogate runner: a planar station-keeping impedance around a home point.

mass * accel = F_ext - k (pos - home) - c vel, with k and c scaled by a
bracing gain while the runner is braced.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels


@dataclass(frozen=True)
class RunnerParams:
    mass: float = 80.0
    natural_frequency: float = 1.2  # rad/s, unbraced
    damping_ratio: float = 0.5
    # behind the treadmill centre, where large forces stay feasible in every direction
    home: tuple[float, float] = (0.0, -0.4)

    def __post_init__(self):
        if self.mass <= 0 or self.natural_frequency <= 0 or self.damping_ratio < 0:
            raise ValueError("runner mass and natural frequency must be positive")

    @property
    def stiffness(self) -> float:
        return self.mass * self.natural_frequency**2

    @property
    def damping(self) -> float:
        return 2.0 * self.damping_ratio * self.mass * self.natural_frequency


@dataclass(frozen=True)
class RunnerState:
    position: tuple[float, float] = (0.0, -0.4)
    velocity: tuple[float, float] = (0.0, 0.0)
    braced: bool = False
    braced_direction: float | None = None
    brace_gain: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([*self.position, *self.velocity], dtype=float)

    def with_array(self, arr) -> "RunnerState":
        return replace(self, position=(float(arr[0]), float(arr[1])),
                       velocity=(float(arr[2]), float(arr[3])))


def runner_step(state: RunnerState, external_force, dt: float, params: RunnerParams) -> RunnerState:
    if not 0 < dt <= 0.01:
        raise ValueError("dt must be in (0, 0.01] s")
    arr = state.as_array()
    gain = state.brace_gain if state.braced else 1.0
    kernels.runner_step_kernel(
        arr, float(external_force[0]), float(external_force[1]), dt,
        params.mass, params.stiffness, params.damping, gain, params.home[0], params.home[1],
    )
    return state.with_array(arr)


def free_response(state: RunnerState, duration: float, params: RunnerParams, dt: float = 0.01) -> RunnerState:
    """Integrate with zero external force for ``duration`` seconds (unbraced)."""
    arr = state.as_array()
    n = int(math.ceil(duration / dt - 1e-9))
    if n <= 0:
        return state
    h = duration / n
    for _ in range(n):
        kernels.runner_step_kernel(arr, 0.0, 0.0, h, params.mass, params.stiffness,
                                   params.damping, 1.0, params.home[0], params.home[1])
    return replace(state.with_array(arr), braced=False, braced_direction=None, brace_gain=1.0)
