from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tetherperturb.runner import RunnerParams, RunnerState, free_response, runner_step

PARAMS = RunnerParams()


def push(state, force, duration=0.25, total=3.0, dt=0.001):
    """Apply a constant force for ``duration`` and return the peak excursion from home."""
    peak = 0.0
    home = np.array(PARAMS.home)
    for k in range(int(round(total / dt))):
        f = force if k * dt < duration else (0.0, 0.0)
        state = runner_step(state, f, dt, PARAMS)
        peak = max(peak, float(np.linalg.norm(np.array(state.position) - home)))
    return peak


def test_rest_at_home_stays_home():
    s = RunnerState(position=PARAMS.home)
    for _ in range(1000):
        s = runner_step(s, (0.0, 0.0), 0.001, PARAMS)
    assert s.position == PARAMS.home and s.velocity == (0.0, 0.0)


def test_bracing_reduces_displacement():
    free = push(RunnerState(position=PARAMS.home), (200.0, 0.0))
    braced = push(RunnerState(position=PARAMS.home, braced=True, braced_direction=0.0, brace_gain=1.4),
                  (200.0, 0.0))
    assert braced < free


def test_doubling_impulse_doubles_displacement():
    one = push(RunnerState(position=PARAMS.home), (100.0, 50.0))
    two = push(RunnerState(position=PARAMS.home), (200.0, 100.0))
    assert two == pytest.approx(2 * one, rel=0.02)


def test_semi_implicit_update():
    """One step: velocity first, then position with the new velocity."""
    s = RunnerState(position=(0.1, -0.4), velocity=(0.2, 0.0))
    dt, f = 0.001, (50.0, 0.0)
    out = runner_step(s, f, dt, PARAMS)
    ax = (f[0] - PARAMS.stiffness * (0.1 - PARAMS.home[0]) - PARAMS.damping * 0.2) / PARAMS.mass
    vx = 0.2 + dt * ax
    assert out.velocity[0] == pytest.approx(vx, rel=1e-12)
    assert out.position[0] == pytest.approx(0.1 + dt * vx, rel=1e-12)


@pytest.mark.parametrize("dt", [0.0, 0.02])
def test_step_size_bounds(dt):
    with pytest.raises(ValueError):
        runner_step(RunnerState(), (0.0, 0.0), dt, PARAMS)


def test_invalid_params():
    with pytest.raises(ValueError):
        RunnerParams(mass=0.0)


def test_free_response_returns_home_between_trials():
    s = RunnerState(position=(0.3, 0.0), velocity=(0.5, -0.5), braced=True, brace_gain=1.3)
    out = free_response(s, 15.0, PARAMS)
    assert np.linalg.norm(np.array(out.position) - np.array(PARAMS.home)) < 0.01
    assert not out.braced


@given(st.floats(10.0, 300.0), st.floats(0.0, 360.0), st.floats(50.0, 120.0))
def test_excursion_stays_bounded(mag, angle, mass):
    p = replace(PARAMS, mass=mass)
    f = (mag * np.cos(np.radians(angle)), mag * np.sin(np.radians(angle)))
    s = RunnerState(position=p.home)
    for k in range(3000):
        s = runner_step(s, f if k < 250 else (0.0, 0.0), 0.001, p)
        assert abs(s.position[0]) <= 1.8 and abs(s.position[1]) <= 3.25
