import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import signal

from tetherperturb.drivetrain import (
    LOADCELL_RESOLUTION,
    CommandProfile,
    ControllerGains,
    ForceTrace,
    PlantParams,
    bode,
    calibrate_plant,
    fit_damping,
    net_impulse,
    open_loop_response,
    simulate_force,
    step_metrics,
    step_response,
    step_settling_time,
    transfer_function,
)
from tetherperturb.errors import GridTooCoarse, NoStepDetected, UnstableSimulation, WindowNotFound

PLANT = PlantParams()
GAINS = ControllerGains()
OMEGA = np.geomspace(1e-3, 1e4, 3000)


@pytest.fixture(scope="module")
def pulse_trace():
    return simulate_force(PLANT, GAINS, CommandProfile.pulse())


def open_loop_step(a1=None, amplitude=50.0):
    plant = PLANT if a1 is None else PLANT.with_total_damping(a1)
    return simulate_force(plant, ControllerGains.open_loop(), CommandProfile.step(30.0, 30.0 + amplitude, 0.2),
                          duration=1.5, quantization=0.0)


# ---------------------------------------------------------------- plant model

def test_transfer_function_coefficients():
    p = PLANT
    tf = transfer_function(p)
    a2, a1, a0 = tf.denominator
    assert a2 == pytest.approx(p.gear_ratio**2 * p.motor_inertia + p.drum_inertia)
    assert a1 == pytest.approx(p.gear_ratio**2 * p.motor_damping + p.pulley_damping * p.drum_radius
                               + p.drum_damping)
    assert a0 == pytest.approx(p.tether_stiffness * p.drum_radius**2)
    assert tf.numerator == p.gear_ratio


def test_dc_gain():
    p = PLANT
    assert transfer_function(p).dc_gain == pytest.approx(p.gear_ratio / (p.tether_stiffness * p.drum_radius**2))


def test_undamped_poles_are_imaginary():
    p = PlantParams(motor_damping=0.0, pulley_damping=0.0, drum_damping=0.0)
    poles = transfer_function(p).poles()
    np.testing.assert_allclose(poles.real, 0.0, atol=1e-12)
    np.testing.assert_allclose(sorted(np.abs(poles.imag)), [math.sqrt(p.a0 / p.a2)] * 2, rtol=1e-12)


def test_plant_rejects_nonpositive_values():
    with pytest.raises(ValueError):
        PlantParams(tether_stiffness=0.0)
    with pytest.raises(ValueError):
        PlantParams(motor_damping=-1.0)


def test_plant_dict_round_trip():
    assert PlantParams.from_dict(PLANT.to_dict()) == PLANT
    assert ControllerGains.from_dict(GAINS.to_dict()) == GAINS


def test_with_total_damping_sets_a1():
    assert PLANT.with_total_damping(0.5).a1 == pytest.approx(0.5)
    assert PLANT.with_total_damping(0.5).a2 == PLANT.a2


# ---------------------------------------------------------------- frequency response

def test_bode_low_frequency_is_dc_gain():
    res = bode(PLANT, OMEGA)
    dc_db = 20 * math.log10(transfer_function(PLANT).dc_gain)
    assert abs(res.magnitude_db[0] - dc_db) < 0.01


def test_bode_high_frequency_phase():
    res = bode(PLANT, OMEGA)
    assert res.phase_deg[-1] == pytest.approx(-180.0, abs=1.0)


def test_bode_matches_scipy():
    res = bode(PLANT, OMEGA)
    _, h = signal.freqs([PLANT.gear_ratio], [PLANT.a2, PLANT.a1, PLANT.a0], worN=OMEGA)
    np.testing.assert_allclose(res.magnitude_db, 20 * np.log10(np.abs(h)), atol=1e-9)
    np.testing.assert_allclose(res.phase_deg, np.degrees(np.unwrap(np.angle(h))), atol=1e-9)


def test_bandwidth_anchor():
    assert bode(PLANT, OMEGA).bandwidth == pytest.approx(35.343, abs=0.5)


def test_bandwidth_matches_closed_form():
    # |G(jw)|^2 = |G(0)|^2 / 2 solved as a quadratic in w^2
    a2, a1, a0 = PLANT.a2, PLANT.a1, PLANT.a0
    b = a1**2 - 2 * a0 * a2
    w2 = (-b + math.sqrt(b * b + 4 * a2**2 * a0**2)) / (2 * a2**2)
    assert bode(PLANT, OMEGA).bandwidth == pytest.approx(math.sqrt(w2), abs=1e-3)


def test_bode_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        bode(PLANT, np.linspace(0.1, 10.0, 50))


def test_bode_rejects_bad_grid():
    with pytest.raises(ValueError):
        bode(PLANT, [10.0, 1.0])


def test_calibration_reproduces_bandwidth():
    p = calibrate_plant(bandwidth=30.0)
    assert bode(p, OMEGA).bandwidth == pytest.approx(30.0, abs=1e-2)


def test_step_response_matches_scipy():
    t = np.linspace(0.0, 0.5, 2001)
    _, y = signal.step(([PLANT.a0], [PLANT.a2, PLANT.a1, PLANT.a0]), T=t)
    np.testing.assert_allclose(step_response(PLANT.a2, PLANT.a1, PLANT.a0, t), y, atol=1e-9)


def test_step_response_critical_damping_branch():
    a2, a0 = 1.0, 4.0
    t = np.linspace(0.0, 5.0, 501)
    y = step_response(a2, 4.0, a0, t)
    np.testing.assert_allclose(y, 1 - (1 + 2 * t) * np.exp(-2 * t), atol=1e-12)


def test_settling_anchor():
    assert step_settling_time(PLANT) == pytest.approx(114.0, abs=15.0)


# ---------------------------------------------------------------- time simulation

def test_stationary_pulse_metrics(pulse_trace):
    m = step_metrics(pulse_trace, 30.0, 155.0)
    assert m.percent_overshoot <= 6.0
    assert 45.0 <= m.rise_time_ms <= 70.0
    assert m.net_impulse == pytest.approx(31.25, rel=0.10)
    # frozen reference values for the default plant and gains
    assert m.percent_overshoot == pytest.approx(4.1409, abs=1e-3)
    assert m.rise_time_ms == pytest.approx(54.244, abs=1e-2)


def test_measured_channel_is_quantized(pulse_trace):
    q = pulse_trace.measured / LOADCELL_RESOLUTION
    np.testing.assert_allclose(q, np.round(q), atol=1e-6)


def test_zero_command_gives_zero_force():
    zero = CommandProfile((0.0,), (0.0,), ("nominal",))
    tr = simulate_force(PLANT, GAINS, zero, duration=1.0)
    assert np.all(tr.true_force == 0.0) and np.all(tr.measured == 0.0)


def test_feedforward_shortens_rise_time():
    step = CommandProfile.pulse(duration=2.0)
    with_ff = step_metrics(simulate_force(PLANT, GAINS, step), 30.0, 155.0)
    without = step_metrics(simulate_force(PLANT, GAINS.without_feedforward(), step), 30.0, 155.0)
    assert with_ff.rise_time_ms < without.rise_time_ms


def test_unstable_gains_detected():
    wild = ControllerGains(kd_perturb=0.1)  # derivative gain far past the discrete stability limit
    with pytest.raises(UnstableSimulation):
        simulate_force(PLANT, wild, CommandProfile.pulse())


def test_seeded_noise_is_deterministic():
    a = simulate_force(PLANT, GAINS, CommandProfile.pulse(), seed=4, noise_std=0.5)
    b = simulate_force(PLANT, GAINS, CommandProfile.pulse(), seed=4, noise_std=0.5)
    assert np.array_equal(a.measured, b.measured)


def test_duration_shorter_than_profile_rejected():
    with pytest.raises(ValueError):
        simulate_force(PLANT, GAINS, CommandProfile.pulse(), duration=0.3)


def test_open_loop_linearity_is_sample_exact():
    rng = np.random.default_rng(0)
    torque = np.cumsum(rng.normal(0.0, 0.01, 4000))
    single = open_loop_response(PLANT, torque)
    double = open_loop_response(PLANT, 2.0 * torque)
    assert np.array_equal(double, 2.0 * single)


@pytest.mark.parametrize("level,mode", [(100.0, "perturbation"), (60.0, "nominal"), (200.0, "perturbation")])
def test_closed_loop_steady_state(level, mode):
    tr = simulate_force(PLANT, GAINS, CommandProfile.step(30.0, level, 0.1, mode), duration=6.0)
    tail = tr.measured[-2000:]
    assert abs(tail.mean() - level) <= LOADCELL_RESOLUTION


def test_integration_step_convergence():
    coarse = step_metrics(simulate_force(PLANT, GAINS, CommandProfile.pulse(), dt=1e-4, quantization=0.0),
                          30.0, 155.0)
    fine = step_metrics(simulate_force(PLANT, GAINS, CommandProfile.pulse(), dt=5e-5, quantization=0.0),
                        30.0, 155.0)
    for name in ("percent_overshoot", "rise_time_ms", "ripple_pp", "net_impulse"):
        a, b = getattr(coarse, name), getattr(fine, name)
        assert abs(a - b) <= 0.005 * abs(b), name


@pytest.mark.parametrize("omega", [5.0, 15.0, 35.0, 60.0, 120.0])
def test_sinusoid_gain_matches_bode(omega):
    dt = 1e-4
    t = np.arange(int(6.0 / dt)) * dt
    # offset keeps the tether taut; a slack tether clips at zero force
    torque = 0.3 + 0.2 * np.sin(omega * t)
    force = open_loop_response(PLANT, torque, dt)
    tail = t > 4.0
    # least-squares sinusoid amplitude over the settled tail
    basis = np.column_stack([np.sin(omega * t[tail]), np.cos(omega * t[tail]), np.ones(tail.sum())])
    coef, *_ = np.linalg.lstsq(basis, force[tail], rcond=None)
    sim_gain = math.hypot(coef[0], coef[1]) / (0.2 * PLANT.gear_ratio / PLANT.drum_radius)
    tf = transfer_function(PLANT)
    bode_gain = abs(tf(1j * omega)) / tf.dc_gain
    assert sim_gain == pytest.approx(bode_gain, rel=0.02)


def test_runner_coupled_impulse_bias():
    tr = simulate_force(PLANT, GAINS, CommandProfile.pulse(), "runner", seed=0)
    m = step_metrics(tr, 30.0, 155.0)
    assert 31.25 < m.net_impulse <= 31.25 * 1.10


# ---------------------------------------------------------------- metrics

def rectangular_trace(baseline=30.0, amp=125.0, on=0.2, width=0.25, total=1.0, dt=1e-4):
    n = int(round(total / dt)) + 1
    t = np.arange(n) * dt
    idx = np.arange(n)
    i_on, i_off = int(round(on / dt)), int(round((on + width) / dt))
    y = np.where((idx >= i_on) & (idx < i_off), baseline + amp, baseline)
    return ForceTrace(t, y.astype(float), y.astype(float))


def test_ideal_pulse_impulse_is_exact():
    tr = rectangular_trace()
    # the piecewise-linear interpolant adds a half-sample ramp at each edge, which cancel
    assert step_metrics(tr, 30.0, 155.0).net_impulse == pytest.approx(31.25, abs=1e-9)


def test_flat_trace_has_no_overshoot_or_impulse():
    tr = rectangular_trace()
    flat = ForceTrace(tr.t, tr.commanded, np.full_like(tr.t, 30.0))
    m = step_metrics(flat, 30.0, 155.0)
    assert m.percent_overshoot == 0.0 and m.net_impulse == 0.0


def test_short_trace_raises_window_not_found():
    tr = rectangular_trace(total=0.6)
    with pytest.raises(WindowNotFound):
        step_metrics(tr, 30.0, 155.0)


@given(st.floats(0.0, 0.4), st.floats(0.0, 0.4), st.floats(0.0, 0.4))
def test_impulse_additivity(a, b, c):
    tr = pulse_trace_cached()
    t0, t1, t2 = sorted((a, b, c))
    whole = net_impulse(tr, 30.0, t0, t2)
    parts = net_impulse(tr, 30.0, t0, t1) + net_impulse(tr, 30.0, t1, t2)
    assert whole == pytest.approx(parts, abs=1e-9)


_CACHE = {}


def pulse_trace_cached():
    if "t" not in _CACHE:
        _CACHE["t"] = simulate_force(PLANT, GAINS, CommandProfile.pulse())
    return _CACHE["t"]


def test_rise_time_positive_and_impulse_nonnegative(pulse_trace):
    m = step_metrics(pulse_trace, 30.0, 155.0)
    assert m.rise_time_ms > 0 and m.net_impulse >= 0


# ---------------------------------------------------------------- identification

def test_fit_round_trip_noiseless():
    fit = fit_damping(open_loop_step(), PLANT)
    assert fit.total_damping == pytest.approx(PLANT.a1, rel=0.01)


@pytest.mark.parametrize("true_a1", [0.15, 0.6])
def test_fit_round_trip_other_dampings(true_a1):
    fit = fit_damping(open_loop_step(true_a1), PLANT)
    assert fit.total_damping == pytest.approx(true_a1, rel=0.01)


def test_fit_round_trip_with_noise():
    tr = open_loop_step()
    rng = np.random.default_rng(1)
    noisy = ForceTrace(tr.t, tr.commanded, tr.measured * (1 + 0.01 * rng.normal(size=tr.t.size)))
    fit = fit_damping(noisy, PLANT)
    assert fit.total_damping == pytest.approx(PLANT.a1, rel=0.05)


def test_fit_ignores_known_damping():
    fit = fit_damping(open_loop_step(), PLANT.with_total_damping(5.0))
    assert fit.total_damping == pytest.approx(PLANT.a1, rel=0.01)


def test_fit_empty_trace():
    empty = ForceTrace(np.array([]), np.array([]), np.array([]))
    with pytest.raises(NoStepDetected):
        fit_damping(empty, PLANT)


def test_fit_flat_trace():
    t = np.arange(100) * 1e-4
    flat = ForceTrace(t, np.full(100, 30.0), np.full(100, 30.0))
    with pytest.raises(NoStepDetected):
        fit_damping(flat, PLANT)


# ---------------------------------------------------------------- file formats

def test_trace_csv_round_trip(tmp_path, pulse_trace):
    path = tmp_path / "trace.csv"
    pulse_trace.write_csv(path)
    assert path.read_text().splitlines()[0] == "t_s,commanded_N,measured_N"
    back = ForceTrace.from_csv(path)
    np.testing.assert_allclose(back.t, pulse_trace.t, atol=1e-9)
    np.testing.assert_allclose(back.measured, pulse_trace.measured, atol=1e-6)


def test_profile_csv_round_trip(tmp_path):
    prof = CommandProfile.pulse(amplitude=90.0)
    path = tmp_path / "profile.csv"
    path.write_text(prof.to_csv())
    assert CommandProfile.from_csv(path) == prof


def test_profile_sampling():
    prof = CommandProfile.pulse()
    force, mode = prof.sample(np.array([0.0, 0.2, 0.3, 0.45, 0.6]))
    np.testing.assert_array_equal(force, [30.0, 155.0, 155.0, 30.0, 30.0])
    np.testing.assert_array_equal(mode, [0, 1, 1, 0, 0])
