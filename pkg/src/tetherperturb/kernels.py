"""Hot inner loops.

Every function here is written once and either compiled by numba or run as
plain Python, depending on ``TETHERPERTURB_DISABLE_NUMBA`` (see ``_accel``).
The workspace sweep additionally has a vectorised NumPy twin used when numba
is off, because a Python triple loop over cells and directions is too slow.

Array layouts used throughout:

* anchors ``ax, ay``: length-3 arrays ordered (left, right, back).
* plant: ``[gear_ratio, drum_radius, tether_stiffness, a2, a1]``.
* gains: ``[kp_nom, ki_nom, kd_nom, kp_pert, ki_pert, kd_pert, k_ff, f_ref]``.
* drivetrain state: ``[theta, omega, u_pid, e_prev, y_prev, y_prev2]``.
* runner state: ``[x, y, vx, vy]``.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, jit

ALLOC_OK = 0
ALLOC_INFEASIBLE = 1
ALLOC_DEGENERATE = 2

BOUND_TOL = 1e-9
MIN_ANCHOR_DISTANCE = 0.01


# --------------------------------------------------------------------------
# tension allocation
# --------------------------------------------------------------------------


@jit
def allocate_kernel(px, py, fx, fy, ax, ay, tmin, tmax, nominal, out):
    """Bounded minimum-deviation tension triple for force (fx, fy) at (px, py).

    Writes tensions into ``out`` and returns one of the ALLOC_* codes.
    """
    ux0 = ax[0] - px
    uy0 = ay[0] - py
    ux1 = ax[1] - px
    uy1 = ay[1] - py
    ux2 = ax[2] - px
    uy2 = ay[2] - py
    d0 = math.sqrt(ux0 * ux0 + uy0 * uy0)
    d1 = math.sqrt(ux1 * ux1 + uy1 * uy1)
    d2 = math.sqrt(ux2 * ux2 + uy2 * uy2)
    if d0 < MIN_ANCHOR_DISTANCE or d1 < MIN_ANCHOR_DISTANCE or d2 < MIN_ANCHOR_DISTANCE:
        return ALLOC_DEGENERATE
    ux0 /= d0
    uy0 /= d0
    ux1 /= d1
    uy1 /= d1
    ux2 /= d2
    uy2 /= d2

    # A = [[ux0 ux1 ux2], [uy0 uy1 uy2]]; t = nominal + A^T (A A^T)^-1 (f - A nominal)
    m00 = ux0 * ux0 + ux1 * ux1 + ux2 * ux2
    m01 = ux0 * uy0 + ux1 * uy1 + ux2 * uy2
    m11 = uy0 * uy0 + uy1 * uy1 + uy2 * uy2
    det = m00 * m11 - m01 * m01
    if det < 1e-12:
        return ALLOC_DEGENERATE
    rx = fx - nominal * (ux0 + ux1 + ux2)
    ry = fy - nominal * (uy0 + uy1 + uy2)
    w0 = (m11 * rx - m01 * ry) / det
    w1 = (m00 * ry - m01 * rx) / det
    t0 = nominal + ux0 * w0 + uy0 * w1
    t1 = nominal + ux1 * w0 + uy1 * w1
    t2 = nominal + ux2 * w0 + uy2 * w1

    # null direction of A; t0 is already the deviation minimiser on the line
    n0 = ux1 * uy2 - ux2 * uy1
    n1 = ux2 * uy0 - ux0 * uy2
    n2 = ux0 * uy1 - ux1 * uy0
    nn = math.sqrt(n0 * n0 + n1 * n1 + n2 * n2)
    n0 /= nn
    n1 /= nn
    n2 /= nn

    lo = -1e300
    hi = 1e300
    for i in range(3):
        if i == 0:
            t, n = t0, n0
        elif i == 1:
            t, n = t1, n1
        else:
            t, n = t2, n2
        if abs(n) < 1e-12:
            if t < tmin - BOUND_TOL or t > tmax + BOUND_TOL:
                return ALLOC_INFEASIBLE
            continue
        a = (tmin - t) / n
        b = (tmax - t) / n
        if a > b:
            a, b = b, a
        if a > lo:
            lo = a
        if b < hi:
            hi = b
    if lo > hi + BOUND_TOL:
        return ALLOC_INFEASIBLE

    lam = 0.0
    if lam < lo:
        lam = lo
    if lam > hi:
        lam = hi
    out[0] = min(max(t0 + lam * n0, tmin), tmax)
    out[1] = min(max(t1 + lam * n1, tmin), tmax)
    out[2] = min(max(t2 + lam * n2, tmin), tmax)
    return ALLOC_OK


@jit
def workspace_sweep_kernel(xs, ys, cos_b, sin_b, magnitude, ax, ay, tmin, tmax, nominal):
    nx = xs.shape[0]
    ny = ys.shape[0]
    nd = cos_b.shape[0]
    feasible = np.zeros((nx, ny), dtype=np.bool_)
    buf = np.empty(3)
    for i in range(nx):
        for j in range(ny):
            ok = True
            for k in range(nd):
                code = allocate_kernel(
                    xs[i], ys[j], magnitude * cos_b[k], magnitude * sin_b[k],
                    ax, ay, tmin, tmax, nominal, buf,
                )
                if code != ALLOC_OK:
                    ok = False
                    break
            feasible[i, j] = ok
    return feasible


def workspace_sweep_numpy(xs, ys, cos_b, sin_b, magnitude, ax, ay, tmin, tmax, nominal):
    """Vectorised twin of :func:`workspace_sweep_kernel` (same arithmetic)."""
    px, py = np.meshgrid(xs, ys, indexing="ij")
    ux = ax[:, None, None] - px[None]
    uy = ay[:, None, None] - py[None]
    d = np.sqrt(ux * ux + uy * uy)
    ux = ux / d
    uy = uy / d
    m00 = ux[0] * ux[0] + ux[1] * ux[1] + ux[2] * ux[2]
    m01 = ux[0] * uy[0] + ux[1] * uy[1] + ux[2] * uy[2]
    m11 = uy[0] * uy[0] + uy[1] * uy[1] + uy[2] * uy[2]
    det = m00 * m11 - m01 * m01
    n = np.stack([
        ux[1] * uy[2] - ux[2] * uy[1],
        ux[2] * uy[0] - ux[0] * uy[2],
        ux[0] * uy[1] - ux[1] * uy[0],
    ])
    n = n / np.sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2])
    sx = nominal * (ux[0] + ux[1] + ux[2])
    sy = nominal * (uy[0] + uy[1] + uy[2])

    fx = magnitude * cos_b[:, None, None]
    fy = magnitude * sin_b[:, None, None]
    rx = fx - sx[None]
    ry = fy - sy[None]
    w0 = (m11[None] * rx - m01[None] * ry) / det[None]
    w1 = (m00[None] * ry - m01[None] * rx) / det[None]
    lo = np.full(w0.shape, -1e300)
    hi = np.full(w0.shape, 1e300)
    bad = np.zeros(w0.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(3):
            t = nominal + ux[i][None] * w0 + uy[i][None] * w1
            ni = np.broadcast_to(n[i][None], t.shape)
            flat = np.abs(ni) < 1e-12
            a = (tmin - t) / ni
            b = (tmax - t) / ni
            a, b = np.minimum(a, b), np.maximum(a, b)
            lo = np.where(flat, lo, np.maximum(lo, a))
            hi = np.where(flat, hi, np.minimum(hi, b))
            bad |= flat & ((t < tmin - BOUND_TOL) | (t > tmax + BOUND_TOL))
    ok = ~bad & (lo <= hi + BOUND_TOL)
    ok &= (det >= 1e-12)[None] & (d.min(axis=0) >= MIN_ANCHOR_DISTANCE)[None]
    return ok.all(axis=0)


# --------------------------------------------------------------------------
# tether drive-train
# --------------------------------------------------------------------------


@jit
def drivetrain_run(state, cmd, mode, disp, noise, plant, gains, quant, dt, force_limit,
                   out_force, out_meas):
    """Advance one tether through ``len(cmd)`` control steps.

    Velocity-form PID with derivative on measurement; feedforward only while
    ``mode == 1``.  Returns the first step index where the tether force
    exceeds ``force_limit`` (instability), or -1.
    """
    gear = plant[0]
    r_d = plant[1]
    k_t = plant[2]
    a2 = plant[3]
    a1 = plant[4]
    k_ff = gains[6]
    f_ref = gains[7]
    theta = state[0]
    omega = state[1]
    u_pid = state[2]
    e_prev = state[3]
    y_prev = state[4]
    y_prev2 = state[5]
    bad = -1
    for k in range(cmd.shape[0]):
        stretch = r_d * theta + disp[k]
        force = k_t * stretch
        if force < 0.0:
            force = 0.0
        y = force + noise[k]
        if quant > 0.0:
            y = quant * math.floor(y / quant + 0.5)
        if mode[k] == 1:
            kp = gains[3]
            ki = gains[4]
            kd = gains[5]
            ff = k_ff * (cmd[k] - f_ref) * r_d / gear
        else:
            kp = gains[0]
            ki = gains[1]
            kd = gains[2]
            ff = 0.0
        e = cmd[k] - y
        u_pid += kp * (e - e_prev) + ki * dt * e - kd * (y - 2.0 * y_prev + y_prev2) / dt
        e_prev = e
        y_prev2 = y_prev
        y_prev = y
        torque = u_pid + ff
        omega += dt * (gear * torque - a1 * omega - r_d * force) / a2
        theta += dt * omega
        out_force[k] = force
        out_meas[k] = y
        if bad < 0 and abs(force) > force_limit:
            bad = k
            break
    state[0] = theta
    state[1] = omega
    state[2] = u_pid
    state[3] = e_prev
    state[4] = y_prev
    state[5] = y_prev2
    return bad


@jit
def drivetrain_equilibrium(state, force, disp, plant, gains):
    """Reset ``state`` to the closed-loop rest point holding ``force``."""
    gear = plant[0]
    r_d = plant[1]
    k_t = plant[2]
    state[0] = (force / k_t - disp) / r_d
    state[1] = 0.0
    state[2] = force * r_d / gear
    state[3] = 0.0
    state[4] = force
    state[5] = force


# --------------------------------------------------------------------------
# runner impedance model
# --------------------------------------------------------------------------


@jit
def runner_step_kernel(state, fx, fy, dt, mass, stiffness, damping, gain, hx, hy):
    """Semi-implicit Euler step of the station-keeping impedance, in place."""
    k = stiffness * gain
    c = damping * gain
    ax_ = (fx - k * (state[0] - hx) - c * state[2]) / mass
    ay_ = (fy - k * (state[1] - hy) - c * state[3]) / mass
    state[2] += dt * ax_
    state[3] += dt * ay_
    state[0] += dt * state[2]
    state[1] += dt * state[3]


@jit
def coupled_tick(tether_states, cmds, mode, runner, sway_x, sway_y, home_x, home_y,
                 ax, ay, rest_len, plant, gains, quant, dt_ctrl, n_sub, noise,
                 force_limit, base_fx, base_fy, mass, stiffness, damping, gain,
                 out_force, out_meas):
    """One master-clock tick: three tethers sub-stepped, then one runner step.

    ``rest_len`` holds each tether's anchor distance at which the tether
    endpoint displacement is zero.  Tether force acting on the runner is the
    mean true tension over the sub-steps along the current unit vectors.
    Returns -1 or the index of the tether that went unstable.
    """
    wx = runner[0] + sway_x
    wy = runner[1] + sway_y
    cmd_buf = np.empty(n_sub)
    mode_buf = np.empty(n_sub, dtype=np.int64)
    disp_buf = np.empty(n_sub)
    f_buf = np.empty(n_sub)
    m_buf = np.empty(n_sub)
    fx = 0.0
    fy = 0.0
    status = -1
    for i in range(3):
        dx = ax[i] - wx
        dy = ay[i] - wy
        dist = math.sqrt(dx * dx + dy * dy)
        for s in range(n_sub):
            cmd_buf[s] = cmds[i]
            mode_buf[s] = mode
            disp_buf[s] = dist - rest_len[i]
        bad = drivetrain_run(tether_states[i], cmd_buf, mode_buf, disp_buf, noise[i],
                             plant, gains, quant, dt_ctrl, force_limit, f_buf, m_buf)
        if bad >= 0 and status < 0:
            status = i
        mean_f = 0.0
        for s in range(n_sub):
            mean_f += f_buf[s]
        mean_f /= n_sub
        out_force[i] = mean_f
        out_meas[i] = m_buf[n_sub - 1]
        fx += mean_f * dx / dist
        fy += mean_f * dy / dist
    runner_step_kernel(runner, fx - base_fx, fy - base_fy, dt_ctrl * n_sub,
                       mass, stiffness, damping, gain, home_x, home_y)
    return status


@jit
def tether_runner_run(state, body, cmd, mode, sway, noise, plant, gains, quant, dt, force_limit,
                      mass, stiffness, damping, f_base, out_force, out_meas, out_disp):
    """One tether pulling on a 1-D runner that moves along the tether line.

    ``body = [x, v]`` with x measured away from the anchor, so x adds to the
    tether stretch.  The runner only feels the tension change relative to
    ``f_base`` (it leans against the steady nominal pull).
    """
    one_cmd = np.empty(1)
    one_mode = np.empty(1, dtype=np.int64)
    one_disp = np.empty(1)
    one_f = np.empty(1)
    one_m = np.empty(1)
    bad = -1
    for k in range(cmd.shape[0]):
        one_cmd[0] = cmd[k]
        one_mode[0] = mode[k]
        d = body[0] + sway[k]
        one_disp[0] = d
        if drivetrain_run(state, one_cmd, one_mode, one_disp, noise[k:k + 1], plant, gains,
                          quant, dt, force_limit, one_f, one_m) >= 0:
            bad = k
        out_force[k] = one_f[0]
        out_meas[k] = one_m[0]
        out_disp[k] = d
        if bad >= 0:
            break
        acc = (-(one_f[0] - f_base) - stiffness * body[0] - damping * body[1]) / mass
        body[1] += dt * acc
        body[0] += dt * body[1]
    return bad


# --------------------------------------------------------------------------
# stance detection
# --------------------------------------------------------------------------

# detector state: [n_seen, prev_diff, prev_toe, prev_slope, armed, last_event_t]


@jit
def stance_reset(state):
    state[0] = 0.0
    state[1] = 0.0
    state[2] = 0.0
    state[3] = 0.0
    state[4] = 0.0
    state[5] = -1e300


@jit
def stance_step(state, t, toe_z, heel_z, ankle_z, debounce):
    """Feed one frame; return True when this frame is a detected stance."""
    diff = ankle_z - heel_z
    event = False
    if state[0] >= 1.0:
        slope = toe_z - state[2]
        if state[4] > 0.0 and state[0] >= 2.0 and slope > 0.0 and state[3] <= 0.0:
            state[4] = 0.0
            if t - state[5] >= debounce:
                state[5] = t
                event = True
        if state[1] > 0.0 and diff <= 0.0:
            state[4] = 1.0
        state[3] = slope
    state[1] = diff
    state[2] = toe_z
    state[0] += 1.0
    return event


@jit
def detect_stance_kernel(t, toe_z, heel_z, ankle_z, debounce):
    n = t.shape[0]
    state = np.empty(6)
    stance_reset(state)
    idx = np.empty(n, dtype=np.int64)
    count = 0
    for i in range(n):
        if stance_step(state, t[i], toe_z[i], heel_z[i], ankle_z[i], debounce):
            idx[count] = i
            count += 1
    return idx[:count]


def workspace_sweep(xs, ys, cos_b, sin_b, magnitude, ax, ay, tmin, tmax, nominal):
    """Dispatch to the compiled sweep or its NumPy twin."""
    if USE_NUMBA:
        return workspace_sweep_kernel(xs, ys, cos_b, sin_b, magnitude, ax, ay, tmin, tmax, nominal)
    return workspace_sweep_numpy(xs, ys, cos_b, sin_b, magnitude, ax, ay, tmin, tmax, nominal)
