"""Numba kernels for time-stepping the first- and second-order dynamics.

One path is one task: each kernel advances a single path with its own
counter-based noise stream (see :mod:`bnlab._rng`), and the ensemble
drivers ``prange`` over paths writing into preallocated per-path slots, so
parallel and serial execution agree exactly.

Step-size control.  The proposal step is Euler-Maruyama (or the
drift-implicit variant) at ``dt_base`` in the bulk.  Near a boundary the
step is shrunk in proportion to the squared distance (first order) or to
the distance over speed and the force stiffness (second order), down to
``dt_min``; a proposal that lands beyond ``1 - eps_b`` in absolute value is
retried at half the step.  What happens when the floor is reached while
still crossing depends on the model: if the boundaries are attainable the
crossing is a genuine exit and is reported with a linearly interpolated
crossing time; if they are unattainable the crossing is a discretization
artifact and the proposal is rejected and redrawn (the first-order chain
otherwise leaves the interval with O(1) probability per boundary visit at
any step size, which would fake exits that the exact process never makes).

Status codes: 0 censored at the horizon, 1 exited / boundary contact,
2 non-finite state (numerical failure).
"""

import math

import numpy as np
from numba import njit, prange

from ._rng import normal_pair, stream_key

U64 = np.uint64

# Boundary-layer resolution: fraction of the squared distance-to-boundary
# used as the local step size.  The fine value keeps the first-exit bias of
# attainable models below ~1e-3 in relative terms; the coarse value is
# enough when crossings are vetoed anyway (unattainable models).
KAPPA_EXIT = 1.0 / 256.0
KAPPA_SAFE = 1.0 / 16.0

# Second-order refinement: max fraction of the distance-to-boundary a step
# may traverse, and max velocity change per step relative to current speed.
POS_FRACTION = 0.25
FORCE_FRACTION = 0.25

SCHEME_EULER = 0
SCHEME_IMPLICIT = 1


@njit(cache=True, inline="always")
def _drift(x, alpha):
    if alpha == 1.0:
        return -2.0 * x / (1.0 - x * x)
    return (1.0 + x) ** (-alpha) - (1.0 - x) ** (-alpha)


@njit(cache=True, inline="always")
def _drift_deriv(x, alpha):
    if alpha == 1.0:
        one = 1.0 - x * x
        return -2.0 * (1.0 + x * x) / (one * one)
    return -alpha * ((1.0 + x) ** (-alpha - 1.0) + (1.0 - x) ** (-alpha - 1.0))


@njit(cache=True, inline="always")
def _potential(x, alpha):
    if alpha == 1.0:
        return -math.log1p(-x * x)
    return ((1.0 + x) ** (1.0 - alpha) + (1.0 - x) ** (1.0 - alpha) - 2.0) / (alpha - 1.0)


@njit(cache=True, inline="always")
def _implicit_step(x, dt, sdw, alpha):
    """Solve y = x + phi(y) dt + sdw; unique root, strictly inside (-1, 1)."""
    lo = -1.0 + 1e-15
    hi = 1.0 - 1e-15
    y = x
    for _ in range(80):
        g = y - x - _drift(y, alpha) * dt - sdw
        if abs(g) <= 1e-14 * (1.0 + abs(sdw) + dt):
            return y
        if g > 0.0:
            hi = y
        else:
            lo = y
        gp = 1.0 - _drift_deriv(y, alpha) * dt
        ynew = y - g / gp
        if not (lo < ynew < hi):
            ynew = 0.5 * (lo + hi)
        y = ynew
    return y


@njit(cache=True, inline="always")
def _dt_overdamped(delta, sigma, kappa, dt_base, dt_min):
    if sigma > 0.0:
        r = delta / sigma
        dt = kappa * r * r
    else:
        dt = dt_base
    if dt > dt_base:
        dt = dt_base
    if dt < dt_min:
        dt = dt_min
    return dt


@njit(cache=True)
def overdamped_path(x0, alpha, beta, attainable, scheme,
                    dt_base, dt_min, eps_b, kappa, horizon,
                    key, ctr_start):
    """Advance one first-order path to exit or horizon.

    Returns (status, exit_time, side, steps, max_abs, ctr) where ctr is the
    stream counter after the run (so callers can continue the same stream).
    """
    sigma = math.sqrt(2.0 * beta)
    barrier = 1.0 - eps_b
    x = x0
    t = 0.0
    ctr = ctr_start
    steps = U64(0)
    max_abs = abs(x0)
    shrink = 1.0
    spare = 0.0
    have_spare = False
    while t < horizon:
        delta = 1.0 - abs(x)
        dt = _dt_overdamped(delta, sigma, kappa, dt_base, dt_min) * shrink
        if dt < dt_min:
            dt = dt_min
        if have_spare:
            z = spare
            have_spare = False
        else:
            z, spare = normal_pair(key, ctr)
            ctr += U64(2)
            have_spare = True
        sdw = sigma * math.sqrt(dt) * z
        if scheme == SCHEME_IMPLICIT:
            x1 = _implicit_step(x, dt, sdw, alpha)
        else:
            x1 = x + _drift(x, alpha) * dt + sdw
        if abs(x1) >= barrier:
            if dt > dt_min * 1.0000000001:
                shrink *= 0.5
                continue
            if attainable:
                side = 1 if x1 > 0.0 else -1
                edge = barrier if side == 1 else -barrier
                frac = (edge - x) / (x1 - x)
                t_exit = t + frac * dt
                if t_exit > horizon:
                    return 0, horizon, 0, steps, max_abs, ctr
                return 1, t_exit, side, steps, 1.0, ctr
            continue
        if not math.isfinite(x1):
            return 2, t, 0, steps, max_abs, ctr
        x = x1
        t += dt
        steps += U64(1)
        shrink = 1.0
        ax = abs(x)
        if ax > max_abs:
            max_abs = ax
    return 0, horizon, 0, steps, max_abs, ctr


@njit(cache=True, parallel=True)
def overdamped_exit_ensemble(n_paths, x0, alpha, beta, attainable, scheme,
                             dt_base, dt_min, eps_b, kappa, horizon, master_seed,
                             status, exit_time, side, steps, max_abs):
    for i in prange(n_paths):
        key = stream_key(U64(master_seed), U64(i))
        st, et, sd, ns, ma, _ = overdamped_path(
            x0, alpha, beta, attainable, scheme,
            dt_base, dt_min, eps_b, kappa, horizon, key, U64(0))
        status[i] = st
        exit_time[i] = et
        side[i] = sd
        steps[i] = ns
        max_abs[i] = ma


@njit(cache=True)
def overdamped_stationary_path(x0, alpha, beta, scheme,
                               dt_base, dt_min, eps_b, kappa,
                               burn_in, stride, key, out_x):
    """Record len(out_x) positions, one every ``stride`` after ``burn_in``.

    Returns the number recorded (short only on numerical failure)."""
    sigma = math.sqrt(2.0 * beta)
    barrier = 1.0 - eps_b
    n_rec = out_x.shape[0]
    x = x0
    t = 0.0
    ctr = U64(0)
    k = 0
    next_t = burn_in
    shrink = 1.0
    spare = 0.0
    have_spare = False
    while k < n_rec:
        delta = 1.0 - abs(x)
        dt = _dt_overdamped(delta, sigma, kappa, dt_base, dt_min) * shrink
        if dt < dt_min:
            dt = dt_min
        if have_spare:
            z = spare
            have_spare = False
        else:
            z, spare = normal_pair(key, ctr)
            ctr += U64(2)
            have_spare = True
        sdw = sigma * math.sqrt(dt) * z
        if scheme == SCHEME_IMPLICIT:
            x1 = _implicit_step(x, dt, sdw, alpha)
        else:
            x1 = x + _drift(x, alpha) * dt + sdw
        if abs(x1) >= barrier:
            if dt > dt_min * 1.0000000001:
                shrink *= 0.5
            continue
        if not math.isfinite(x1):
            return k
        x = x1
        t += dt
        shrink = 1.0
        while k < n_rec and t >= next_t:
            out_x[k] = x
            k += 1
            next_t += stride
    return k


@njit(cache=True, parallel=True)
def overdamped_stationary_ensemble(n_paths, x0, alpha, beta, scheme,
                                   dt_base, dt_min, eps_b, kappa,
                                   burn_in, stride, master_seed, out_x, n_rec):
    for i in prange(n_paths):
        key = stream_key(U64(master_seed), U64(i))
        n_rec[i] = overdamped_stationary_path(
            x0, alpha, beta, scheme, dt_base, dt_min, eps_b, kappa,
            burn_in, stride, key, out_x[i])


@njit(cache=True, inline="always")
def _dt_underdamped(delta, v, phi, m, v_scale, dt_base, dt_min):
    dt = dt_base
    speed = abs(v) + 1e-12
    cap = POS_FRACTION * delta / speed
    if cap < dt:
        dt = cap
    fmag = abs(phi) + 1e-300
    cap = FORCE_FRACTION * m * (abs(v) + 0.05 * v_scale + 1e-12) / fmag
    if cap < dt:
        dt = cap
    if dt < dt_min:
        dt = dt_min
    return dt


@njit(cache=True)
def underdamped_path(x0, v0, m, alpha, beta,
                     dt_base, dt_min, eps_b, horizon,
                     key, cp_times, out_energy):
    """Advance one second-order path; boundary contact terminates it.

    ``out_energy[j]`` receives the total energy at the first accepted state
    with t >= cp_times[j] (NaN when the path ends first).  Returns
    (status, end_time, side, steps, max_abs, energy0).
    """
    sigma = math.sqrt(2.0 * beta)
    v_scale = math.sqrt(beta / m) if beta > 0.0 else 1.0
    barrier = 1.0 - eps_b
    x = x0
    v = v0
    t = 0.0
    ctr = U64(0)
    steps = U64(0)
    max_abs = abs(x0)
    shrink = 1.0
    spare = 0.0
    have_spare = False
    n_cp = cp_times.shape[0]
    for j in range(n_cp):
        out_energy[j] = np.nan
    cp_i = 0
    e0 = _potential(x0, alpha) + 0.5 * m * v0 * v0
    while t < horizon:
        delta = 1.0 - abs(x)
        phi = _drift(x, alpha)
        dt = _dt_underdamped(delta, v, phi, m, v_scale, dt_base, dt_min) * shrink
        if dt < dt_min:
            dt = dt_min
        if have_spare:
            z = spare
            have_spare = False
        else:
            z, spare = normal_pair(key, ctr)
            ctr += U64(2)
            have_spare = True
        x1 = x + v * dt
        if abs(x1) >= barrier:
            if dt > dt_min * 1.0000000001:
                shrink *= 0.5
                continue
            side = 1 if x1 > 0.0 else -1
            edge = barrier if side == 1 else -barrier
            frac = (edge - x) / (x1 - x)
            t_hit = t + frac * dt
            if t_hit > horizon:
                return 0, horizon, 0, steps, max_abs, e0
            return 1, t_hit, side, steps, 1.0, e0
        v1 = v + (phi - v) * dt / m + (sigma / m) * math.sqrt(dt) * z
        if not (math.isfinite(x1) and math.isfinite(v1)):
            return 2, t, 0, steps, max_abs, e0
        x = x1
        v = v1
        t += dt
        steps += U64(1)
        shrink = 1.0
        ax = abs(x)
        if ax > max_abs:
            max_abs = ax
        while cp_i < n_cp and t >= cp_times[cp_i]:
            out_energy[cp_i] = _potential(x, alpha) + 0.5 * m * v * v
            cp_i += 1
    return 0, horizon, 0, steps, max_abs, e0


@njit(cache=True, parallel=True)
def underdamped_exit_ensemble(n_paths, x0, v0, m, alpha, beta,
                              dt_base, dt_min, eps_b, horizon, master_seed,
                              cp_times, status, exit_time, side, steps, max_abs,
                              energy0, energies):
    for i in prange(n_paths):
        key = stream_key(U64(master_seed), U64(i))
        st, et, sd, ns, ma, e0 = underdamped_path(
            x0, v0, m, alpha, beta, dt_base, dt_min, eps_b, horizon,
            key, cp_times, energies[i])
        status[i] = st
        exit_time[i] = et
        side[i] = sd
        steps[i] = ns
        max_abs[i] = ma
        energy0[i] = e0


@njit(cache=True)
def underdamped_stationary_path(x0, v0, m, alpha, beta,
                                dt_base, dt_min, eps_b,
                                burn_in, stride, key, out_x, out_v):
    sigma = math.sqrt(2.0 * beta)
    v_scale = math.sqrt(beta / m) if beta > 0.0 else 1.0
    barrier = 1.0 - eps_b
    n_rec = out_x.shape[0]
    x = x0
    v = v0
    t = 0.0
    ctr = U64(0)
    k = 0
    next_t = burn_in
    shrink = 1.0
    spare = 0.0
    have_spare = False
    while k < n_rec:
        delta = 1.0 - abs(x)
        phi = _drift(x, alpha)
        dt = _dt_underdamped(delta, v, phi, m, v_scale, dt_base, dt_min) * shrink
        if dt < dt_min:
            dt = dt_min
        if have_spare:
            z = spare
            have_spare = False
        else:
            z, spare = normal_pair(key, ctr)
            ctr += U64(2)
            have_spare = True
        x1 = x + v * dt
        if abs(x1) >= barrier:
            if dt > dt_min * 1.0000000001:
                shrink *= 0.5
            continue
        v1 = v + (phi - v) * dt / m + (sigma / m) * math.sqrt(dt) * z
        if not (math.isfinite(x1) and math.isfinite(v1)):
            return k
        x = x1
        v = v1
        t += dt
        shrink = 1.0
        while k < n_rec and t >= next_t:
            out_x[k] = x
            out_v[k] = v
            k += 1
            next_t += stride
    return k


@njit(cache=True, parallel=True)
def underdamped_stationary_ensemble(n_paths, x0, v0, m, alpha, beta,
                                    dt_base, dt_min, eps_b,
                                    burn_in, stride, master_seed,
                                    out_x, out_v, n_rec):
    for i in prange(n_paths):
        key = stream_key(U64(master_seed), U64(i))
        n_rec[i] = underdamped_stationary_path(
            x0, v0, m, alpha, beta, dt_base, dt_min, eps_b,
            burn_in, stride, key, out_x[i], out_v[i])


@njit(cache=True)
def overdamped_trajectory(x0, alpha, beta, attainable, scheme,
                          dt_base, dt_min, eps_b, kappa, horizon,
                          key, rec_stride, out_t, out_x):
    """Single recorded path: state at t=0, then one record per ``rec_stride``,
    plus the exit state if the path exits.  Returns (status, exit_time, side,
    steps, max_abs, n_recorded)."""
    sigma = math.sqrt(2.0 * beta)
    barrier = 1.0 - eps_b
    cap = out_t.shape[0]
    x = x0
    t = 0.0
    ctr = U64(0)
    steps = U64(0)
    max_abs = abs(x0)
    shrink = 1.0
    spare = 0.0
    have_spare = False
    k = 0
    if cap > 0:
        out_t[0] = 0.0
        out_x[0] = x0
        k = 1
    next_rec = rec_stride
    while t < horizon:
        delta = 1.0 - abs(x)
        dt = _dt_overdamped(delta, sigma, kappa, dt_base, dt_min) * shrink
        if dt < dt_min:
            dt = dt_min
        if have_spare:
            z = spare
            have_spare = False
        else:
            z, spare = normal_pair(key, ctr)
            ctr += U64(2)
            have_spare = True
        sdw = sigma * math.sqrt(dt) * z
        if scheme == SCHEME_IMPLICIT:
            x1 = _implicit_step(x, dt, sdw, alpha)
        else:
            x1 = x + _drift(x, alpha) * dt + sdw
        if abs(x1) >= barrier:
            if dt > dt_min * 1.0000000001:
                shrink *= 0.5
                continue
            if attainable:
                side = 1 if x1 > 0.0 else -1
                edge = barrier if side == 1 else -barrier
                frac = (edge - x) / (x1 - x)
                t_exit = t + frac * dt
                if t_exit > horizon:
                    return 0, horizon, 0, steps, max_abs, k
                if k < cap:
                    out_t[k] = t_exit
                    out_x[k] = edge
                    k += 1
                return 1, t_exit, side, steps, 1.0, k
            continue
        if not math.isfinite(x1):
            return 2, t, 0, steps, max_abs, k
        x = x1
        t += dt
        steps += U64(1)
        shrink = 1.0
        ax = abs(x)
        if ax > max_abs:
            max_abs = ax
        if t >= next_rec and k < cap:
            out_t[k] = t
            out_x[k] = x
            k += 1
            next_rec += rec_stride
    return 0, horizon, 0, steps, max_abs, k


@njit(cache=True)
def underdamped_trajectory(x0, v0, m, alpha, beta,
                           dt_base, dt_min, eps_b, horizon,
                           key, rec_stride, out_t, out_x, out_v, out_e):
    """Single recorded second-order path; energy recomputed at each record."""
    sigma = math.sqrt(2.0 * beta)
    v_scale = math.sqrt(beta / m) if beta > 0.0 else 1.0
    barrier = 1.0 - eps_b
    cap = out_t.shape[0]
    x = x0
    v = v0
    t = 0.0
    ctr = U64(0)
    steps = U64(0)
    max_abs = abs(x0)
    shrink = 1.0
    spare = 0.0
    have_spare = False
    k = 0
    if cap > 0:
        out_t[0] = 0.0
        out_x[0] = x0
        out_v[0] = v0
        out_e[0] = _potential(x0, alpha) + 0.5 * m * v0 * v0
        k = 1
    next_rec = rec_stride
    while t < horizon:
        delta = 1.0 - abs(x)
        phi = _drift(x, alpha)
        dt = _dt_underdamped(delta, v, phi, m, v_scale, dt_base, dt_min) * shrink
        if dt < dt_min:
            dt = dt_min
        if have_spare:
            z = spare
            have_spare = False
        else:
            z, spare = normal_pair(key, ctr)
            ctr += U64(2)
            have_spare = True
        x1 = x + v * dt
        if abs(x1) >= barrier:
            if dt > dt_min * 1.0000000001:
                shrink *= 0.5
                continue
            side = 1 if x1 > 0.0 else -1
            edge = barrier if side == 1 else -barrier
            frac = (edge - x) / (x1 - x)
            t_hit = t + frac * dt
            if t_hit > horizon:
                return 0, horizon, 0, steps, max_abs, k
            if k < cap:
                out_t[k] = t_hit
                out_x[k] = edge
                out_v[k] = v
                out_e[k] = _potential(edge, alpha) + 0.5 * m * v * v
                k += 1
            return 1, t_hit, side, steps, 1.0, k
        v1 = v + (phi - v) * dt / m + (sigma / m) * math.sqrt(dt) * z
        if not (math.isfinite(x1) and math.isfinite(v1)):
            return 2, t, 0, steps, max_abs, k
        x = x1
        v = v1
        t += dt
        steps += U64(1)
        shrink = 1.0
        ax = abs(x)
        if ax > max_abs:
            max_abs = ax
        if t >= next_rec and k < cap:
            out_t[k] = t
            out_x[k] = x
            out_v[k] = v
            out_e[k] = _potential(x, alpha) + 0.5 * m * v * v
            k += 1
            next_rec += rec_stride
    return 0, horizon, 0, steps, max_abs, k
