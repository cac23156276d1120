"""Numerical kernels shared by the simulator, with two execution backends.

Every kernel is written once as a plain scalar-loop function over float64
arrays.  When numba is importable the fused trajectory loop is compiled
with ``@njit``; the helpers it calls are marked ``register_jitable`` so
they compile transparently inside the jitted caller while staying
ordinary Python functions when called directly.  The active backend is
picked once at import time from the ``GRIDSKIP_BACKEND`` environment
variable:

    GRIDSKIP_BACKEND=numba   force the compiled path (error if missing)
    GRIDSKIP_BACKEND=numpy   force the interpreted fallback
    unset                    numba when importable, fallback otherwise

Callers may also pass an explicit backend name to :func:`sim_core_fn`,
which is what the benchmark and the backend equivalence tests do.

State layout: arrays ordered generators first, then load buses.  Angles
in rad, speeds in rad/s relative to nominal, voltages and powers in p.u.
Event kinds are encoded 1 = generator shed on acceleration, 2 = shed on
overspeed, 3 = load shedding stage advance, 4 = line disconnection.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit
    from numba.extending import register_jitable

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap

    def register_jitable(*args, **kwargs):
        def wrap(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


BACKEND_ENV = "GRIDSKIP_BACKEND"

EV_GEN_ACCEL = 1
EV_GEN_SPEED = 2
EV_LOAD_SHED = 3
EV_LINE_TRIP = 4

STATUS_OK = 0
STATUS_COLLAPSE = 1
STATUS_NONFINITE = 2


def resolve_backend(name: str | None = None) -> str:
    """Map a requested backend name (or None for the default) to a real one."""
    if name is None:
        name = os.environ.get(BACKEND_ENV, "").strip().lower()
        if not name:
            return "numba" if NUMBA_AVAILABLE else "numpy"
    name = name.strip().lower()
    if name == "numpy":
        return "numpy"
    if name == "numba":
        if not NUMBA_AVAILABLE:
            raise RuntimeError("numba backend requested but numba is not importable")
        return "numba"
    raise ValueError(f"unknown backend '{name}' (expected 'numba' or 'numpy')")


@register_jitable
def msys_core(psi, inertia, n_gen):
    """System angular momentum: inertia summed over connected generators."""
    m = 0.0
    for i in range(n_gen):
        m += psi[i] * inertia[i]
    return m


@register_jitable
def deriv_core(delta, omega, volt, gov, psi, stage, eta, b_eff,
               p_gen, p_max, p_load, droop, e_field, s_volt, x_volt,
               k_avr, e_ref, damping, deadband, nu, m_sys,
               dd, do, dv, dg):
    """Time derivatives of (delta, omega, volt, gov) into dd/do/dv/dg.

    Assumes m_sys > 0; indicators enter through psi, stage and b_eff.
    Load buses carry zeroed generator parameters so a single formula
    covers both kinds.  The cosine coupling sum intentionally includes
    the diagonal term.
    """
    n = delta.shape[0]
    for i in range(n):
        di = delta[i]
        fs = 0.0
        fc = 0.0
        for j in range(n):
            bij = b_eff[i, j]
            if bij != 0.0:
                ang = di - delta[j]
                fs += bij * volt[j] * math.sin(ang)
                fc += bij * volt[j] * math.cos(ang)
        p_elec = volt[i] * fs

        chi_g = p_gen[i] + gov[i]
        if chi_g > p_max[i]:
            chi_g = p_max[i]
        demand = (1.0 - 0.1 * stage[i]) * (
            (1.0 - nu) * p_load[i] + (1.0 + eta[i]) * nu * p_load[i])

        dd[i] = omega[i]
        do[i] = (psi[i] * chi_g - demand - p_elec - damping * omega[i]) / m_sys
        v_avr = k_avr[i] * (volt[i] - e_ref[i])
        dv[i] = (psi[i] * (e_field[i] - v_avr) - volt[i] + x_volt[i] * fc) / s_volt[i]
        w = omega[i]
        if w > deadband or w < -deadband:
            dg[i] = -droop[i] * w
        else:
            dg[i] = 0.0
    return m_sys


@register_jitable
def step_core(delta, omega, volt, gov, psi, stage, eta, b_eff,
              p_gen, p_max, p_load, droop, e_field, s_volt, x_volt,
              k_avr, e_ref, damping, deadband, nu, m_sys, h, work):
    """One classical Runge-Kutta step in place, indicators frozen.

    work must be a float64 array of shape (20, n) used as stage scratch.
    """
    n = delta.shape[0]
    k1d, k1o, k1v, k1g = work[0], work[1], work[2], work[3]
    k2d, k2o, k2v, k2g = work[4], work[5], work[6], work[7]
    k3d, k3o, k3v, k3g = work[8], work[9], work[10], work[11]
    k4d, k4o, k4v, k4g = work[12], work[13], work[14], work[15]
    td, to, tv, tg = work[16], work[17], work[18], work[19]

    deriv_core(delta, omega, volt, gov, psi, stage, eta, b_eff,
               p_gen, p_max, p_load, droop, e_field, s_volt, x_volt,
               k_avr, e_ref, damping, deadband, nu, m_sys,
               k1d, k1o, k1v, k1g)
    half = 0.5 * h
    for i in range(n):
        td[i] = delta[i] + half * k1d[i]
        to[i] = omega[i] + half * k1o[i]
        tv[i] = volt[i] + half * k1v[i]
        tg[i] = gov[i] + half * k1g[i]
    deriv_core(td, to, tv, tg, psi, stage, eta, b_eff,
               p_gen, p_max, p_load, droop, e_field, s_volt, x_volt,
               k_avr, e_ref, damping, deadband, nu, m_sys,
               k2d, k2o, k2v, k2g)
    for i in range(n):
        td[i] = delta[i] + half * k2d[i]
        to[i] = omega[i] + half * k2o[i]
        tv[i] = volt[i] + half * k2v[i]
        tg[i] = gov[i] + half * k2g[i]
    deriv_core(td, to, tv, tg, psi, stage, eta, b_eff,
               p_gen, p_max, p_load, droop, e_field, s_volt, x_volt,
               k_avr, e_ref, damping, deadband, nu, m_sys,
               k3d, k3o, k3v, k3g)
    for i in range(n):
        td[i] = delta[i] + h * k3d[i]
        to[i] = omega[i] + h * k3o[i]
        tv[i] = volt[i] + h * k3v[i]
        tg[i] = gov[i] + h * k3g[i]
    deriv_core(td, to, tv, tg, psi, stage, eta, b_eff,
               p_gen, p_max, p_load, droop, e_field, s_volt, x_volt,
               k_avr, e_ref, damping, deadband, nu, m_sys,
               k4d, k4o, k4v, k4g)
    sixth = h / 6.0
    for i in range(n):
        delta[i] += sixth * (k1d[i] + 2.0 * k2d[i] + 2.0 * k3d[i] + k4d[i])
        omega[i] += sixth * (k1o[i] + 2.0 * k2o[i] + 2.0 * k3o[i] + k4o[i])
        volt[i] += sixth * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])
        gov[i] += sixth * (k1g[i] + 2.0 * k2g[i] + 2.0 * k3g[i] + k4g[i])


@register_jitable
def inspect_core(delta, omega, volt, gov, psi, stage, line_on, b_eff, eta,
                 p_gen, p_max, p_load, inertia, droop, e_field, s_volt,
                 x_volt, k_avr, e_ref, damping, deadband, nu, n_gen,
                 li, lj, lmon, llim,
                 rocof_lim, ofgs_lim, ufls_levels,
                 t, ev_time, ev_kind, ev_loc, ev_stage, n_ev, work):
    """Run the four protection checks at time t, mutating indicators.

    Checks run in a fixed order: generator shedding on nodal
    acceleration, generator shedding on overspeed, staged load shedding,
    then monitored line disconnection.  Accelerations, speeds and flows
    are those of the incoming state; a generator disconnected by an
    earlier check in the same call emits no second event.  Load shedding
    advances only at buses with demand to shed.  Repeating the call on
    the resulting state is a no-op.

    Returns the updated event count; events are appended to the ev_*
    arrays, which the caller must size generously (n_gen + 4n + lines).
    """
    n = delta.shape[0]
    m_sys = msys_core(psi, inertia, n_gen)
    ad, ao, av, ag = work[0], work[1], work[2], work[3]
    deriv_core(delta, omega, volt, gov, psi, stage, eta, b_eff,
               p_gen, p_max, p_load, droop, e_field, s_volt, x_volt,
               k_avr, e_ref, damping, deadband, nu, m_sys,
               ad, ao, av, ag)

    for i in range(n_gen):
        if psi[i] > 0.0 and abs(ao[i]) > rocof_lim:
            psi[i] = 0.0
            ev_time[n_ev] = t
            ev_kind[n_ev] = EV_GEN_ACCEL
            ev_loc[n_ev] = i
            ev_stage[n_ev] = 0
            n_ev += 1

    for i in range(n_gen):
        if psi[i] > 0.0 and omega[i] > ofgs_lim:
            psi[i] = 0.0
            ev_time[n_ev] = t
            ev_kind[n_ev] = EV_GEN_SPEED
            ev_loc[n_ev] = i
            ev_stage[n_ev] = 0
            n_ev += 1

    for i in range(n):
        if p_load[i] <= 0.0:
            continue
        while stage[i] < 4 and omega[i] < ufls_levels[stage[i]]:
            stage[i] += 1
            ev_time[n_ev] = t
            ev_kind[n_ev] = EV_LOAD_SHED
            ev_loc[n_ev] = i
            ev_stage[n_ev] = stage[i]
            n_ev += 1

    for l in range(li.shape[0]):
        if line_on[l] > 0.0 and lmon[l]:
            a = li[l]
            b = lj[l]
            flow = b_eff[a, b] * volt[a] * volt[b] * math.sin(delta[a] - delta[b])
            if abs(flow) > llim[l]:
                line_on[l] = 0.0
                bk = b_eff[a, b]
                b_eff[a, b] = 0.0
                b_eff[b, a] = 0.0
                b_eff[a, a] += bk
                b_eff[b, b] += bk
                ev_time[n_ev] = t
                ev_kind[n_ev] = EV_LINE_TRIP
                ev_loc[n_ev] = l
                ev_stage[n_ev] = 0
                n_ev += 1
    return n_ev


def _sim_core(delta, omega, volt, gov, psi, stage, line_on, b_eff, eta,
              p_gen, p_max, p_load, inertia, droop, e_field, s_volt,
              x_volt, k_avr, e_ref, damping, deadband, nu, n_gen,
              li, lj, lmon, llim,
              rocof_lim, ofgs_lim, ufls_levels,
              h, n_steps, inspect_every, stop_first,
              ev_time, ev_kind, ev_loc, ev_stage,
              store_stride, frames):
    """Fused trajectory loop: RK4 stepping with periodic protection scans.

    All state arrays are advanced in place.  Returns
    (status, n_events, steps_done, n_frames) where status is STATUS_OK,
    STATUS_COLLAPSE (no connected generator left) or STATUS_NONFINITE.
    frames rows are [t, omega..., volt..., line flows...] sampled every
    store_stride steps (stride 0 disables storage).
    """
    n = delta.shape[0]
    n_lines = li.shape[0]
    work = np.empty((20, n), dtype=np.float64)
    n_ev = 0
    status = STATUS_OK
    steps_done = 0
    n_frames = 0

    if store_stride > 0:
        frames[n_frames, 0] = 0.0
        for i in range(n):
            frames[n_frames, 1 + i] = omega[i]
            frames[n_frames, 1 + n + i] = volt[i]
        for l in range(n_lines):
            frames[n_frames, 1 + 2 * n + l] = (
                b_eff[li[l], lj[l]] * volt[li[l]] * volt[lj[l]]
                * math.sin(delta[li[l]] - delta[lj[l]]))
        n_frames += 1

    for step_i in range(1, n_steps + 1):
        m_sys = msys_core(psi, inertia, n_gen)
        if m_sys <= 0.0:
            status = STATUS_COLLAPSE
            break
        step_core(delta, omega, volt, gov, psi, stage, eta, b_eff,
                  p_gen, p_max, p_load, droop, e_field, s_volt, x_volt,
                  k_avr, e_ref, damping, deadband, nu, m_sys, h, work)
        finite = True
        for i in range(n):
            if not (math.isfinite(delta[i]) and math.isfinite(omega[i])
                    and math.isfinite(volt[i]) and math.isfinite(gov[i])):
                finite = False
                break
        if not finite:
            status = STATUS_NONFINITE
            steps_done = step_i
            break
        steps_done = step_i

        if inspect_every > 0 and step_i % inspect_every == 0:
            n_ev = inspect_core(delta, omega, volt, gov, psi, stage,
                                line_on, b_eff, eta,
                                p_gen, p_max, p_load, inertia, droop,
                                e_field, s_volt, x_volt, k_avr, e_ref,
                                damping, deadband, nu, n_gen,
                                li, lj, lmon, llim,
                                rocof_lim, ofgs_lim, ufls_levels,
                                step_i * h, ev_time, ev_kind, ev_loc,
                                ev_stage, n_ev, work)
            if stop_first and n_ev > 0:
                break

        if store_stride > 0 and step_i % store_stride == 0:
            frames[n_frames, 0] = step_i * h
            for i in range(n):
                frames[n_frames, 1 + i] = omega[i]
                frames[n_frames, 1 + n + i] = volt[i]
            for l in range(n_lines):
                frames[n_frames, 1 + 2 * n + l] = (
                    b_eff[li[l], lj[l]] * volt[li[l]] * volt[lj[l]]
                    * math.sin(delta[li[l]] - delta[lj[l]]))
            n_frames += 1

    return status, n_ev, steps_done, n_frames


if NUMBA_AVAILABLE:
    _sim_core_njit = njit(cache=True)(_sim_core)
else:  # pragma: no cover
    _sim_core_njit = None


def sim_core_fn(backend: str | None = None):
    """Return the trajectory-loop kernel for the requested backend."""
    chosen = resolve_backend(backend)
    if chosen == "numba":
        return _sim_core_njit
    return _sim_core


def active_backend() -> str:
    """Backend the simulator will use when none is requested explicitly."""
    return resolve_backend(None)
