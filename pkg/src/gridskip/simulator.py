"""Trajectory simulation: equilibrium solving and protected time stepping.

A run starts from the network's undisturbed equilibrium (solved here,
or passed in when many runs share it), applies an attack scaling and
optional initial generator outages, then integrates the hybrid system
with classical RK4 while protection inspections fire at fixed instants.
The first inspection happens one interval after t = 0, never at t = 0
itself, so a run from the exact equilibrium with no disturbance stays
event free.

The heavy loop lives in :mod:`gridskip._kernels`; this module owns
argument preparation, buffer sizing and result decoding.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from . import _kernels
from .dynamics import DynamicState, derivatives
from .network import NetworkModel, effective_susceptance
from .protection import ErEvent, ErThresholds, decode_events, event_capacity

DEFAULT_DURATION = 15.0
DEFAULT_STEP = 0.005


class EquilibriumError(RuntimeError):
    """Raised when no equilibrium meets the residual tolerance."""

    def __init__(self, msg: str, residual: float):
        super().__init__(msg)
        self.residual = residual


def equilibrium_residual(network: NetworkModel, state: DynamicState,
                         nu: float | None = None) -> float:
    """Largest derivative magnitude over all continuous state components."""
    d = derivatives(network, state, np.zeros(network.n_bus), nu)
    return max(float(np.max(np.abs(v))) for v in (d.delta, d.omega, d.volt, d.gov))


def _pack(network: NetworkModel, x: np.ndarray) -> DynamicState:
    n = network.n_bus
    state = DynamicState.flat(network)
    state.delta[1:] = x[: n - 1]
    state.volt[:] = x[n - 1:]
    return state


def _balance_residual(network: NetworkModel, x: np.ndarray) -> np.ndarray:
    state = _pack(network, x)
    d = derivatives(network, state, np.zeros(network.n_bus))
    # the dropped reference-bus power equation holds by total balance
    return np.concatenate([d.omega[1:], d.volt])


def solve_equilibrium(network: NetworkModel, *, tol: float = 1e-10,
                      x0: np.ndarray | None = None) -> DynamicState:
    """Solve for the pre-disturbance operating point.

    Unknowns are the non-reference angles and all voltages; the first
    bus pins the angle reference at zero.  Speeds and governor states
    vanish by construction, and with a zero attack the demand split is
    invisible, so the result holds for every vulnerability fraction.

    Uses a hybrid Powell root find from the flat start, falling back to
    a short load ramp when the direct solve stalls.  Raises
    :class:`EquilibriumError` if the residual never reaches ``tol``.
    """
    n = network.n_bus
    if x0 is None:
        x0 = np.concatenate([np.zeros(n - 1), np.ones(n)])

    def attempt(net: NetworkModel, start: np.ndarray) -> np.ndarray:
        sol = scipy.optimize.root(
            lambda x: _balance_residual(net, x), start,
            method="hybr", options={"xtol": 1e-13, "maxfev": 4000 * n})
        return sol.x

    x = attempt(network, x0)
    state = _pack(network, x)
    res = equilibrium_residual(network, state)
    if res < tol:
        return state

    # ramp generation and demand together; balance is preserved at
    # every rung, each solution seeds the next
    x = x0
    for lam in (0.25, 0.5, 0.75, 1.0):
        net_lam = dataclasses.replace(
            network, p_gen=lam * network.p_gen, p_max=lam * network.p_max,
            p_load=lam * network.p_load)
        x = attempt(net_lam, x)
    state = _pack(network, x)
    res = equilibrium_residual(network, state)
    if res < tol:
        return state
    raise EquilibriumError(
        f"equilibrium solve stalled at residual {res:.3e} (tolerance {tol:.1e})", res)


@dataclass(frozen=True)
class Trajectory:
    """Sampled waveforms from one run, for inspection and plotting."""

    time: np.ndarray          # (k,)
    omega: np.ndarray         # (k, n_bus) speed deviation, rad/s
    volt: np.ndarray          # (k, n_bus)
    flow: np.ndarray          # (k, n_line) signed line flows, p.u.
    bus_ids: tuple[int, ...]
    line_labels: tuple[str, ...]


@dataclass(frozen=True)
class SimOutcome:
    """Everything a caller may want to know about one finished run."""

    events: tuple[ErEvent, ...]
    final: DynamicState
    collapsed: bool        # every generator disconnected, run cut short
    aborted: bool          # state left the representable range
    time_end: float        # last instant actually integrated
    steps: int
    trajectory: Trajectory | None = None

    @property
    def failure(self) -> bool:
        """True when any emergency response fired or the run broke down."""
        return bool(self.events) or self.collapsed or self.aborted


def _check_eta(network: NetworkModel, eta) -> np.ndarray:
    if eta is None:
        return np.zeros(network.n_bus)
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    if eta.shape != (network.n_bus,):
        raise ValueError(f"eta must have shape ({network.n_bus},), got {eta.shape}")
    if not np.all(np.isfinite(eta)) or np.any(np.abs(eta) > 1.0):
        raise ValueError("attack scaling eta must lie in [-1, 1]")
    return eta


def simulate(network: NetworkModel, eta=None, *, nu: float | None = None,
             duration: float | None = None, step: float | None = None,
             thresholds: ErThresholds | None = None,
             equilibrium: DynamicState | None = None,
             trip_generators: tuple[int, ...] = (),
             stop_at_first_event: bool = False,
             store_every: int = 0,
             backend: str | None = None) -> SimOutcome:
    """Integrate one attack scenario and report what the protection did.

    eta scales the vulnerable demand per bus in [-1, 1]; None means no
    attack.  ``trip_generators`` lists generator bus ids disconnected at
    t = 0 before stepping begins (an applied outage, not a protection
    event).  ``equilibrium`` takes a precomputed operating point so
    batch callers solve once; it is copied, never mutated.

    ``stop_at_first_event`` ends the run right after the inspection
    that raised the first event, which is enough to decide whether a
    scenario fails.  ``store_every`` > 0 keeps every that-many-th step
    (plus t = 0) in the returned trajectory.

    Runs are deterministic: no randomness enters anywhere.
    """
    if nu is None:
        nu = network.nu
    sim_cfg = network.defaults.get("simulation", {})
    if duration is None:
        duration = float(sim_cfg.get("duration_s", DEFAULT_DURATION))
    if step is None:
        step = float(sim_cfg.get("step_s", DEFAULT_STEP))
    if duration <= 0 or step <= 0:
        raise ValueError("duration and step must be positive")
    n_steps = max(1, int(round(duration / step)))
    if thresholds is None:
        thresholds = ErThresholds.from_config(
            network.defaults.get("thresholds", {}), network.f_nominal, step)
    eta = _check_eta(network, eta)
    if equilibrium is None:
        equilibrium = solve_equilibrium(network)

    start = equilibrium.copy()
    for bus_id in trip_generators:
        pos = network.bus_index(bus_id)
        if pos >= network.n_gen:
            raise ValueError(f"bus {bus_id} is not a generator, cannot trip it")
        start.psi[pos] = 0.0

    delta = np.ascontiguousarray(start.delta, dtype=np.float64)
    omega = np.ascontiguousarray(start.omega, dtype=np.float64)
    volt = np.ascontiguousarray(start.volt, dtype=np.float64)
    gov = np.ascontiguousarray(start.gov, dtype=np.float64)
    psi = np.ascontiguousarray(start.psi, dtype=np.float64)
    stage = np.ascontiguousarray(start.stage, dtype=np.int64)
    line_on = np.ascontiguousarray(start.line_on, dtype=np.float64)
    b_eff = effective_susceptance(network, line_on)
    li, lj, _, lmon, llim = network.line_arrays()

    cap = event_capacity(network)
    ev_time = np.zeros(cap)
    ev_kind = np.zeros(cap, dtype=np.int64)
    ev_loc = np.zeros(cap, dtype=np.int64)
    ev_stage = np.zeros(cap, dtype=np.int64)

    store_every = int(store_every)
    if store_every < 0:
        raise ValueError("store_every must be nonnegative")
    width = 1 + 2 * network.n_bus + network.n_line
    if store_every > 0:
        frames = np.empty((1 + n_steps // store_every, width))
    else:
        frames = np.empty((1, width))

    kernel = _kernels.sim_core_fn(backend)
    status, n_ev, steps_done, n_frames = kernel(
        delta, omega, volt, gov, psi, stage, line_on, b_eff, eta,
        network.p_gen, network.p_max, network.p_load, network.inertia,
        network.droop, network.e_field, network.s_volt, network.x_volt,
        network.k_avr, network.e_ref,
        network.damping, network.deadband, float(nu), network.n_gen,
        li, lj, lmon, llim,
        thresholds.rocof, thresholds.over_speed, thresholds.ufls_levels,
        float(step), n_steps, thresholds.inspect_every,
        bool(stop_at_first_event),
        ev_time, ev_kind, ev_loc, ev_stage,
        store_every, frames)

    trajectory = None
    if store_every > 0:
        n = network.n_bus
        kept = frames[:n_frames]
        trajectory = Trajectory(
            time=kept[:, 0].copy(),
            omega=kept[:, 1:1 + n].copy(),
            volt=kept[:, 1 + n:1 + 2 * n].copy(),
            flow=kept[:, 1 + 2 * n:].copy(),
            bus_ids=network.bus_ids,
            line_labels=tuple(l.label() for l in network.lines))

    final = DynamicState(delta=delta, omega=omega, volt=volt, gov=gov,
                         psi=psi, line_on=line_on, stage=stage)
    return SimOutcome(
        events=tuple(decode_events(network, ev_time, ev_kind, ev_loc,
                                   ev_stage, n_ev)),
        final=final,
        collapsed=status == _kernels.STATUS_COLLAPSE,
        aborted=status == _kernels.STATUS_NONFINITE,
        time_end=steps_done * step,
        steps=steps_done,
        trajectory=trajectory)
