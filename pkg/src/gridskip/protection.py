"""Emergency response logic: shedding relays and line overload trips.

Four mechanisms are inspected at regular instants along a trajectory:

1. generator shed when nodal acceleration magnitude exceeds a limit,
2. generator shed when its speed deviation rises past an overspeed limit,
3. staged under-frequency load shedding, up to four stages per bus,
   each removing 10 % of the net demand at that bus,
4. disconnection of a monitored line whose flow magnitude exceeds its
   rating.

Generator and line indicators flip one way only; shedding stages only
grow.  Within one inspection the checks run in the order listed above
on the incoming state; see :func:`inspect`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import DynamicState
from .network import ConfigError, NetworkModel, effective_susceptance

KIND_NAMES = {
    _kernels.EV_GEN_ACCEL: "gen_accel_shed",
    _kernels.EV_GEN_SPEED: "gen_overspeed_shed",
    _kernels.EV_LOAD_SHED: "load_shed",
    _kernels.EV_LINE_TRIP: "line_trip",
}
KIND_CODES = {name: code for code, name in KIND_NAMES.items()}


@dataclass(frozen=True)
class ErEvent:
    """One emergency response activation."""

    time: float
    kind: str          # one of KIND_NAMES.values()
    location: str      # bus id or line label
    stage: int = 0     # shedding stage reached, load_shed only


@dataclass(frozen=True)
class ErThresholds:
    """Protection settings in internal units (rad/s and rad/s^2).

    Built from Hz-denominated configuration via :meth:`from_config`;
    the shedding levels must be strictly decreasing and all below the
    overspeed limit's mirror image (they sit under nominal frequency).
    """

    rocof: float                 # |acceleration| limit, rad/s^2
    over_speed: float            # speed deviation limit, rad/s
    ufls_levels: np.ndarray      # 4 speed deviation levels, rad/s, decreasing
    inspect_every: int           # protection scan period in integrator steps

    @classmethod
    def from_config(cls, cfg: dict, f_nominal: float, step: float) -> "ErThresholds":
        two_pi = 2.0 * math.pi
        rocof_hz = float(cfg.get("rocof_hz_per_s", 1.0))
        over_hz = float(cfg.get("over_frequency_hz", f_nominal + 1.5))
        ufls_hz = cfg.get("ufls_frequencies_hz",
                          [f_nominal - 0.5, f_nominal - 1.0,
                           f_nominal - 1.5, f_nominal - 2.0])
        interval = float(cfg.get("inspection_interval_s", 0.0))
        if rocof_hz <= 0:
            raise ConfigError("rocof_hz_per_s must be positive")
        if over_hz <= f_nominal:
            raise ConfigError("over_frequency_hz must exceed nominal frequency")
        levels = np.asarray([float(v) for v in ufls_hz], dtype=np.float64)
        if levels.shape != (4,):
            raise ConfigError("ufls_frequencies_hz needs exactly 4 stages")
        if np.any(np.diff(levels) >= 0):
            raise ConfigError("ufls_frequencies_hz must be strictly decreasing")
        if levels[0] >= f_nominal:
            raise ConfigError("ufls_frequencies_hz must sit below nominal frequency")
        if interval < 0:
            raise ConfigError("inspection_interval_s must be nonnegative")
        if interval == 0.0:
            every = 1
        else:
            every = max(1, int(round(interval / step)))
        lv = two_pi * (levels - f_nominal)
        lv.setflags(write=False)
        return cls(rocof=two_pi * rocof_hz,
                   over_speed=two_pi * (over_hz - f_nominal),
                   ufls_levels=lv,
                   inspect_every=every)


def event_capacity(network: NetworkModel) -> int:
    # each generator sheds at most once, 4 stages per bus, one trip per line
    return network.n_gen + 4 * network.n_bus + network.n_line


def decode_events(network: NetworkModel, ev_time, ev_kind, ev_loc, ev_stage,
                  n_ev: int) -> list[ErEvent]:
    """Translate kernel event buffers into ErEvent records."""
    out = []
    for k in range(n_ev):
        kind = KIND_NAMES[int(ev_kind[k])]
        if kind == "line_trip":
            loc = network.lines[int(ev_loc[k])].label()
        else:
            loc = str(network.bus_ids[int(ev_loc[k])])
        out.append(ErEvent(time=float(ev_time[k]), kind=kind,
                           location=loc, stage=int(ev_stage[k])))
    return out


def inspect(network: NetworkModel, state: DynamicState, eta: np.ndarray,
            thresholds: ErThresholds, t: float,
            nu: float | None = None) -> tuple[DynamicState, list[ErEvent]]:
    """Apply all protection checks once, purely.

    Returns the post-inspection state (a new object; the input is not
    touched) and the list of events raised, in check order.  Calling
    inspect again on the returned state at the same instant yields it
    back unchanged with no events: stages past their level no longer
    match, and disconnected equipment is skipped.
    """
    if nu is None:
        nu = network.nu
    new = state.copy()
    delta = np.ascontiguousarray(new.delta, dtype=np.float64)
    omega = np.ascontiguousarray(new.omega, dtype=np.float64)
    volt = np.ascontiguousarray(new.volt, dtype=np.float64)
    gov = np.ascontiguousarray(new.gov, dtype=np.float64)
    psi = np.ascontiguousarray(new.psi, dtype=np.float64)
    stage = np.ascontiguousarray(new.stage, dtype=np.int64)
    line_on = np.ascontiguousarray(new.line_on, dtype=np.float64)
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    b_eff = effective_susceptance(network, line_on)
    li, lj, _, lmon, llim = network.line_arrays()

    cap = event_capacity(network)
    ev_time = np.zeros(cap)
    ev_kind = np.zeros(cap, dtype=np.int64)
    ev_loc = np.zeros(cap, dtype=np.int64)
    ev_stage = np.zeros(cap, dtype=np.int64)
    work = np.empty((20, network.n_bus))

    n_ev = _kernels.inspect_core(
        delta, omega, volt, gov, psi, stage, line_on, b_eff, eta,
        network.p_gen, network.p_max, network.p_load, network.inertia,
        network.droop, network.e_field, network.s_volt, network.x_volt,
        network.k_avr, network.e_ref,
        network.damping, network.deadband, float(nu), network.n_gen,
        li, lj, lmon, llim,
        thresholds.rocof, thresholds.over_speed, thresholds.ufls_levels,
        float(t), ev_time, ev_kind, ev_loc, ev_stage, 0, work)

    result = DynamicState(delta=delta, omega=omega, volt=volt, gov=gov,
                          psi=psi, line_on=line_on, stage=stage)
    return result, decode_events(network, ev_time, ev_kind, ev_loc, ev_stage, n_ev)
