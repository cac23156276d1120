"""Grid state and the continuous part of the hybrid model.

The dynamic state couples four continuous vectors (rotor angle, speed
deviation, transient voltage, governor response) with three discrete
indicator vectors (generator connection, line service, load shedding
stage).  Speeds are deviations from nominal in rad/s, so an undisturbed
equilibrium has omega identically zero.

Functions here are pure: they never mutate their inputs and the same
inputs produce bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .network import NetworkModel, effective_susceptance


@dataclass
class DynamicState:
    """Snapshot of the full hybrid state at one instant."""

    delta: np.ndarray      # rotor / bus voltage angle, rad
    omega: np.ndarray      # speed deviation from nominal, rad/s
    volt: np.ndarray       # transient internal voltage, p.u.
    gov: np.ndarray        # accumulated governor response, p.u. power
    psi: np.ndarray        # generator connection indicator per bus (loads fixed 1)
    line_on: np.ndarray    # per-line service indicator
    stage: np.ndarray      # load shedding stage counter per bus, 0..4

    def copy(self) -> "DynamicState":
        return DynamicState(self.delta.copy(), self.omega.copy(),
                            self.volt.copy(), self.gov.copy(),
                            self.psi.copy(), self.line_on.copy(),
                            self.stage.copy())

    def avr_output(self, network: NetworkModel) -> np.ndarray:
        """Exciter feedback signal, proportional to the voltage error."""
        return network.k_avr * (self.volt - network.e_ref)

    @classmethod
    def flat(cls, network: NetworkModel) -> "DynamicState":
        """All-angles-zero, unit-voltage state with everything in service."""
        n = network.n_bus
        return cls(
            delta=np.zeros(n),
            omega=np.zeros(n),
            volt=np.ones(n),
            gov=np.zeros(n),
            psi=np.ones(n),
            line_on=np.ones(network.n_line),
            stage=np.zeros(n, dtype=np.int64),
        )


def system_momentum(network: NetworkModel, psi: np.ndarray) -> float:
    """Angular momentum of the connected generators, sum of psi_i * H_i."""
    psi = np.asarray(psi, dtype=np.float64)
    return _kernels.msys_core(psi, network.inertia, network.n_gen)


def net_generation(network: NetworkModel, gov: np.ndarray) -> np.ndarray:
    """Capped generator output: min(p_max, p_gen + gov) per bus.

    Load buses carry zero dispatch and zero cap, so the result is zero
    there.  The cap binds only from above; the governor term may drive the
    output negative, which models units absorbing surplus.
    """
    gov = np.asarray(gov, dtype=np.float64)
    return np.minimum(network.p_max, network.p_gen + gov)


def net_load(network: NetworkModel, stage: np.ndarray, eta: np.ndarray,
             nu: float | None = None) -> np.ndarray:
    """Demand per bus under attack and shedding.

    Splits nominal demand into a secure part (1 - nu) and a vulnerable
    part nu scaled by (1 + eta); each shedding stage then removes 10 %
    of that net figure.  eta outside [-1, 1] is a contract violation.
    """
    if nu is None:
        nu = network.nu
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (network.n_bus,):
        raise ValueError(f"eta must have shape ({network.n_bus},), got {eta.shape}")
    if np.any(np.abs(eta) > 1.0) or not np.all(np.isfinite(eta)):
        raise ValueError("attack scaling eta must lie in [-1, 1]")
    stage = np.asarray(stage)
    if np.any(stage < 0) or np.any(stage > 4):
        raise ValueError("shedding stage must lie in 0..4")
    base = (1.0 - nu) * network.p_load + (1.0 + eta) * nu * network.p_load
    return (1.0 - 0.1 * stage) * base


def line_flow(network: NetworkModel, state: DynamicState) -> np.ndarray:
    """Active power on each line, signed from the 'from' to the 'to' bus.

    A disconnected line carries exactly zero.
    """
    li, lj, _, _, _ = network.line_arrays()
    b_eff = effective_susceptance(network, state.line_on)
    return (b_eff[li, lj] * state.volt[li] * state.volt[lj]
            * np.sin(state.delta[li] - state.delta[lj]))


def derivatives(network: NetworkModel, state: DynamicState, eta: np.ndarray,
                nu: float | None = None) -> DynamicState:
    """Right-hand side of the continuous dynamics with indicators frozen.

    Returns a DynamicState whose continuous fields hold the derivatives
    (indicator fields are returned as zero-change copies).  Raises if no
    connected generator remains, since the swing equations then lose
    meaning.
    """
    if nu is None:
        nu = network.nu
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    if eta.shape != (network.n_bus,):
        raise ValueError(f"eta must have shape ({network.n_bus},), got {eta.shape}")
    if np.any(np.abs(eta) > 1.0):
        raise ValueError("attack scaling eta must lie in [-1, 1]")
    m_sys = system_momentum(network, state.psi)
    if m_sys <= 0.0:
        raise ValueError("system momentum is zero: no connected generator")
    n = network.n_bus
    b_eff = effective_susceptance(network, state.line_on)
    dd = np.empty(n)
    do = np.empty(n)
    dv = np.empty(n)
    dg = np.empty(n)
    _kernels.deriv_core(
        np.ascontiguousarray(state.delta, dtype=np.float64),
        np.ascontiguousarray(state.omega, dtype=np.float64),
        np.ascontiguousarray(state.volt, dtype=np.float64),
        np.ascontiguousarray(state.gov, dtype=np.float64),
        np.ascontiguousarray(state.psi, dtype=np.float64),
        np.ascontiguousarray(state.stage, dtype=np.int64),
        eta, b_eff,
        network.p_gen, network.p_max, network.p_load, network.droop,
        network.e_field, network.s_volt, network.x_volt,
        network.k_avr, network.e_ref,
        network.damping, network.deadband, float(nu), m_sys,
        dd, do, dv, dg)
    return DynamicState(delta=dd, omega=do, volt=dv, gov=dg,
                        psi=np.zeros_like(state.psi),
                        line_on=np.zeros_like(state.line_on),
                        stage=np.zeros_like(state.stage))


def rocof(network: NetworkModel, state: DynamicState, eta: np.ndarray,
          nu: float | None = None) -> np.ndarray:
    """Nodal acceleration (rate of change of speed deviation), rad/s^2."""
    return derivatives(network, state, eta, nu).omega
