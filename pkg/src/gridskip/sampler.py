"""Skipping-sampler MCMC for conditional sampling of rare failure sets.

Targets pi(u) proportional to rho(u) * 1_C(u), where rho is a known
density and C is a rare set reachable only through an indicator
function (here: "this attack makes the grid's protection fire",
evaluated by simulation).  A plain random-walk Metropolis chain stalls
on such targets because nearly every proposal leaves C.  The skipping
proposal fixes that: draw one Gaussian displacement, and if it lands
outside C, keep moving along the same direction with fresh random step
lengths, up to a cap, until C is hit or patience runs out.  The final
point is then accepted or rejected by the usual Metropolis ratio,
which stays correct because the skip keeps the proposal symmetric.

The chain walks only the coordinates the dynamics can feel (buses with
vulnerable demand).  Under the reference density the remaining
coordinates are independent of both the active block and the
conditioning event, so their conditional law IS the reference law;
each retained state gets them as fresh reference draws rather than
random-walk moves.  That is exact, and it avoids parking a
random-walk coordinate in the lognormal density's spike near zero,
where every proposal away gets rejected and the whole chain would
freeze.

:func:`skip_chain` is the bare algorithm over arbitrary density and
indicator callables; :func:`run_chain` wires it to a network, finds a
starting failure, and re-simulates every distinct retained state in
full so downstream analysis sees complete event lists.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attacks import (DensityParams, effective_attack, log_density,
                      sample_reference, vulnerable_demand)
from .network import ConfigError, NetworkModel
from .simulator import SimOutcome, simulate, solve_equilibrium


@dataclass(frozen=True)
class ProposalConfig:
    """Random-walk scale and skip-length law.

    scale broadcasts over coordinates.  law "fixed" always allows
    k_max points per round; law "geometric" draws the allowance fresh
    each round with success probability geom_p (support 1, 2, ...),
    capped at k_max.
    """

    scale: float | np.ndarray = 1.0
    k_max: int = 40
    law: str = "fixed"
    geom_p: float = 0.1

    def __post_init__(self):
        if self.law not in ("fixed", "geometric"):
            raise ConfigError(f"unknown skip-length law '{self.law}'")
        if self.k_max < 1:
            raise ConfigError("k_max must be at least 1")
        if self.law == "geometric" and not 0.0 < self.geom_p < 1.0:
            raise ConfigError("geom_p must lie in (0, 1)")

    def scale_vector(self, n: int) -> np.ndarray:
        s = np.broadcast_to(np.asarray(self.scale, dtype=np.float64), (n,)).copy()
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ConfigError("proposal scale must be positive and finite")
        return s

    def draw_k(self, rng: np.random.Generator) -> int:
        if self.law == "fixed":
            return self.k_max
        return min(int(rng.geometric(self.geom_p)), self.k_max)


@dataclass
class SkipResult:
    """Raw chain output, one row per retained state."""

    samples: np.ndarray        # (n, dim)
    accepted: np.ndarray       # (n,) bool, proposal taken this round
    indicator_calls: np.ndarray  # (n,) oracle evaluations spent this round
    skip_lengths: np.ndarray   # (n,) points probed along the direction
    log_dens: np.ndarray       # (n,) log rho of the retained state

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if len(self.accepted) else 0.0

    @property
    def total_calls(self) -> int:
        return int(np.sum(self.indicator_calls))


def skip_round(u, log_u, log_dens_fn, indicator, proposal: ProposalConfig,
               scale: np.ndarray, rng: np.random.Generator):
    """One proposal round.  Returns (u', log', accepted, calls, k_used).

    The round spends at most k allowed points worth of indicator calls,
    where k is the round's skip allowance.
    """
    n = u.shape[0]
    z = u + scale * rng.standard_normal(n)
    k_allow = proposal.draw_k(rng)
    step = z - u
    norm = float(np.linalg.norm(step))

    calls = 1
    in_c = bool(indicator(z))
    k_used = 1
    if norm > 0.0:
        direction = step / norm
        while not in_c and k_used < k_allow:
            r = float(np.linalg.norm(scale * rng.standard_normal(n)))
            z = z + direction * r
            k_used += 1
            calls += 1
            in_c = bool(indicator(z))

    accept_u = rng.random()  # drawn every round to keep streams aligned
    if not in_c:
        return u, log_u, False, calls, k_used
    log_z = log_dens_fn(z)
    if log_u == -math.inf:
        accepted = True
    elif log_z == -math.inf:
        accepted = False
    else:
        accepted = math.log(accept_u) < log_z - log_u if accept_u > 0.0 else True
    if accepted:
        return z, log_z, True, calls, k_used
    return u, log_u, False, calls, k_used


def skip_chain(log_dens_fn, indicator, u0: np.ndarray, proposal: ProposalConfig,
               rng: np.random.Generator, n_samples: int,
               check_start: bool = True) -> SkipResult:
    """Run the skipping sampler and retain n_samples states after u0.

    u0 must satisfy the indicator (checked unless the caller already
    knows); the chain never leaves the conditioning set afterwards.
    """
    u = np.asarray(u0, dtype=np.float64).copy()
    if check_start and not indicator(u):
        raise ValueError("starting state does not satisfy the indicator")
    dim = u.shape[0]
    scale = proposal.scale_vector(dim)
    log_u = log_dens_fn(u)

    samples = np.empty((n_samples, dim))
    accepted = np.zeros(n_samples, dtype=bool)
    calls = np.zeros(n_samples, dtype=np.int64)
    lengths = np.zeros(n_samples, dtype=np.int64)
    log_dens = np.empty(n_samples)

    for i in range(n_samples):
        u, log_u, acc, c, k_used = skip_round(
            u, log_u, log_dens_fn, indicator, proposal, scale, rng)
        samples[i] = u
        accepted[i] = acc
        calls[i] = c
        lengths[i] = k_used
        log_dens[i] = log_u
    return SkipResult(samples, accepted, calls, lengths, log_dens)


def failure_indicator(network: NetworkModel, nu: float | None = None,
                      equilibrium=None, backend: str | None = None):
    """Oracle closure: does this raw attack trigger any emergency response?

    Bound to one solved equilibrium so repeated calls share it; each
    call is one early-stopped simulation.
    """
    if equilibrium is None:
        equilibrium = solve_equilibrium(network)

    def indicator(u: np.ndarray) -> bool:
        eta = effective_attack(network, u, nu)
        out = simulate(network, eta, nu=nu, equilibrium=equilibrium,
                       stop_at_first_event=True, backend=backend)
        return out.failure

    return indicator


def seed_attacks(network: NetworkModel, nu: float | None = None) -> list[np.ndarray]:
    """Deterministic starting candidates, strongest first.

    Saturated all-increase is the most damaging vector the attack space
    admits; the area-split variant covers regimes failing through
    inter-area transfer rather than raw deficit.  Coordinates without
    vulnerable demand stay zero (the chain never walks them anyway).
    """
    cap = (network.nu if nu is None else nu) * network.p_load
    areas = np.asarray(network.areas)
    split = np.where(areas == areas[0], -cap, cap)
    return [cap.copy(), split]


def initial_attack(network: NetworkModel, params: DensityParams,
                   indicator, rng: np.random.Generator,
                   nu: float | None = None, u0: np.ndarray | None = None,
                   search_budget: int = 2000) -> tuple[np.ndarray, int]:
    """Find a failure state to start the chain from.

    Tries the caller's u0 first (an error if it does not fail, since an
    explicit start is a statement of intent), then the deterministic
    seeds, then reference draws up to search_budget oracle calls.
    Returns the full-width state and the number of calls spent.
    """
    calls = 0
    if u0 is not None:
        u0 = np.asarray(u0, dtype=np.float64)
        calls += 1
        if not indicator(u0):
            raise ValueError("provided starting attack does not cause any "
                             "emergency response; pick a stronger one or drop it")
        return u0, calls

    for cand in seed_attacks(network, nu):
        calls += 1
        if indicator(cand):
            return cand, calls

    while calls < search_budget:
        cand = sample_reference(params, rng)
        calls += 1
        if indicator(cand):
            return cand, calls
    raise RuntimeError(
        f"no failure-causing attack found in {search_budget} attempts; "
        "the conditioning event looks empty at this vulnerability level")


@dataclass
class ChainResult:
    """One chain's retained states plus everything analysis needs."""

    raw: SkipResult
    eta: np.ndarray                    # (n, n_bus) effective scalings
    outcomes: tuple[SimOutcome, ...]   # one per retained state, duplicates shared
    nu: float
    seed_info: str
    wall_time_s: float
    start_calls: int

    @property
    def n(self) -> int:
        return self.raw.samples.shape[0]

    def diagnostics(self) -> dict:
        return {
            "samples": self.n,
            "acceptance_rate": self.raw.acceptance_rate,
            "indicator_calls": self.raw.total_calls + self.start_calls,
            "start_calls": self.start_calls,
            "mean_skip_length": float(np.mean(self.raw.skip_lengths)) if self.n else 0.0,
            "nu": self.nu,
            "seed": self.seed_info,
            "wall_time_s": self.wall_time_s,
        }


def _checkpoint_dump(path: Path, u: np.ndarray, done: int, rng: np.random.Generator):
    state = rng.bit_generator.state
    payload = {"u": u.tolist(), "rounds_done": done, "rng_state": state}
    path.write_text(json.dumps(payload))


def run_chain(network: NetworkModel, n_samples: int, *,
              params: DensityParams | None = None,
              proposal: ProposalConfig | None = None,
              nu: float | None = None,
              seed: int | np.random.SeedSequence | None = None,
              u0: np.ndarray | None = None,
              backend: str | None = None,
              checkpoint_path: str | Path | None = None) -> ChainResult:
    """Sample n_samples attack vectors conditioned on grid failure.

    The chain walks the coordinates with vulnerable demand; the rest
    are filled with fresh reference draws row by row (their exact
    conditional law).  raw.log_dens densities cover the walked block
    only.  The in-loop oracle stops each simulation at its first event;
    after the chain finishes, every distinct retained state is
    re-simulated in full (one extra run per accepted proposal) so the
    outcomes carry complete event lists.  With a fixed seed the result
    is bit reproducible.  If the oracle raises, the chain state is
    dumped to checkpoint_path (when given) before the error propagates.
    """
    if params is None:
        params = DensityParams.for_network(network)
    if proposal is None:
        proposal = ProposalConfig()
    if nu is None:
        nu = network.nu
    if isinstance(seed, np.random.SeedSequence):
        rng = np.random.default_rng(seed)
        seed_info = f"seedsequence {seed.entropy}/{seed.spawn_key}"
    else:
        rng = np.random.default_rng(seed)
        seed_info = str(seed)

    t0 = time.perf_counter()
    equilibrium = solve_equilibrium(network)
    indicator = failure_indicator(network, nu, equilibrium, backend)

    active = np.flatnonzero(vulnerable_demand(network, nu) > 0.0)
    if active.size == 0:
        raise ConfigError("no bus has vulnerable demand; nothing to sample")
    params_act = DensityParams(mu=params.mu[active], sigma=params.sigma[active])

    def embed(z: np.ndarray) -> np.ndarray:
        full = np.zeros(network.n_bus)
        full[active] = z
        return full

    def log_dens_act(z):
        return log_density(z, params_act)

    def indicator_act(z):
        return indicator(embed(z))

    u_start, start_calls = initial_attack(network, params, indicator, rng,
                                          nu=nu, u0=u0)
    z_start = np.asarray(u_start, dtype=np.float64)[active]
    try:
        raw = skip_chain(log_dens_act, indicator_act, z_start, proposal, rng,
                         n_samples, check_start=False)
    except Exception:
        if checkpoint_path is not None:
            _checkpoint_dump(Path(checkpoint_path), u_start, 0, rng)
        raise

    # embed the walked block and refresh the inert coordinates with
    # fresh reference draws per retained row: they are independent of
    # the conditioning event, so this samples their conditional law
    # exactly
    samples = np.empty((n_samples, network.n_bus))
    inert = np.setdiff1d(np.arange(network.n_bus), active)
    samples[:, active] = raw.samples
    if inert.size:
        params_in = DensityParams(mu=params.mu[inert], sigma=params.sigma[inert])
        samples[:, inert] = sample_reference(params_in, rng, size=n_samples)
    raw.samples = samples

    # full re-simulation of each distinct state; rejected rounds reuse
    # the previous record
    outcomes: list[SimOutcome] = []
    last: SimOutcome | None = None
    eta = np.empty_like(samples)
    for i in range(n_samples):
        eta[i] = effective_attack(network, samples[i], nu)
        if last is None or raw.accepted[i]:
            last = simulate(network, eta[i], nu=nu, equilibrium=equilibrium,
                            backend=backend)
        outcomes.append(last)

    return ChainResult(raw=raw, eta=eta, outcomes=tuple(outcomes), nu=float(nu),
                       seed_info=seed_info, wall_time_s=time.perf_counter() - t0,
                       start_calls=start_calls)
