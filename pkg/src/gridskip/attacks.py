"""Attack vectors over vulnerable demand and their sampling density.

An attack is a vector of signed per-bus demand shifts in absolute p.u.
terms.  Bus i's vulnerable demand is nu * p_load_i; the shift u_i maps
to the relative scaling eta_i = u_i / (nu * p_load_i), clamped to
[-1, 1] because a smart-load fleet cannot move more than everything it
controls.  Buses without vulnerable demand (all generator buses, and
any load bus with zero demand) ignore their coordinate entirely.

The reference density treats coordinates as independent: magnitudes
are lognormal, signs are fair coins.  Zero is impossible under it, so
log_density returns -inf for any exactly-zero coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ConfigError, NetworkModel

LOG_HALF = float(np.log(0.5))


@dataclass(frozen=True)
class DensityParams:
    """Per-coordinate lognormal magnitude parameters.

    mu and sigma follow the usual convention: log|u_i| is normal with
    mean mu_i and standard deviation sigma_i.  Scalars broadcast over
    all buses.
    """

    mu: np.ndarray
    sigma: np.ndarray

    @classmethod
    def for_network(cls, network: NetworkModel, mu=0.0, sigma=4.0) -> "DensityParams":
        n = network.n_bus
        mu_a = np.broadcast_to(np.asarray(mu, dtype=np.float64), (n,)).copy()
        sg_a = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (n,)).copy()
        if not np.all(np.isfinite(mu_a)):
            raise ConfigError("density mu must be finite")
        if not np.all(np.isfinite(sg_a)) or np.any(sg_a <= 0):
            raise ConfigError("density sigma must be positive")
        mu_a.setflags(write=False)
        sg_a.setflags(write=False)
        return cls(mu=mu_a, sigma=sg_a)


def vulnerable_demand(network: NetworkModel, nu: float | None = None) -> np.ndarray:
    """Attackable p.u. demand per bus, nu * p_load."""
    if nu is None:
        nu = network.nu
    return nu * network.p_load


def effective_attack(network: NetworkModel, u: np.ndarray,
                     nu: float | None = None) -> np.ndarray:
    """Relative demand scaling eta realised by the raw attack u.

    Saturates at +-1; coordinates without vulnerable demand come out
    zero no matter what u says there.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (network.n_bus,):
        raise ValueError(f"u must have shape ({network.n_bus},), got {u.shape}")
    cap = vulnerable_demand(network, nu)
    eta = np.zeros(network.n_bus)
    mask = cap > 0.0
    eta[mask] = np.clip(u[mask] / cap[mask], -1.0, 1.0)
    return eta


def log_density(u: np.ndarray, params: DensityParams) -> float:
    """Log of the reference density at u, -inf when unsupported.

    Independent coordinates; each contributes the lognormal log-pdf of
    its magnitude plus log(1/2) for the sign.  Not normalised against
    any conditioning event; callers compare ratios only.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape != params.mu.shape:
        raise ValueError(f"u must have shape {params.mu.shape}, got {u.shape}")
    if not np.all(np.isfinite(u)):
        return -np.inf
    a = np.abs(u)
    if np.any(a == 0.0):
        return -np.inf
    z = (np.log(a) - params.mu) / params.sigma
    logpdf = -np.log(a * params.sigma * np.sqrt(2.0 * np.pi)) - 0.5 * z * z
    return float(np.sum(logpdf + LOG_HALF))


def sample_reference(params: DensityParams, rng: np.random.Generator,
                     size: int | None = None) -> np.ndarray:
    """Draw from the reference density (unconditioned)."""
    n = params.mu.shape[0]
    shape = (n,) if size is None else (size, n)
    mag = rng.lognormal(mean=params.mu, sigma=params.sigma, size=shape)
    sign = rng.integers(0, 2, size=shape) * 2 - 1
    return mag * sign
