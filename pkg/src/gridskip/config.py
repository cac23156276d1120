"""Campaign configuration: file, environment and flag merging.

A campaign file is TOML with up to three tables::

    [campaign]
    network = "two_area"     # preset name or path to a network file
    nu = 0.8                 # vulnerability override (else network's)
    samples = 2000
    chains = 1
    seed = 1
    out = "campaign-out"
    backend = "numba"        # optional; default picks automatically

    [density]
    mu = 0.0
    sigma = 4.0

    [proposal]
    scale = 1.0
    k_max = 40
    law = "fixed"            # or "geometric"
    geom_p = 0.1

Precedence, highest first: command-line flags, GRIDSKIP_* environment
variables, the file, built-in defaults.  The fully resolved settings
are echoed to resolved_config.json next to the outputs so a campaign
is reproducible from its artifacts alone.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from .network import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_CONFIG = "GRIDSKIP_CONFIG"
ENV_SEED = "GRIDSKIP_SEED"
ENV_NU = "GRIDSKIP_NU"
ENV_OUT = "GRIDSKIP_OUT"
ENV_CHAINS = "GRIDSKIP_CHAINS"


@dataclass
class CampaignConfig:
    """Fully resolved settings for one sampling campaign."""

    network: str = "two_area"
    nu: float | None = None
    samples: int = 1000
    chains: int = 1
    seed: int = 1
    out: str = "campaign-out"
    backend: str | None = None
    density_mu: float = 0.0
    density_sigma: float = 4.0
    proposal_scale: float = 1.0
    proposal_k_max: int = 40
    proposal_law: str = "fixed"
    proposal_geom_p: float = 0.1

    def validate(self) -> "CampaignConfig":
        if self.samples < 1:
            raise ConfigError("samples must be at least 1")
        if self.chains < 1:
            raise ConfigError("chains must be at least 1")
        if self.nu is not None and not 0.0 <= self.nu <= 1.0:
            raise ConfigError("nu must lie in [0, 1]")
        if self.density_sigma <= 0:
            raise ConfigError("density sigma must be positive")
        if self.proposal_scale <= 0:
            raise ConfigError("proposal scale must be positive")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def load_campaign_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"campaign file not found: {path}")
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from exc


_KEYMAP = {
    ("campaign", "network"): ("network", str),
    ("campaign", "nu"): ("nu", float),
    ("campaign", "samples"): ("samples", int),
    ("campaign", "chains"): ("chains", int),
    ("campaign", "seed"): ("seed", int),
    ("campaign", "out"): ("out", str),
    ("campaign", "backend"): ("backend", str),
    ("density", "mu"): ("density_mu", float),
    ("density", "sigma"): ("density_sigma", float),
    ("proposal", "scale"): ("proposal_scale", float),
    ("proposal", "k_max"): ("proposal_k_max", int),
    ("proposal", "law"): ("proposal_law", str),
    ("proposal", "geom_p"): ("proposal_geom_p", float),
}


def resolve_campaign(file_doc: dict | None = None,
                     env: dict | None = None,
                     overrides: dict | None = None) -> CampaignConfig:
    """Merge file, environment and explicit overrides into one config.

    overrides uses CampaignConfig field names with None meaning 'not
    given'.  Unknown tables or keys in the file are rejected so typos
    fail loudly instead of silently running defaults.
    """
    cfg = CampaignConfig()
    if file_doc:
        known_tables = {t for t, _ in _KEYMAP}
        for table in file_doc:
            if table not in known_tables:
                raise ConfigError(f"unknown campaign table [{table}]")
            for key in file_doc[table]:
                if (table, key) not in _KEYMAP:
                    raise ConfigError(f"unknown campaign key {table}.{key}")
        for (table, key), (attr, cast) in _KEYMAP.items():
            if table in file_doc and key in file_doc[table]:
                setattr(cfg, attr, cast(file_doc[table][key]))

    if env is None:
        env = os.environ
    env_casts = {ENV_SEED: ("seed", int), ENV_NU: ("nu", float),
                 ENV_OUT: ("out", str), ENV_CHAINS: ("chains", int)}
    for var, (attr, cast) in env_casts.items():
        if env.get(var):
            try:
                setattr(cfg, attr, cast(env[var]))
            except ValueError as exc:
                raise ConfigError(f"bad {var}={env[var]!r}: {exc}") from exc

    if overrides:
        for attr, value in overrides.items():
            if value is not None:
                setattr(cfg, attr, value)
    return cfg.validate()


def write_resolved(path: str | Path, cfg: CampaignConfig) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
