"""Rare-event sampling of load-altering attacks on a small grid model.

The package couples a hybrid grid simulator (third-order machine
dynamics plus one-way protection switching) with a skipping-sampler
MCMC chain that explores the set of attacks severe enough to make that
protection fire, and reports conditional statistics over the failures
it finds.

Typical entry points: :func:`load_network`, :func:`solve_equilibrium`,
:func:`simulate`, :func:`run_chain`, and the ``gridskip`` command line.
"""

from .analysis import (CampaignSummary, ChainData, area_table, chain_data,
                       er_rates, histogram_table, ks_table, merge_chains,
                       read_chain_csv, regime_label, summarize,
                       write_chain_csv)
from .attacks import (DensityParams, effective_attack, log_density,
                      sample_reference, vulnerable_demand)
from .dynamics import DynamicState, derivatives, line_flow, net_generation, net_load
from .network import ConfigError, Line, NetworkModel, load_network
from .protection import ErEvent, ErThresholds, inspect
from .sampler import (ChainResult, ProposalConfig, SkipResult, initial_attack,
                      run_chain, skip_chain)
from .simulator import (EquilibriumError, SimOutcome, Trajectory,
                        equilibrium_residual, simulate, solve_equilibrium)

__version__ = "0.1.0"

__all__ = [
    "CampaignSummary", "ChainData", "ChainResult", "ConfigError",
    "DensityParams", "DynamicState", "EquilibriumError", "ErEvent",
    "ErThresholds", "Line", "NetworkModel", "ProposalConfig", "SimOutcome",
    "SkipResult", "Trajectory", "area_table", "chain_data", "derivatives",
    "effective_attack", "equilibrium_residual", "er_rates",
    "histogram_table", "initial_attack", "inspect", "ks_table",
    "line_flow", "load_network", "log_density", "merge_chains",
    "net_generation", "net_load", "read_chain_csv", "regime_label",
    "run_chain", "sample_reference", "simulate", "skip_chain",
    "solve_equilibrium", "summarize", "vulnerable_demand",
    "write_chain_csv",
]
