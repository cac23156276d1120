"""Command line front end.

Four subcommands:

* ``equilibrium``   solve and print the operating point; exit status 0
                    only when the residual is below 1e-8
* ``simulate-one``  run a single attack/outage scenario and report the
                    emergency responses it triggers
* ``sample``        run one or more conditional sampling chains and the
                    full analysis over the pooled result
* ``analyze``       redo the analysis from previously written chain CSVs

``sample``/``analyze`` write into an output directory: per-chain
``chain_<k>.csv``, pooled ``er_rates.csv`` / ``histograms.csv`` /
``area_table.csv``, a ``summary.json`` (with per-chain diagnostics;
wall-time fields vary run to run, everything else is seed
deterministic) and ``resolved_config.json``.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis
from .attacks import DensityParams, effective_attack
from .config import (ENV_CONFIG, CampaignConfig, load_campaign_file,
                     resolve_campaign, write_resolved)
from .dynamics import line_flow
from .network import ConfigError, NetworkModel, load_network
from .sampler import ProposalConfig, run_chain
from .simulator import EquilibriumError, equilibrium_residual, simulate, solve_equilibrium

RESIDUAL_GATE = 1e-8


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="campaign TOML file "
                   f"(default: ${ENV_CONFIG} when set)")
    p.add_argument("--network", help="network preset name or TOML path "
                   "(overrides the campaign file)")
    p.add_argument("--nu", type=float, help="vulnerable demand fraction")
    p.add_argument("--seed", type=int, help="campaign seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--chains", type=int, help="number of independent chains")
    p.add_argument("--samples", type=int, help="retained states per chain")
    p.add_argument("--backend", choices=("numba", "numpy"),
                   help="numerical backend (default: numba when available)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gridskip",
        description="rare-event sampling of load-altering attacks "
                    "against a small power grid model")
    sub = ap.add_subparsers(dest="command", required=True)

    p_eq = sub.add_parser("equilibrium", help="solve the operating point")
    _add_common(p_eq)

    p_one = sub.add_parser("simulate-one", help="run one scenario")
    _add_common(p_one)
    p_one.add_argument("--attack", default="",
                       help="raw attack per bus, e.g. '5=3.0,6=-1.2' (p.u.)")
    p_one.add_argument("--trip-generator", type=int, action="append",
                       default=[], metavar="BUS",
                       help="disconnect this generator at t=0 (repeatable)")
    p_one.add_argument("--store-trajectory", metavar="CSV",
                       help="write sampled waveforms to this file")

    p_s = sub.add_parser("sample", help="conditional sampling campaign")
    _add_common(p_s)
    p_s.add_argument("--u0", default="",
                     help="starting attack, same format as --attack")

    p_a = sub.add_parser("analyze", help="analyse existing chain CSVs")
    _add_common(p_a)
    p_a.add_argument("chain_csv", nargs="+", help="chain files to pool")

    return ap


def _resolve(args) -> CampaignConfig:
    cfg_path = args.config or os.environ.get(ENV_CONFIG)
    doc = load_campaign_file(cfg_path) if cfg_path else None
    overrides = {
        "network": args.network,
        "nu": args.nu,
        "seed": args.seed,
        "out": args.out,
        "chains": args.chains,
        "samples": getattr(args, "samples", None),
        "backend": args.backend,
    }
    return resolve_campaign(doc, overrides=overrides)


def _parse_attack(spec: str, network: NetworkModel) -> np.ndarray | None:
    if not spec:
        return None
    u = np.zeros(network.n_bus)
    for tok in spec.split(","):
        try:
            bus_s, val_s = tok.split("=")
            u[network.bus_index(int(bus_s))] = float(val_s)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"bad attack token {tok!r}: {exc}") from exc
    return u


def cmd_equilibrium(cfg: CampaignConfig) -> int:
    network = load_network(cfg.network)
    try:
        eq = solve_equilibrium(network)
    except EquilibriumError as exc:
        print(f"FAILED: {exc}")
        return 2
    res = equilibrium_residual(network, eq)
    flows = line_flow(network, eq)
    print(f"network: {cfg.network} ({network.n_bus} buses, "
          f"{network.n_gen} generators)")
    print(f"residual: {res:.3e}")
    for bus, d, v in zip(network.bus_ids, eq.delta, eq.volt):
        print(f"  bus {bus}: angle {np.degrees(d):+8.3f} deg   "
              f"voltage {v:.6f} p.u.")
    for line, f in zip(network.lines, flows):
        mark = "  [monitored]" if line.monitored else ""
        print(f"  line {line.label()}: flow {f:+8.4f} p.u.{mark}")
    if res >= RESIDUAL_GATE:
        print(f"FAILED: residual {res:.3e} is not below {RESIDUAL_GATE:.0e}")
        return 2
    return 0


def cmd_simulate_one(cfg: CampaignConfig, attack: str, trips: list[int],
                     trajectory_path: str | None) -> int:
    network = load_network(cfg.network)
    nu = cfg.nu if cfg.nu is not None else network.nu
    u = _parse_attack(attack, network)
    eta = None if u is None else effective_attack(network, u, nu)
    out = simulate(network, eta, nu=nu, trip_generators=tuple(trips),
                   store_every=10 if trajectory_path else 0,
                   backend=cfg.backend)
    print(f"nu={nu}  simulated {out.time_end:.2f} s "
          f"({'failure' if out.failure else 'no emergency response'})")
    for e in out.events:
        extra = f" stage {e.stage}" if e.kind == "load_shed" else ""
        print(f"  t={e.time:7.3f}  {e.kind:18s} at {e.location}{extra}")
    if out.collapsed:
        print("  every generator disconnected; run ended early")
    if out.aborted:
        print("  state diverged; run ended early")
    if trajectory_path:
        tr = out.trajectory
        with open(trajectory_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"]
                       + [f"omega_{b}" for b in tr.bus_ids]
                       + [f"volt_{b}" for b in tr.bus_ids]
                       + [f"flow_{lb}" for lb in tr.line_labels])
            for k in range(len(tr.time)):
                w.writerow([repr(float(tr.time[k]))]
                           + [repr(float(v)) for v in tr.omega[k]]
                           + [repr(float(v)) for v in tr.volt[k]]
                           + [repr(float(v)) for v in tr.flow[k]])
        print(f"trajectory written to {trajectory_path}")
    return 0


def _chain_worker(payload: tuple) -> tuple[analysis.ChainData, dict]:
    (network_src, nu, samples, ss, mu, sigma, scale, k_max, law, geom_p,
     backend, u0) = payload
    network = load_network(network_src)
    params = DensityParams.for_network(network, mu=mu, sigma=sigma)
    proposal = ProposalConfig(scale=scale, k_max=k_max, law=law, geom_p=geom_p)
    result = run_chain(network, samples, params=params, proposal=proposal,
                       nu=nu, seed=ss, backend=backend,
                       u0=None if u0 is None else np.asarray(u0))
    return analysis.chain_data(result), result.diagnostics()


def _write_analysis(out_dir: Path, network: NetworkModel,
                    data: analysis.ChainData, params: DensityParams,
                    diagnostics: list[dict]) -> None:
    rates = analysis.er_rates(data)
    analysis.write_er_rates_csv(out_dir / "er_rates.csv", rates)
    analysis.write_histograms_csv(
        out_dir / "histograms.csv",
        analysis.histogram_table(data, params, network.bus_ids))
    analysis.write_area_csv(out_dir / "area_table.csv",
                            analysis.area_table(network, data))
    summary = analysis.summarize(network, data, params)
    analysis.write_summary_json(out_dir / "summary.json", summary,
                                {"chains": diagnostics})
    print(f"pooled {data.n} states, nu={data.nu} "
          f"({analysis.regime_label(data.nu)} regime)")
    for kind, frac in summary.rates.mode_fraction.items():
        print(f"  {kind:18s} in {frac:6.1%} of failures")
    print(f"  area table: {summary.area}")


def cmd_sample(cfg: CampaignConfig, u0_spec: str) -> int:
    network = load_network(cfg.network)
    nu = cfg.nu if cfg.nu is not None else network.nu
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = DensityParams.for_network(network, mu=cfg.density_mu,
                                       sigma=cfg.density_sigma)
    u0 = _parse_attack(u0_spec, network)

    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    payloads = [
        (cfg.network, nu, cfg.samples, ss, cfg.density_mu, cfg.density_sigma,
         cfg.proposal_scale, cfg.proposal_k_max, cfg.proposal_law,
         cfg.proposal_geom_p, cfg.backend,
         None if u0 is None else u0.tolist())
        for ss in seeds
    ]
    if cfg.chains == 1:
        results = [_chain_worker(payloads[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(cfg.chains, os.cpu_count() or 1)) as ex:
            results = list(ex.map(_chain_worker, payloads))

    datasets, diagnostics = [], []
    for k, (data, diag) in enumerate(results):
        analysis.write_chain_csv(out_dir / f"chain_{k}.csv", network, data)
        datasets.append(data)
        diagnostics.append(diag)
        print(f"chain {k}: acceptance {diag['acceptance_rate']:.1%}, "
              f"{diag['indicator_calls']} indicator calls")

    pooled = analysis.merge_chains(datasets)
    _write_analysis(out_dir, network, pooled, params, diagnostics)
    write_resolved(out_dir / "resolved_config.json", cfg)
    print(f"outputs in {out_dir}/")
    return 0


def cmd_analyze(cfg: CampaignConfig, chain_files: list[str]) -> int:
    network = load_network(cfg.network)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = DensityParams.for_network(network, mu=cfg.density_mu,
                                       sigma=cfg.density_sigma)
    datasets = [analysis.read_chain_csv(p) for p in chain_files]
    pooled = analysis.merge_chains(datasets)
    _write_analysis(out_dir, network, pooled, params, [])
    write_resolved(out_dir / "resolved_config.json", cfg)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        if args.command == "equilibrium":
            return cmd_equilibrium(cfg)
        if args.command == "simulate-one":
            return cmd_simulate_one(cfg, args.attack, args.trip_generator,
                                    args.store_trajectory)
        if args.command == "sample":
            return cmd_sample(cfg, args.u0)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.chain_csv)
    except (ConfigError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
