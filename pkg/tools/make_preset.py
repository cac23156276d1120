"""Generate the bundled two-area preset and report its security margins.

The electrical design lives in the DESIGN dict below.  Field voltages
cannot be chosen freely: they are back-computed from a voltage-unity
power flow so the packaged network starts exactly at equilibrium.
Run with --battery to print the margin diagnostics that justify the
protection thresholds:

* the four single-generator outages with protection silenced: how deep
  frequency dips, how hard generators accelerate, how much the tie
  carries -> every threshold must clear these with margin,
* saturated and partial attacks per vulnerability level with the same
  envelope numbers -> the thresholds must catch enough of these,
* the same scenarios with the real thresholds -> event patterns.

Usage:
    python tools/make_preset.py --battery          # diagnostics only
    python tools/make_preset.py --emit             # print preset TOML
    python tools/make_preset.py --emit --write PATH
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import root

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from gridskip.network import network_from_dict                     # noqa: E402
from gridskip.protection import ErThresholds                       # noqa: E402
from gridskip.simulator import simulate, solve_equilibrium         # noqa: E402

TWO_PI = 2.0 * math.pi

DESIGN = {
    "damping": 1.35,
    "deadband_hz": 0.05,
    "inertia": 2.0,
    "droop": 1.2,
    "p_gen": 7.0,
    "headroom": 0.0,          # p_max - p_gen per generator
    "s_volt_gen": 2.0,
    "s_volt_load": 2.0,
    "x_volt_gen": 0.10,
    "x_volt_load": 0.08,
    "k_avr": 6.0,
    "b_gen_line": 16.0,
    "b_tie": 20.0,
    "loads": (12.0, 16.0),
    # protection
    "rocof_hz_per_s": 0.10,
    "over_frequency_hz": 51.5,
    "ufls_hz": (49.857, 49.79, 49.70, 49.55),
    "tie_limit": 11.0,
    "inspection_s": 0.05,
    # integration
    "duration_s": 15.0,
    "step_s": 0.005,
}


def build_doc(d: dict) -> dict:
    """Network document for the given design, field voltages solved."""
    loads = d["loads"]
    n = 6
    inj = np.array([d["p_gen"]] * 4 + [-loads[0], -loads[1]])
    lines = [(1, 5, d["b_gen_line"]), (2, 5, d["b_gen_line"]),
             (3, 6, d["b_gen_line"]), (4, 6, d["b_gen_line"]),
             (5, 6, d["b_tie"])]
    pos = {b: i for i, b in enumerate(range(1, 7))}
    B = np.zeros((n, n))
    for f, t, b in lines:
        i, j = pos[f], pos[t]
        B[i, j] += b
        B[j, i] += b
        B[i, i] -= b
        B[j, j] -= b

    def pf(th_free):
        th = np.concatenate([[0.0], th_free])
        out = inj.copy()
        for i in range(n):
            for j in range(n):
                if i != j and B[i, j] != 0.0:
                    out[i] -= B[i, j] * np.sin(th[i] - th[j])
        return out[1:]

    sol = root(pf, np.zeros(n - 1), method="hybr", options={"xtol": 1e-14})
    if np.max(np.abs(pf(sol.x))) > 1e-10:
        raise RuntimeError("design power flow did not converge; weaker lines?")
    th = np.concatenate([[0.0], sol.x])
    if np.any(np.abs(np.diff(th)) > math.radians(75)):
        raise RuntimeError("design power flow is badly stressed at base load")

    x_volt = np.array([d["x_volt_gen"]] * 4 + [d["x_volt_load"]] * 2)
    e_field = np.zeros(n)
    for i in range(n):
        s = sum(B[i, j] * np.cos(th[i] - th[j]) for j in range(n) if B[i, j] != 0.0)
        e_field[i] = 1.0 - x_volt[i] * s

    buses = []
    for i in range(4):
        buses.append({
            "id": i + 1, "kind": "generator", "area": 1 if i < 2 else 2,
            "p_gen": d["p_gen"], "p_max": d["p_gen"] + d["headroom"],
            "inertia": d["inertia"], "droop": d["droop"],
            "e_field": float(e_field[i]), "s_volt": d["s_volt_gen"],
            "x_volt": d["x_volt_gen"], "k_avr": d["k_avr"], "e_ref": 1.0,
        })
    for k, i in enumerate((4, 5)):
        buses.append({
            "id": i + 1, "kind": "load", "area": 1 if i == 4 else 2,
            "p_load": loads[k], "e_field": float(e_field[i]),
            "s_volt": d["s_volt_load"], "x_volt": d["x_volt_load"],
            "k_avr": d["k_avr"], "e_ref": 1.0,
        })
    doc = {
        "system": {"frequency_hz": 50.0, "damping": d["damping"],
                   "deadband_hz": d["deadband_hz"], "vulnerability": 0.8},
        "buses": buses,
        "lines": [
            {"from": 1, "to": 5, "susceptance": d["b_gen_line"]},
            {"from": 2, "to": 5, "susceptance": d["b_gen_line"]},
            {"from": 3, "to": 6, "susceptance": d["b_gen_line"]},
            {"from": 4, "to": 6, "susceptance": d["b_gen_line"]},
            {"from": 5, "to": 6, "susceptance": d["b_tie"],
             "monitored": True, "flow_limit": d["tie_limit"]},
        ],
        "thresholds": {"rocof_hz_per_s": d["rocof_hz_per_s"],
                       "over_frequency_hz": d["over_frequency_hz"],
                       "ufls_frequencies_hz": list(d["ufls_hz"]),
                       "inspection_interval_s": d["inspection_s"]},
        "simulation": {"duration_s": d["duration_s"], "step_s": d["step_s"]},
    }
    return doc


def open_thresholds(network, step: float) -> ErThresholds:
    """Thresholds that never fire, for envelope measurement."""
    return ErThresholds.from_config(
        {"rocof_hz_per_s": 1e9, "over_frequency_hz": 50.0 + 1e9,
         "ufls_frequencies_hz": [-1e9, -2e9, -3e9, -4e9],
         "inspection_interval_s": 0.0},
        f_nominal=network.f_nominal, step=step)


def envelope(network, eq, eta=None, nu=None, trips=(), open_protection=True):
    """Run one scenario and measure the trajectory extremes."""
    d = DESIGN
    thr = open_thresholds(network, d["step_s"]) if open_protection else None
    out = simulate(network, eta, nu=nu, equilibrium=eq, trip_generators=trips,
                   thresholds=thr, store_every=1)
    tr = out.trajectory
    h = tr.time[1] - tr.time[0] if len(tr.time) > 1 else d["step_s"]
    accel = np.diff(tr.omega, axis=0) / h          # rad/s^2 per bus
    connected_gens = [i for i in range(4) if i + 1 not in trips]
    gen_acc = np.max(np.abs(accel[:, connected_gens])) if len(tr.time) > 1 else 0.0
    load_omega = tr.omega[:, 4:6]
    k = np.unravel_index(np.argmin(load_omega), load_omega.shape)
    return {
        "events": out.events,
        "min_omega_hz": float(tr.omega.min() / TWO_PI),
        "min_load_omega_hz": float(load_omega.min() / TWO_PI),
        "t_min_load": float(tr.time[k[0]]),
        "max_omega_hz": float(tr.omega.max() / TWO_PI),
        "max_gen_accel_hzps": float(gen_acc / TWO_PI),
        "max_tie_flow": float(np.max(np.abs(tr.flow[:, 4]))),
        "min_volt": float(tr.volt.min()),
        "collapsed": out.collapsed,
        "aborted": out.aborted,
    }


def fmt(r: dict) -> str:
    return (f"min_f {r['min_omega_hz']:+7.3f} Hz  "
            f"load_f {r['min_load_omega_hz']:+8.4f}@{r['t_min_load']:5.1f}s  "
            f"max_f {r['max_omega_hz']:+6.3f} Hz  "
            f"max_acc {r['max_gen_accel_hzps']:6.3f} Hz/s  "
            f"tie {r['max_tie_flow']:6.2f}  minV {r['min_volt']:5.3f}"
            + ("  COLLAPSED" if r["collapsed"] else "")
            + ("  ABORTED" if r["aborted"] else ""))


def battery(d: dict) -> None:
    network = network_from_dict(build_doc(d))
    eq = solve_equilibrium(network)

    print("=== protection silenced: envelopes ===")
    print("-- single generator outages --")
    worst_n1 = {"dip": 0.0, "acc": 0.0, "tie": 0.0, "peak": 0.0}
    for g in (1, 2, 3, 4):
        r = envelope(network, eq, trips=(g,))
        worst_n1["dip"] = min(worst_n1["dip"], r["min_load_omega_hz"])
        worst_n1["acc"] = max(worst_n1["acc"], r["max_gen_accel_hzps"])
        worst_n1["tie"] = max(worst_n1["tie"], r["max_tie_flow"])
        worst_n1["peak"] = max(worst_n1["peak"], r["max_omega_hz"])
        print(f"  trip gen {g}: {fmt(r)}")

    print("-- attacks (eta corners and ramps) --")
    corners = [(1.0, 1.0), (0.0, 1.0), (1.0, 0.0), (-1.0, 1.0), (1.0, -1.0),
               (-1.0, -1.0), (-1.0, 0.0), (0.5, 0.5), (0.25, 1.0)]
    per_nu = {}
    for nu in (0.3, 0.55, 0.8):
        print(f"  nu = {nu}:")
        stats = {}
        for c5, c6 in corners:
            eta = np.array([0, 0, 0, 0, c5, c6], dtype=float)
            r = envelope(network, eq, eta=eta, nu=nu)
            stats[(c5, c6)] = r
            print(f"    eta=({c5:+.2f},{c6:+.2f}): {fmt(r)}")
        per_nu[nu] = stats

    print("\n=== placement report ===")
    atk03 = per_nu[0.3][(1.0, 1.0)]
    print(f"  N-1 worst load-bus dip {worst_n1['dip']:+.4f} Hz vs all-up@0.3 "
          f"load-bus dip {atk03['min_load_omega_hz']:+.4f} Hz; UFLS1 must sit "
          f"between (currently {d['ufls_hz'][0] - 50.0:+.4f} Hz)")
    print(f"  N-1 worst gen accel {worst_n1['acc']:.3f} Hz/s vs rocof limit "
          f"{d['rocof_hz_per_s']} Hz/s")
    print(f"  N-1 worst tie {worst_n1['tie']:.2f} vs tie limit {d['tie_limit']} "
          f"vs dec-dec@0.8 tie {per_nu[0.8][(-1.0, -1.0)]['max_tie_flow']:.2f} "
          f"vs up6@0.8 tie {per_nu[0.8][(0.0, 1.0)]['max_tie_flow']:.2f}")
    print(f"  N-1 worst over-frequency {worst_n1['peak']:+.3f} Hz vs OFGS at "
          f"+{d['over_frequency_hz'] - 50.0} Hz")

    print("\n=== real protection: event patterns ===")
    for g in (1, 2, 3, 4):
        out = simulate(network, equilibrium=eq, trip_generators=(g,))
        kinds = [f"{e.kind}@{e.location}" for e in out.events]
        print(f"  trip gen {g}: {len(out.events)} events {kinds[:5]}")
    for nu in (0.3, 0.55, 0.8):
        print(f"  nu = {nu}:")
        for c5, c6 in corners:
            eta = np.array([0, 0, 0, 0, c5, c6], dtype=float)
            out = simulate(network, eta, nu=nu, equilibrium=eq)
            kinds = {}
            for e in out.events:
                kinds[e.kind] = kinds.get(e.kind, 0) + 1
            print(f"    eta=({c5:+.2f},{c6:+.2f}): {dict(sorted(kinds.items()))}"
                  + ("  COLLAPSED" if out.collapsed else ""))


def emit(d: dict, write: str | None) -> None:
    doc = build_doc(d)
    lines = ["# Two-area test network: four identical generators, two load",
             "# centers, one monitored tie line.  Area 1 (buses 1, 2, 5)",
             "# exports to area 2 (buses 3, 4, 6) over the 5-6 tie.",
             "#",
             "# Field voltages are back-computed so the undisturbed",
             "# equilibrium sits at exactly 1 p.u. voltage everywhere;",
             "# regenerate with tools/make_preset.py after touching any",
             "# electrical parameter.",
             "",
             "[system]"]
    for k, v in doc["system"].items():
        lines.append(f"{k} = {v}")
    for b in doc["buses"]:
        lines.append("")
        lines.append("[[buses]]")
        for k, v in b.items():
            if isinstance(v, str):
                lines.append(f'{k} = "{v}"')
            elif k == "e_field":
                lines.append(f"{k} = {v:.12f}")
            else:
                lines.append(f"{k} = {v}")
    for l in doc["lines"]:
        lines.append("")
        lines.append("[[lines]]")
        for k, v in l.items():
            lines.append(f"{k} = {'true' if v is True else v}")
    lines += ["", "[thresholds]"]
    for k, v in doc["thresholds"].items():
        lines.append(f"{k} = {list(v) if isinstance(v, list) else v}")
    lines += ["", "[simulation]"]
    for k, v in doc["simulation"].items():
        lines.append(f"{k} = {v}")
    text = "\n".join(lines) + "\n"
    if write:
        Path(write).write_text(text)
        print(f"written to {write}")
    else:
        print(text)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--battery", action="store_true")
    ap.add_argument("--emit", action="store_true")
    ap.add_argument("--write", metavar="PATH")
    args = ap.parse_args()
    if args.battery:
        battery(DESIGN)
    if args.emit or args.write:
        emit(DESIGN, args.write)
    if not (args.battery or args.emit or args.write):
        battery(DESIGN)


if __name__ == "__main__":
    main()
