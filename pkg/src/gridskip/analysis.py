"""Campaign statistics: failure modes, conditional laws, area behaviour.

Consumes retained chain states plus their fully simulated outcomes and
produces the quantities a study reports:

* emergency response rates per mechanism and location, where shedding
  stages count how many fired and one-shot mechanisms count 0 or 1,
* fractions of failures involving each mechanism at least once,
* conditional distributions of the attack coordinates against the
  unconditional reference law (histograms on a log-magnitude grid and
  Kolmogorov-Smirnov distances),
* the 2x2 table of joint area demand movement (each area classified as
  decreased or increased; an exactly-zero change counts as increased),
* a one-line regime label from the vulnerability fraction.

Chain output is persisted as plain CSV so campaigns can be analysed
later or elsewhere without rerunning any simulation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.stats

from .attacks import DensityParams
from .network import NetworkModel
from .protection import KIND_NAMES, ErEvent
from .sampler import ChainResult

EVENT_KINDS = tuple(KIND_NAMES.values())

#: vulnerability fractions at or above these switch the regime label
REGIME_INTERMEDIATE = 0.45
REGIME_VULNERABLE = 0.65


def regime_label(nu: float) -> str:
    if nu < REGIME_INTERMEDIATE:
        return "secure"
    if nu < REGIME_VULNERABLE:
        return "intermediate"
    return "vulnerable"


@dataclass
class ChainData:
    """Chain states and outcomes, decoupled from the sampler objects.

    This is what the CSV round-trips; everything analysis needs and
    nothing it does not (full final states stay with the sampler).
    """

    samples: np.ndarray          # (n, n_bus) raw attack vectors
    eta: np.ndarray              # (n, n_bus) effective scalings
    accepted: np.ndarray         # (n,) bool
    indicator_calls: np.ndarray  # (n,)
    skip_lengths: np.ndarray     # (n,)
    log_dens: np.ndarray         # (n,)
    events: tuple[tuple[ErEvent, ...], ...]
    collapsed: np.ndarray        # (n,) bool
    aborted: np.ndarray          # (n,) bool
    nu: float

    @property
    def n(self) -> int:
        return self.samples.shape[0]


def chain_data(result: ChainResult) -> ChainData:
    return ChainData(
        samples=result.raw.samples,
        eta=result.eta,
        accepted=result.raw.accepted,
        indicator_calls=result.raw.indicator_calls,
        skip_lengths=result.raw.skip_lengths,
        log_dens=result.raw.log_dens,
        events=tuple(o.events for o in result.outcomes),
        collapsed=np.array([o.collapsed for o in result.outcomes], dtype=bool),
        aborted=np.array([o.aborted for o in result.outcomes], dtype=bool),
        nu=result.nu,
    )


def merge_chains(parts: list[ChainData]) -> ChainData:
    """Pool several chains of the same campaign into one dataset."""
    if not parts:
        raise ValueError("no chains to merge")
    if len({p.nu for p in parts}) != 1:
        raise ValueError("chains disagree on the vulnerability fraction")
    ev: list[tuple[ErEvent, ...]] = []
    for p in parts:
        ev.extend(p.events)
    return ChainData(
        samples=np.concatenate([p.samples for p in parts]),
        eta=np.concatenate([p.eta for p in parts]),
        accepted=np.concatenate([p.accepted for p in parts]),
        indicator_calls=np.concatenate([p.indicator_calls for p in parts]),
        skip_lengths=np.concatenate([p.skip_lengths for p in parts]),
        log_dens=np.concatenate([p.log_dens for p in parts]),
        events=tuple(ev),
        collapsed=np.concatenate([p.collapsed for p in parts]),
        aborted=np.concatenate([p.aborted for p in parts]),
        nu=parts[0].nu,
    )


@dataclass
class ErRates:
    """Activation statistics over one conditional sample set."""

    per_location: dict    # (kind, location) -> mean activations per sample
    mode_fraction: dict   # kind -> fraction of samples with >= 1 such event
    any_event: float
    collapsed: float
    aborted: float
    n: int

    def rows(self) -> list[tuple]:
        out = [("any", "*", self.any_event),
               ("collapsed", "*", self.collapsed),
               ("aborted", "*", self.aborted)]
        for kind in EVENT_KINDS:
            out.append((kind, "*", self.mode_fraction[kind]))
        for (kind, loc), rate in sorted(self.per_location.items()):
            out.append((kind, loc, rate))
        return out


def er_rates(data: ChainData) -> ErRates:
    n = data.n
    per_loc: dict = {}
    mode_hits = {kind: 0 for kind in EVENT_KINDS}
    any_hits = 0
    for evs in data.events:
        kinds_seen = set()
        for e in evs:
            per_loc[(e.kind, e.location)] = per_loc.get((e.kind, e.location), 0) + 1
            kinds_seen.add(e.kind)
        for kind in kinds_seen:
            mode_hits[kind] += 1
        if evs:
            any_hits += 1
    per_loc = {k: v / n for k, v in per_loc.items()}
    return ErRates(
        per_location=per_loc,
        mode_fraction={k: v / n for k, v in mode_hits.items()},
        any_event=any_hits / n,
        collapsed=float(np.mean(data.collapsed)) if n else 0.0,
        aborted=float(np.mean(data.aborted)) if n else 0.0,
        n=n,
    )


def signed_reference_cdf(mu: float, sigma: float):
    """CDF of a symmetric-sign lognormal-magnitude scalar coordinate."""

    def cdf(x):
        x = np.asarray(x, dtype=np.float64)
        out = np.empty_like(x)
        neg = x < 0
        out[neg] = 0.5 * scipy.stats.lognorm.sf(-x[neg], s=sigma, scale=math.exp(mu))
        out[~neg] = 0.5 + 0.5 * scipy.stats.lognorm.cdf(x[~neg], s=sigma,
                                                        scale=math.exp(mu))
        return out

    return cdf


def ks_table(data: ChainData, params: DensityParams,
             bus_ids: tuple[int, ...]) -> dict:
    """Per-bus KS distance between conditional samples and the reference.

    Conditioning reshapes the law only at coordinates the dynamics can
    feel; buses without vulnerable demand should come out near zero.
    """
    out = {}
    for pos, bus in enumerate(bus_ids):
        cdf = signed_reference_cdf(float(params.mu[pos]), float(params.sigma[pos]))
        stat, pval = scipy.stats.kstest(data.samples[:, pos], cdf)
        out[bus] = (float(stat), float(pval))
    return out


def histogram_table(data: ChainData, params: DensityParams,
                    bus_ids: tuple[int, ...], n_bins: int = 40,
                    span_sigmas: float = 4.0) -> list[tuple]:
    """Log-magnitude histograms of the conditional law per bus.

    Rows are (bus, log_lo, log_hi, conditional_mass, reference_mass);
    the grid covers mu +- span_sigmas * sigma in log magnitude, with
    the reference mass taken from the lognormal law analytically.  Sign
    information is folded out here; the KS table keeps it.
    """
    rows = []
    for pos, bus in enumerate(bus_ids):
        mu = float(params.mu[pos])
        sg = float(params.sigma[pos])
        edges = np.linspace(mu - span_sigmas * sg, mu + span_sigmas * sg,
                            n_bins + 1)
        with np.errstate(divide="ignore"):
            logmag = np.log(np.abs(data.samples[:, pos]))
        counts, _ = np.histogram(logmag, bins=edges)
        cond = counts / max(1, data.n)
        z = (edges - mu) / sg
        ref_cdf = scipy.stats.norm.cdf(z)
        ref = np.diff(ref_cdf)
        for b in range(n_bins):
            rows.append((bus, float(edges[b]), float(edges[b + 1]),
                         float(cond[b]), float(ref[b])))
    return rows


def area_demand_change(network: NetworkModel, data: ChainData) -> np.ndarray:
    """Realised demand shift per (sample, area), p.u."""
    shift = data.nu * network.p_load * data.eta  # (n, n_bus)
    areas = sorted(set(network.areas))
    cols = [shift[:, np.asarray(network.areas) == a].sum(axis=1) for a in areas]
    return np.column_stack(cols)


def area_table(network: NetworkModel, data: ChainData) -> dict:
    """Joint movement of the two areas' demand among the failures.

    Keys are '<a1>_<a2>' with each side 'dec' or 'inc'; a change of
    exactly zero counts as 'inc' so the four cells partition all
    samples.
    """
    change = area_demand_change(network, data)
    if change.shape[1] != 2:
        raise ValueError("area table needs exactly two areas")
    a1 = np.where(change[:, 0] < 0, "dec", "inc")
    a2 = np.where(change[:, 1] < 0, "dec", "inc")
    out = {}
    for s1 in ("dec", "inc"):
        for s2 in ("dec", "inc"):
            out[f"{s1}_{s2}"] = float(np.mean((a1 == s1) & (a2 == s2)))
    return out


@dataclass
class CampaignSummary:
    """Digest of one conditional sampling campaign."""

    nu: float
    regime: str
    n_samples: int
    acceptance_rate: float
    rates: ErRates
    area: dict
    ks: dict

    def to_dict(self) -> dict:
        return {
            "nu": self.nu,
            "regime": self.regime,
            "n_samples": self.n_samples,
            "acceptance_rate": self.acceptance_rate,
            "any_event": self.rates.any_event,
            "collapsed": self.rates.collapsed,
            "aborted": self.rates.aborted,
            "mode_fraction": dict(self.rates.mode_fraction),
            "area_table": dict(self.area),
            "ks_distance": {str(b): s for b, (s, _) in self.ks.items()},
        }


def summarize(network: NetworkModel, data: ChainData,
              params: DensityParams) -> CampaignSummary:
    return CampaignSummary(
        nu=data.nu,
        regime=regime_label(data.nu),
        n_samples=data.n,
        acceptance_rate=float(np.mean(data.accepted)) if data.n else 0.0,
        rates=er_rates(data),
        area=area_table(network, data),
        ks=ks_table(data, params, network.bus_ids),
    )


# ---------------------------------------------------------------- CSV I/O

def _events_to_str(events: tuple[ErEvent, ...]) -> str:
    return ";".join(f"{e.kind}@{e.location}:{e.stage}:{e.time!r}" for e in events)


def _events_from_str(s: str) -> tuple[ErEvent, ...]:
    if not s:
        return ()
    out = []
    for tok in s.split(";"):
        kind, rest = tok.split("@", 1)
        loc, stage, t = rest.rsplit(":", 2)
        out.append(ErEvent(time=float(t), kind=kind, location=loc,
                           stage=int(stage)))
    return tuple(out)


def write_chain_csv(path: str | Path, network: NetworkModel, data: ChainData) -> None:
    """One row per retained state; floats round-trip exactly via repr."""
    path = Path(path)
    cols = (["index", "accepted", "indicator_calls", "skip_length", "log_dens",
             "nu"]
            + [f"u_{b}" for b in network.bus_ids]
            + [f"eta_{b}" for b in network.bus_ids]
            + ["collapsed", "aborted", "events"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(data.n):
            row = [i, int(data.accepted[i]), int(data.indicator_calls[i]),
                   int(data.skip_lengths[i]), repr(float(data.log_dens[i])),
                   repr(float(data.nu))]
            row += [repr(float(v)) for v in data.samples[i]]
            row += [repr(float(v)) for v in data.eta[i]]
            row += [int(data.collapsed[i]), int(data.aborted[i]),
                    _events_to_str(data.events[i])]
            w.writerow(row)


def read_chain_csv(path: str | Path) -> ChainData:
    path = Path(path)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        u_cols = [i for i, c in enumerate(header) if c.startswith("u_")]
        eta_cols = [i for i, c in enumerate(header) if c.startswith("eta_")]
        idx = {c: i for i, c in enumerate(header)}
        samples, eta, accepted, calls, lengths, logd = [], [], [], [], [], []
        events, collapsed, aborted, nus = [], [], [], []
        for row in r:
            accepted.append(bool(int(row[idx["accepted"]])))
            calls.append(int(row[idx["indicator_calls"]]))
            lengths.append(int(row[idx["skip_length"]]))
            logd.append(float(row[idx["log_dens"]]))
            nus.append(float(row[idx["nu"]]))
            samples.append([float(row[i]) for i in u_cols])
            eta.append([float(row[i]) for i in eta_cols])
            collapsed.append(bool(int(row[idx["collapsed"]])))
            aborted.append(bool(int(row[idx["aborted"]])))
            events.append(_events_from_str(row[idx["events"]]))
    if not samples:
        raise ValueError(f"{path}: empty chain file")
    return ChainData(
        samples=np.array(samples), eta=np.array(eta),
        accepted=np.array(accepted, dtype=bool),
        indicator_calls=np.array(calls, dtype=np.int64),
        skip_lengths=np.array(lengths, dtype=np.int64),
        log_dens=np.array(logd),
        events=tuple(events),
        collapsed=np.array(collapsed, dtype=bool),
        aborted=np.array(aborted, dtype=bool),
        nu=nus[0],
    )


def write_er_rates_csv(path: str | Path, rates: ErRates) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "location", "rate"])
        for kind, loc, rate in rates.rows():
            w.writerow([kind, loc, repr(float(rate))])


def write_histograms_csv(path: str | Path, rows: list[tuple]) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus", "log_lo", "log_hi", "conditional_mass",
                    "reference_mass"])
        for bus, lo, hi, cond, ref in rows:
            w.writerow([bus, repr(lo), repr(hi), repr(cond), repr(ref)])


def write_area_csv(path: str | Path, table: dict) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["area1", "area2", "probability"])
        for key, p in sorted(table.items()):
            s1, s2 = key.split("_")
            w.writerow([s1, s2, repr(float(p))])


def write_summary_json(path: str | Path, summary: CampaignSummary,
                       diagnostics: dict | None = None) -> None:
    doc = summary.to_dict()
    if diagnostics is not None:
        doc["diagnostics"] = diagnostics
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
