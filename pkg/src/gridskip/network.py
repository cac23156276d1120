"""Network model: buses, lines, machine parameters, susceptance bookkeeping.

A network couples N generator buses and L load buses through a lossless
susceptance matrix.  Generator buses carry a dispatch setpoint, inertia,
a governor droop gain and a shedding indicator; load buses carry demand.
Both kinds participate in the voltage dynamics, so field and reactance
parameters exist for every bus.

Loading is TOML based.  ``load_network("ktas")`` resolves the bundled
two-area preset; any other string is treated as a path.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_PRESET_DIR = Path(__file__).parent / "presets"

#: power balance |sum P_gen - sum P_load| must stay below this for an
#: equilibrium of the lossless model to exist at all
BALANCE_TOL = 1e-9


class ConfigError(ValueError):
    """Raised when a network or campaign file fails validation."""


@dataclass
class Line:
    """Transmission line between two bus ids (unordered pair)."""

    from_bus: int
    to_bus: int
    susceptance: float
    monitored: bool = False
    flow_limit: float = math.inf

    def label(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass
class NetworkModel:
    """Immutable container for one grid instance.

    Internal arrays are ordered generators first, then load buses;
    ``bus_ids`` maps array position to the id used in files and reports.
    All arrays are read-only views; use :func:`dataclasses.replace` for
    variants (e.g. a different vulnerability fraction).
    """

    bus_ids: tuple[int, ...]
    areas: tuple[int, ...]
    n_gen: int
    nu: float
    f_nominal: float
    damping: float
    deadband: float  # rad/s, half width of the governor dead zone

    p_gen: np.ndarray
    p_max: np.ndarray
    p_load: np.ndarray
    inertia: np.ndarray
    droop: np.ndarray
    e_field: np.ndarray
    s_volt: np.ndarray
    x_volt: np.ndarray
    k_avr: np.ndarray
    e_ref: np.ndarray

    lines: tuple[Line, ...]
    b0: np.ndarray  # base susceptance matrix, all lines in service

    defaults: dict = field(default_factory=dict, repr=False)

    @property
    def n_bus(self) -> int:
        return len(self.bus_ids)

    @property
    def n_line(self) -> int:
        return len(self.lines)

    def bus_index(self, bus_id: int) -> int:
        try:
            return self.bus_ids.index(bus_id)
        except ValueError:
            raise ConfigError(f"unknown bus id {bus_id}") from None

    def area_indices(self, area: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.areas) == area)

    def line_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(i, j, b, monitored, limit) arrays in internal bus indices."""
        li = np.array([self.bus_index(l.from_bus) for l in self.lines], dtype=np.int64)
        lj = np.array([self.bus_index(l.to_bus) for l in self.lines], dtype=np.int64)
        lb = np.array([l.susceptance for l in self.lines], dtype=np.float64)
        lm = np.array([l.monitored for l in self.lines], dtype=np.bool_)
        ll = np.array([l.flow_limit for l in self.lines], dtype=np.float64)
        return li, lj, lb, lm, ll

    def with_nu(self, nu: float) -> "NetworkModel":
        if not 0.0 <= nu <= 1.0:
            raise ConfigError(f"vulnerability fraction must lie in [0, 1], got {nu}")
        return dataclasses.replace(self, nu=float(nu))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def build_susceptance(n_bus: int, line_i: np.ndarray, line_j: np.ndarray,
                      line_b: np.ndarray, line_on: np.ndarray) -> np.ndarray:
    """Assemble the susceptance matrix for a given line service state.

    Off-diagonal entries are nonnegative (``+b`` for each in-service
    line), diagonals collect ``-b`` per incident in-service line, so
    every row sums to zero and the matrix stays symmetric.  A line out
    of service contributes nothing, including to the diagonals.
    """
    b = np.zeros((n_bus, n_bus), dtype=np.float64)
    for k in range(len(line_b)):
        if line_on[k] == 0:
            continue
        i, j, bk = int(line_i[k]), int(line_j[k]), float(line_b[k])
        b[i, j] += bk
        b[j, i] += bk
        b[i, i] -= bk
        b[j, j] -= bk
    return b


def effective_susceptance(network: NetworkModel, line_on: np.ndarray) -> np.ndarray:
    """Susceptance matrix with disconnected lines removed.

    ``line_on`` holds one service flag per line in network order.  The
    returned matrix zeroes both off-diagonal entries of each tripped
    line and removes its contribution from both endpoint diagonals.
    """
    line_on = np.asarray(line_on)
    if line_on.shape != (network.n_line,):
        raise ConfigError(
            f"line state vector has shape {line_on.shape}, expected ({network.n_line},)")
    li, lj, lb, _, _ = network.line_arrays()
    return build_susceptance(network.n_bus, li, lj, lb, line_on.astype(np.float64))


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _get(tbl: dict, key: str, default=None, *, where: str = ""):
    if key in tbl:
        return tbl[key]
    if default is None:
        raise ConfigError(f"missing required key '{key}'" + (f" in {where}" if where else ""))
    return default


def network_from_dict(doc: dict) -> NetworkModel:
    """Build and validate a NetworkModel from parsed TOML data."""
    system = doc.get("system", {})
    f_nom = float(_get(system, "frequency_hz", 50.0))
    damping = float(_get(system, "damping", where="[system]"))
    deadband_hz = float(system.get("deadband_hz", 0.05))
    nu = float(system.get("vulnerability", 0.8))
    _require(f_nom > 0, "[system] frequency_hz must be positive")
    _require(damping >= 0, "[system] damping must be nonnegative")
    _require(deadband_hz >= 0, "[system] deadband_hz must be nonnegative")
    _require(0.0 <= nu <= 1.0, "[system] vulnerability must lie in [0, 1]")

    buses = doc.get("buses", [])
    _require(len(buses) >= 1, "network needs at least one [[buses]] entry")
    gens = [b for b in buses if _get(b, "kind", where="[[buses]]") == "generator"]
    loads = [b for b in buses if b.get("kind") == "load"]
    _require(len(gens) + len(loads) == len(buses),
             "bus kind must be 'generator' or 'load'")
    _require(len(gens) >= 1, "network needs at least one generator bus")
    ordered = gens + loads

    ids = [int(_get(b, "id", where="[[buses]]")) for b in ordered]
    _require(len(set(ids)) == len(ids), "bus ids must be unique")

    n = len(ordered)
    n_gen = len(gens)
    areas = []
    p_gen = np.zeros(n)
    p_max = np.zeros(n)
    p_load = np.zeros(n)
    inertia = np.zeros(n)
    droop = np.zeros(n)
    e_field = np.zeros(n)
    s_volt = np.zeros(n)
    x_volt = np.zeros(n)
    k_avr = np.zeros(n)
    e_ref = np.ones(n)

    for pos, b in enumerate(ordered):
        where = f"bus {b.get('id')}"
        areas.append(int(b.get("area", 1)))
        p_load[pos] = float(b.get("p_load", 0.0))
        e_field[pos] = float(_get(b, "e_field", where=where))
        s_volt[pos] = float(_get(b, "s_volt", where=where))
        x_volt[pos] = float(b.get("x_volt", 0.0))
        k_avr[pos] = float(b.get("k_avr", 0.0))
        e_ref[pos] = float(b.get("e_ref", 1.0))
        _require(p_load[pos] >= 0, f"{where}: p_load must be nonnegative")
        _require(s_volt[pos] > 0, f"{where}: s_volt must be positive")
        if pos < n_gen:
            p_gen[pos] = float(_get(b, "p_gen", where=where))
            p_max[pos] = float(b.get("p_max", p_gen[pos]))
            inertia[pos] = float(_get(b, "inertia", where=where))
            droop[pos] = float(b.get("droop", 0.0))
            _require(p_gen[pos] >= 0, f"{where}: p_gen must be nonnegative")
            _require(p_max[pos] >= p_gen[pos], f"{where}: p_max must be >= p_gen")
            _require(inertia[pos] > 0, f"{where}: inertia must be positive")
            _require(droop[pos] >= 0, f"{where}: droop must be nonnegative")
        else:
            for key in ("p_gen", "p_max", "inertia", "droop"):
                _require(key not in b, f"{where}: '{key}' is a generator parameter")

    imbalance = float(p_gen.sum() - p_load.sum())
    _require(abs(imbalance) <= BALANCE_TOL,
             f"total generation and load must balance in the lossless model "
             f"(imbalance {imbalance:+.3e})")

    id_to_pos = {bid: pos for pos, bid in enumerate(ids)}
    lines = []
    seen_pairs = set()
    for ltbl in doc.get("lines", []):
        fb = int(_get(ltbl, "from", where="[[lines]]"))
        tb = int(_get(ltbl, "to", where="[[lines]]"))
        _require(fb in id_to_pos, f"line {fb}-{tb}: unknown bus id {fb}")
        _require(tb in id_to_pos, f"line {fb}-{tb}: unknown bus id {tb}")
        _require(fb != tb, f"line {fb}-{tb}: endpoints must differ")
        pair = frozenset((fb, tb))
        _require(pair not in seen_pairs, f"duplicate line {fb}-{tb}")
        seen_pairs.add(pair)
        b = float(_get(ltbl, "susceptance", where=f"line {fb}-{tb}"))
        _require(b > 0, f"line {fb}-{tb}: susceptance must be positive")
        monitored = bool(ltbl.get("monitored", False))
        limit = ltbl.get("flow_limit")
        if monitored:
            _require(limit is not None, f"line {fb}-{tb}: monitored line needs flow_limit")
            limit = float(limit)
            _require(limit > 0, f"line {fb}-{tb}: flow_limit must be positive")
        else:
            limit = math.inf if limit is None else float(limit)
        lines.append(Line(fb, tb, b, monitored, limit))
    _require(len(lines) >= 1 or n == 1, "network with several buses needs [[lines]] entries")

    li = np.array([id_to_pos[l.from_bus] for l in lines], dtype=np.int64)
    lj = np.array([id_to_pos[l.to_bus] for l in lines], dtype=np.int64)
    lb = np.array([l.susceptance for l in lines], dtype=np.float64)
    b0 = build_susceptance(n, li, lj, lb, np.ones(len(lines)))

    defaults = {
        "thresholds": dict(doc.get("thresholds", {})),
        "simulation": dict(doc.get("simulation", {})),
    }

    net = NetworkModel(
        bus_ids=tuple(ids),
        areas=tuple(areas),
        n_gen=n_gen,
        nu=nu,
        f_nominal=f_nom,
        damping=damping,
        deadband=2.0 * math.pi * deadband_hz,
        p_gen=_freeze(p_gen),
        p_max=_freeze(p_max),
        p_load=_freeze(p_load),
        inertia=_freeze(inertia),
        droop=_freeze(droop),
        e_field=_freeze(e_field),
        s_volt=_freeze(s_volt),
        x_volt=_freeze(x_volt),
        k_avr=_freeze(k_avr),
        e_ref=_freeze(e_ref),
        lines=tuple(lines),
        b0=_freeze(b0),
        defaults=defaults,
    )
    return net


def preset_path(name: str) -> Path:
    return _PRESET_DIR / f"{name}.toml"


def load_network(source: str | Path) -> NetworkModel:
    """Load a network from a TOML file or bundled preset name."""
    path = Path(source)
    if not path.suffix and preset_path(str(source)).exists():
        path = preset_path(str(source))
    if not path.exists():
        raise ConfigError(f"network file not found: {source}")
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    return network_from_dict(doc)
