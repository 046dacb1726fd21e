"""Positive-sequence network description and nodal admittance tools."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

BUS_KINDS = ("boundary", "generator", "internal", "load")


class NetworkError(ValueError):
    """Invalid network data or an impossible reduction request."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str = "internal"
    area: str = "study"

    def __post_init__(self):
        if self.kind not in BUS_KINDS:
            raise NetworkError(f"bus {self.id}: unknown kind {self.kind!r}")
        if self.area not in ("study", "external"):
            raise NetworkError(f"bus {self.id}: area must be 'study' or 'external'")


@dataclass(frozen=True)
class Branch:
    """Pi-model line or transformer; ``b`` is the total charging susceptance."""

    from_bus: int
    to_bus: int
    r: float = 0.0
    x: float = 0.0
    b: float = 0.0

    @property
    def series(self) -> complex:
        z = complex(self.r, self.x)
        if z == 0:
            raise NetworkError(f"zero-impedance branch {self.from_bus}-{self.to_bus}")
        return 1.0 / z

    @property
    def shunt_half(self) -> complex:
        return 0.5j * self.b


@dataclass(frozen=True)
class Load:
    """Constant-impedance load sized at 1 p.u. voltage (MW, Mvar)."""

    bus: int
    p: float = 0.0
    q: float = 0.0


@dataclass(frozen=True)
class Shunt:
    bus: int
    g: float = 0.0   # p.u.
    b: float = 0.0   # p.u., positive = capacitive


@dataclass(frozen=True)
class Generator:
    """Classical machine: EMF behind transient reactance, machine base."""

    bus: int
    h: float                 # MW s / MVA on own rating
    rating: float            # MVA
    xd: float                # p.u. on own rating
    p: float = 0.0           # MW dispatch
    v: float = 1.0           # terminal voltage set-point
    damping: float = 0.0     # p.u. power / p.u. speed on own rating
    slack: bool = False
    name: str = ""

    def internal_admittance(self, base_mva):
        return 1.0 / complex(0.0, self.xd * base_mva / self.rating)

    def inertia_sys(self, base_mva):
        """Inertia constant on the system base (stored energy / base)."""
        return self.h * self.rating / base_mva


@dataclass
class NetworkModel:
    buses: list
    branches: list
    loads: list = field(default_factory=list)
    shunts: list = field(default_factory=list)
    generators: list = field(default_factory=list)
    coherent_groups: list = field(default_factory=list)
    boundary_buses: list = field(default_factory=list)
    base_mva: float = 100.0
    frequency_hz: float = 60.0
    name: str = "network"

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise NetworkError("duplicate bus ids")
        known = set(ids)
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise NetworkError(f"branch {br.from_bus}-{br.to_bus} references an unknown bus")
            if br.from_bus == br.to_bus:
                raise NetworkError(f"branch {br.from_bus}-{br.to_bus} is a self loop")
            br.series  # raises on zero impedance
        for item in [*self.loads, *self.shunts, *self.generators]:
            if item.bus not in known:
                raise NetworkError(f"{type(item).__name__} at unknown bus {item.bus}")

    @property
    def bus_ids(self):
        return [b.id for b in self.buses]

    def index(self):
        return {bid: i for i, bid in enumerate(self.bus_ids)}

    def bus(self, bus_id):
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    def area_buses(self, area):
        return [b.id for b in self.buses if b.area == area]

    def bus_shunts(self, include_loads=True, include_generators=False):
        """Total shunt admittance per bus id from loads, shunts and machines."""
        out = {}
        if include_loads:
            for ld in self.loads:
                out[ld.bus] = out.get(ld.bus, 0) + complex(ld.p, -ld.q) / self.base_mva
        for sh in self.shunts:
            out[sh.bus] = out.get(sh.bus, 0) + complex(sh.g, sh.b)
        if include_generators:
            for g in self.generators:
                out[g.bus] = out.get(g.bus, 0) + g.internal_admittance(self.base_mva)
        return out

    def admittance(self, include_loads=True, include_generators=False):
        return assemble_admittance(self.bus_ids, self.branches,
                                   self.bus_shunts(include_loads, include_generators))

    def subnetwork(self, bus_ids, branches=None, keep_generators=True):
        """Copy restricted to ``bus_ids``; by default keeps branches with both ends inside."""
        keep = set(bus_ids)
        if branches is None:
            branches = [br for br in self.branches if br.from_bus in keep and br.to_bus in keep]
        return NetworkModel(
            buses=[b for b in self.buses if b.id in keep],
            branches=list(branches),
            loads=[x for x in self.loads if x.bus in keep],
            shunts=[x for x in self.shunts if x.bus in keep],
            generators=[g for g in self.generators if g.bus in keep] if keep_generators else [],
            coherent_groups=[g for g in self.coherent_groups if set(g) <= keep],
            boundary_buses=[b for b in self.boundary_buses if b in keep],
            base_mva=self.base_mva,
            frequency_hz=self.frequency_hz,
            name=self.name,
        )


def assemble_admittance(bus_ids, branches, bus_shunts=None):
    """Nodal admittance matrix ordered as ``bus_ids``.

    ``branches`` holds :class:`Branch` objects or ``(from, to, y_series,
    y_shunt_per_end)`` tuples; parallel branches simply add.
    """
    idx = {bid: i for i, bid in enumerate(bus_ids)}
    y = np.zeros((len(idx), len(idx)), dtype=complex)
    for br in branches:
        if isinstance(br, Branch):
            f, t, ys, ysh = br.from_bus, br.to_bus, br.series, br.shunt_half
        else:
            f, t, ys, ysh = br
            if ys == 0 or not np.isfinite(ys):
                raise NetworkError(f"branch {f}-{t} has invalid series admittance {ys}")
        i, j = idx[f], idx[t]
        y[i, i] += ys + ysh
        y[j, j] += ys + ysh
        y[i, j] -= ys
        y[j, i] -= ys
    for bid, ysh in (bus_shunts or {}).items():
        y[idx[bid], idx[bid]] += ysh
    return y


def kron_reduce(y, keep):
    """Schur complement of ``y`` onto the index list ``keep`` (order preserved)."""
    y = np.asarray(y, dtype=complex)
    keep = list(keep)
    elim = [i for i in range(y.shape[0]) if i not in set(keep)]
    if not elim:
        return y[np.ix_(keep, keep)].copy()
    y_ee = y[np.ix_(elim, elim)]
    if np.linalg.cond(y_ee) > 1e14:
        raise NetworkError("eliminated block of the admittance matrix is singular")
    y_ke = y[np.ix_(keep, elim)]
    y_ek = y[np.ix_(elim, keep)]
    return y[np.ix_(keep, keep)] - y_ke @ np.linalg.solve(y_ee, y_ek)


def aggregate_coherent(network: NetworkModel, groups, new_ids=None):
    """Merge each coherent generator group into one machine at a new bus.

    Ratings and system-base inertia add, internal admittances combine in
    parallel and every branch or load touching a group bus is moved to the
    aggregate bus. Branches internal to a group vanish.
    """
    gen_buses = {g.bus for g in network.generators}
    seen = set()
    for grp in groups:
        if not grp:
            raise NetworkError("empty coherent group")
        for bid in grp:
            if bid in seen:
                raise NetworkError(f"generator bus {bid} appears in more than one group")
            if bid not in gen_buses:
                raise NetworkError(f"bus {bid} in a coherent group carries no generator")
            seen.add(bid)
    next_id = max(network.bus_ids) + 1
    new_ids = list(new_ids) if new_ids is not None else [next_id + k for k in range(len(groups))]
    remap = {}
    machines = [g for g in network.generators if g.bus not in seen]
    buses = [b for b in network.buses if b.id not in seen]
    base = network.base_mva
    for grp, nid in zip(groups, new_ids):
        members = [g for g in network.generators if g.bus in set(grp)]
        rating = sum(g.rating for g in members)
        y_int = sum(g.internal_admittance(base) for g in members)
        energy = sum(g.h * g.rating for g in members)
        machines.append(Generator(
            bus=nid,
            h=energy / rating,
            rating=rating,
            xd=(1.0 / y_int).imag * rating / base,
            p=sum(g.p for g in members),
            v=sum(g.v * g.rating for g in members) / rating,
            damping=sum(g.damping * g.rating for g in members) / rating,
            slack=any(g.slack for g in members),
            name="+".join(g.name or f"G{g.bus}" for g in members),
        ))
        area = network.bus(grp[0]).area
        buses.append(Bus(nid, "generator", area))
        for bid in grp:
            remap[bid] = nid
    branches = []
    for br in network.branches:
        f, t = remap.get(br.from_bus, br.from_bus), remap.get(br.to_bus, br.to_bus)
        if f != t:
            branches.append(replace(br, from_bus=f, to_bus=t))
    return NetworkModel(
        buses=buses,
        branches=branches,
        loads=[replace(x, bus=remap.get(x.bus, x.bus)) for x in network.loads],
        shunts=[replace(x, bus=remap.get(x.bus, x.bus)) for x in network.shunts],
        generators=machines,
        coherent_groups=[],
        boundary_buses=list(network.boundary_buses),
        base_mva=network.base_mva,
        frequency_hz=network.frequency_hz,
        name=network.name + "-aggregated",
    )


def network_from_dict(data):
    try:
        buses = [Bus(int(b["id"]), b.get("kind", "internal"), b.get("area", "study"))
                 for b in data["buses"]]
        branches = [Branch(int(b["from"]), int(b["to"]), float(b.get("r", 0.0)),
                           float(b.get("x", 0.0)), float(b.get("b", 0.0)))
                    for b in data.get("branches", [])]
        loads = [Load(int(x["bus"]), float(x.get("p", 0.0)), float(x.get("q", 0.0)))
                 for x in data.get("loads", [])]
        shunts = [Shunt(int(x["bus"]), float(x.get("g", 0.0)), float(x.get("b", 0.0)))
                  for x in data.get("shunts", [])]
        gens = [Generator(int(g["bus"]), float(g["h"]), float(g["rating"]), float(g["xd"]),
                          float(g.get("p", 0.0)), float(g.get("v", 1.0)),
                          float(g.get("damping", 0.0)), bool(g.get("slack", False)),
                          str(g.get("name", "")))
                for g in data.get("generators", [])]
    except KeyError as exc:
        raise NetworkError(f"network data missing field {exc}") from None
    return NetworkModel(
        buses=buses,
        branches=branches,
        loads=loads,
        shunts=shunts,
        generators=gens,
        coherent_groups=[[int(b) for b in grp] for grp in data.get("coherent_groups", [])],
        boundary_buses=[int(b) for b in data.get("boundary_buses", [])],
        base_mva=float(data.get("base_mva", 100.0)),
        frequency_hz=float(data.get("frequency_hz", 60.0)),
        name=str(data.get("name", "network")),
    )


def load_network(path):
    path = Path(path)
    with path.open() as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise NetworkError(f"{path}: expected a mapping at top level")
    return network_from_dict(data)
