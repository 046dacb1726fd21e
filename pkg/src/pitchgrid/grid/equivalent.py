"""Reduced external grid: TSA (aggregated machines + Kron blocks) plus FDNE.

The external area is cut at the boundary buses. Its low-frequency part is
represented by coherent-machine aggregation and Kron reduction onto
``[boundary buses, machine terminals]``; the passive boundary admittance is
represented by discrete FDNE recursions fitted on an EMT sweep.

Sign convention: ``I_b`` is the current flowing from each boundary bus into
the external area.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fdne import EmtSolver, FdneModel, FdneState, external_elements, fdne_fit_auto, multitone
from .network import (Generator, NetworkError, NetworkModel, aggregate_coherent, kron_reduce)


@dataclass
class ReducedGrid:
    boundary: list
    machines: list                 # Generator objects at terminal node ids
    y_bb: np.ndarray
    y_be: np.ndarray
    y_eb: np.ndarray
    y_ee: np.ndarray               # includes machine internal admittances
    fdne: dict = field(default_factory=dict)   # (row, col) port index -> FdneModel
    base_mva: float = 100.0
    frequency_hz: float = 60.0
    dt: float = 1e-3

    def __post_init__(self):
        nb, ne = len(self.boundary), len(self.machines)
        shapes = {"y_bb": (nb, nb), "y_be": (nb, ne), "y_eb": (ne, nb), "y_ee": (ne, ne)}
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=complex).reshape(shape)
            setattr(self, name, arr)
        if ne and np.linalg.cond(self.y_ee) > 1e14:
            raise NetworkError("machine block Y_ee of the reduced grid is singular")
        for key, model in self.fdne.items():
            poles = model.poles()
            if np.any(np.abs(poles) >= 1.0):
                raise NetworkError(f"FDNE {key} has an unstable root")

    @property
    def y_int(self):
        return np.array([g.internal_admittance(self.base_mva) for g in self.machines])

    @property
    def fit_errors(self):
        return {k: m.fit_error for k, m in self.fdne.items()}

    def source_transfer(self):
        """Matrix ``M`` with boundary source current ``I_src = M I_e``."""
        if not self.machines:
            return np.zeros((len(self.boundary), 0), complex)
        return self.y_be @ np.linalg.inv(self.y_ee)

    def static_admittance(self):
        """Boundary admittance with machine EMFs shorted (Kron of the TSA blocks)."""
        if not self.machines:
            return self.y_bb.copy()
        return self.y_bb - self.y_be @ np.linalg.solve(self.y_ee, self.y_eb)

    def passive_blocks(self):
        """Full Kron matrix over ``boundary + terminals`` without machine admittances."""
        y_ee = self.y_ee - np.diag(self.y_int) if self.machines else self.y_ee
        return np.block([[self.y_bb, self.y_be], [self.y_eb, y_ee]])


def tsa_step(reduced: ReducedGrid, v_b, i_e):
    """Boundary current from boundary voltages and machine Norton injections."""
    v_b = np.atleast_1d(np.asarray(v_b, complex))
    i_e = np.atleast_1d(np.asarray(i_e, complex))
    if not reduced.machines:
        return reduced.y_bb @ v_b
    v_e = np.linalg.solve(reduced.y_ee, i_e - reduced.y_eb @ v_b)
    return reduced.y_bb @ v_b + reduced.y_be @ v_e


def machine_terminal_voltages(reduced: ReducedGrid, v_b, i_e):
    v_b = np.atleast_1d(np.asarray(v_b, complex))
    return np.linalg.solve(reduced.y_ee, np.asarray(i_e, complex) - reduced.y_eb @ v_b)


# --------------------------------------------------------------------------- partition

def _check_partition(network: NetworkModel):
    ext = set(network.area_buses("external"))
    bnd = list(network.boundary_buses)
    if not bnd:
        raise NetworkError("no boundary buses given")
    for b in bnd:
        if b in ext:
            raise NetworkError(f"boundary bus {b} must belong to the study area")
    for br in network.branches:
        ends = {br.from_bus, br.to_bus}
        if len(ends & ext) == 1 and not (ends - ext) <= set(bnd):
            raise NetworkError(f"branch {br.from_bus}-{br.to_bus} crosses the cut outside the boundary")
    return ext, bnd


def external_network(network: NetworkModel):
    """External area plus the boundary buses, without boundary-bus loads."""
    ext, bnd = _check_partition(network)
    keep = ext | set(bnd)
    branches = [br for br in network.branches if br.from_bus in ext or br.to_bus in ext]
    sub = network.subnetwork(keep, branches=branches)
    sub.loads = [x for x in sub.loads if x.bus in ext]
    sub.shunts = [x for x in sub.shunts if x.bus in ext]
    sub.generators = [g for g in sub.generators if g.bus in ext]
    sub.coherent_groups = [g for g in network.coherent_groups if set(g) <= ext]
    return sub


def study_network(network: NetworkModel):
    """Study area with the external area cut away at the boundary."""
    ext, _ = _check_partition(network)
    keep = [b for b in network.bus_ids if b not in ext]
    sub = network.subnetwork(keep)
    sub.coherent_groups = []
    return sub


# --------------------------------------------------------------------------- build

def sweep_ports(ext: NetworkModel, ports, h, f_min=0.1, f_max=2000.0, n_tones=60,
                duration=None, seed=0):
    """Drive each port in turn with a multi-tone (others shorted).

    Returns ``(v, currents)`` where ``currents[k]`` has one column per port.
    """
    els, idx = external_elements(ext)
    solver = EmtSolver(len(idx), els, [idx[b] for b in ports], h,
                       prewarp_hz=ext.frequency_hz)
    n_steps = int(round((duration or 2.0 / f_min) / h))
    v, _ = multitone(n_steps, h, f_min, f_max, n_tones, seed)
    currents = []
    for k in range(len(ports)):
        drive = np.zeros((n_steps, len(ports)))
        drive[:, k] = v
        currents.append(solver.run(drive))
    return v, currents


def reduce_external(network: NetworkModel, groups=None, dt=1e-3, fdne_order=8,
                    max_order=20, tol=0.01, fit_fdne=True, sweep=None):
    """Build the :class:`ReducedGrid` of the external area of ``network``."""
    ext = external_network(network)
    bnd = list(network.boundary_buses)
    groups = ext.coherent_groups if groups is None else [list(g) for g in groups]
    ext_gens = {g.bus for g in ext.generators}
    for grp in groups:
        if not set(grp) <= ext_gens:
            raise NetworkError(f"coherent group {grp} contains non-external generator buses")
    first_new = max(network.bus_ids) + 1
    new_ids = [first_new + k for k in range(len(groups))]
    agg = aggregate_coherent(ext, groups, new_ids) if groups else ext
    terminals = [g.bus for g in agg.generators]
    if set(terminals) & set(bnd):
        raise NetworkError("an external machine sits on a boundary bus")
    y = agg.admittance(include_loads=True, include_generators=True)
    idx = agg.index()
    keep = [idx[b] for b in bnd] + [idx[t] for t in terminals]
    y_red = kron_reduce(y, keep)
    nb = len(bnd)
    fdne = {}
    if fit_fdne:
        v, currents = sweep_ports(ext, bnd, dt, **(sweep or {}))
        for k in range(nb):
            for j in range(nb):
                fdne[(j, k)] = fdne_fit_auto(v, currents[k][:, j], order=fdne_order,
                                             max_order=max_order, tol=tol, dt=dt)
    return ReducedGrid(
        boundary=bnd,
        machines=list(agg.generators),
        y_bb=y_red[:nb, :nb], y_be=y_red[:nb, nb:], y_eb=y_red[nb:, :nb], y_ee=y_red[nb:, nb:],
        fdne=fdne, base_mva=network.base_mva, frequency_hz=network.frequency_hz, dt=dt,
    )


# --------------------------------------------------------------------------- runtime

class FdneBank:
    """Port-matrix of frequency-shifted FDNE recursions acting on phasors."""

    def __init__(self, reduced: ReducedGrid):
        nb = len(reduced.boundary)
        self.n = nb
        w0 = 2.0 * math.pi * reduced.frequency_hz
        self.states = {key: FdneState.from_model(m, omega0=w0) for key, m in reduced.fdne.items()}
        self._hist = None
        self.b0 = np.zeros((nb, nb), complex)
        for (j, k), st in self.states.items():
            self.b0[j, k] = st.b0

    def dc_admittance(self):
        y = np.zeros((self.n, self.n), complex)
        for (j, k), st in self.states.items():
            y[j, k] = (st.b0 + st.b.sum()) / (1.0 + st.a.sum())
        return y

    def init_steady(self, v_b):
        i = np.zeros(self.n, complex)
        for (j, k), st in self.states.items():
            i[j] += st.init_steady(v_b[k])
        return i

    def history(self):
        """Voltage-independent part of the next boundary current (cached for advance)."""
        self._hist = {key: st.history() for key, st in self.states.items()}
        h = np.zeros(self.n, complex)
        for (j, _), val in self._hist.items():
            h[j] += val
        return h

    def advance(self, v_b):
        hist = self._hist or {}
        i = np.zeros(self.n, complex)
        for key, st in self.states.items():
            i[key[0]] += st.advance(v_b[key[1]], hist.get(key))
        self._hist = None
        return i


# --------------------------------------------------------------------------- I/O

def _cx(arr):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.atleast_2d(arr)]


def _uncx(data, shape):
    arr = np.array([[complex(re, im) for re, im in row] for row in data], dtype=complex)
    return arr.reshape(shape) if arr.size else np.zeros(shape, complex)


def reduced_to_dict(red: ReducedGrid):
    nb, ne = len(red.boundary), len(red.machines)
    return {
        "boundary": list(red.boundary),
        "base_mva": red.base_mva,
        "frequency_hz": red.frequency_hz,
        "dt": red.dt,
        "machines": [
            {"bus": g.bus, "h": g.h, "rating": g.rating, "xd": g.xd, "p": g.p, "v": g.v,
             "damping": g.damping, "slack": g.slack, "name": g.name}
            for g in red.machines
        ],
        "y_bb": _cx(red.y_bb) if nb else [],
        "y_be": _cx(red.y_be) if nb and ne else [],
        "y_eb": _cx(red.y_eb) if nb and ne else [],
        "y_ee": _cx(red.y_ee) if ne else [],
        "fdne": [
            {"row": j, "col": k, "a": list(m.a), "b": list(m.b), "b0": m.b0,
             "fit_error": m.fit_error}
            for (j, k), m in sorted(red.fdne.items())
        ],
    }


def reduced_from_dict(data):
    try:
        nb, ne = len(data["boundary"]), len(data["machines"])
        dt = float(data.get("dt", 1e-3))
        machines = [Generator(int(m["bus"]), float(m["h"]), float(m["rating"]), float(m["xd"]),
                              float(m.get("p", 0.0)), float(m.get("v", 1.0)),
                              float(m.get("damping", 0.0)), bool(m.get("slack", False)),
                              str(m.get("name", "")))
                    for m in data["machines"]]
        fdne = {(int(e["row"]), int(e["col"])): FdneModel(tuple(e["a"]), tuple(e["b"]),
                                                           float(e["b0"]), dt,
                                                           float(e.get("fit_error", math.nan)))
                for e in data.get("fdne", [])}
        return ReducedGrid(
            boundary=[int(b) for b in data["boundary"]],
            machines=machines,
            y_bb=_uncx(data["y_bb"], (nb, nb)),
            y_be=_uncx(data["y_be"], (nb, ne)),
            y_eb=_uncx(data["y_eb"], (ne, nb)),
            y_ee=_uncx(data["y_ee"], (ne, ne)),
            fdne=fdne,
            base_mva=float(data.get("base_mva", 100.0)),
            frequency_hz=float(data.get("frequency_hz", 60.0)),
            dt=dt,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkError(f"malformed reduced-grid data: {exc}") from None


def save_reduced(red: ReducedGrid, path):
    """Write JSON; Python's float repr makes the round trip exact."""
    Path(path).write_text(json.dumps(reduced_to_dict(red), indent=1))


def load_reduced(path):
    return reduced_from_dict(json.loads(Path(path).read_text()))
