"""Electromagnetic (dynamic-phasor) model of a passive network with machine EMFs.

Each element uses its trapezoidal companion model with coefficients rotated
by ``exp(-j w0 h)`` so that it acts on complex envelopes at ``w0``. This is
the same discrete network the FDNE is fitted to, kept at full detail; it
serves as the reference for the reduced equivalent.
"""
from __future__ import annotations

import math

import numpy as np

from .fdne import EmtSolver, external_elements
from .network import NetworkModel


class DynamicPhasorNetwork:
    """External area driven by boundary voltages and machine EMFs.

    Node order: network buses, then one EMF node per generator. ``I_b`` is the
    current flowing from each boundary bus into this network.
    """

    def __init__(self, network: NetworkModel, boundary, dt, prewarp=True):
        w0 = 2.0 * math.pi * network.frequency_hz
        els, idx = external_elements(network, source_nodes=True)
        n_bus = len(idx)
        n_src = len(network.generators)
        self.boundary = list(boundary)
        self.b = [idx[x] for x in self.boundary]
        self.s = list(range(n_bus, n_bus + n_src))
        known = set(self.b) | set(self.s)
        self.i = [k for k in range(n_bus) if k not in known]
        # reuse the real companion coefficients and rotate the history terms
        comp = EmtSolver(n_bus + n_src, els, self.b + self.s, dt,
                         prewarp_hz=network.frequency_hz if prewarp else None)
        rot = complex(math.cos(w0 * dt), -math.sin(w0 * dt))
        self.inc = comp.inc
        self.g = comp.g
        self.alpha = comp.alpha * rot
        self.beta = comp.beta * rot
        gn = self.inc.T @ (self.g[:, None] * self.inc)
        b, s, i = self.b, self.s, self.i
        self._gii_inv = np.linalg.inv(gn[np.ix_(i, i)]) if i else np.zeros((0, 0))
        self._gib, self._gis = gn[np.ix_(i, b)], gn[np.ix_(i, s)]
        self._gbi, self._gbb, self._gbs = gn[np.ix_(b, i)], gn[np.ix_(b, b)], gn[np.ix_(b, s)]
        self.y_inst = self._gbb - self._gbi @ self._gii_inv @ self._gib
        self.src_elements = [len(els) - n_src + k for k in range(n_src)]
        self.hist = np.zeros(len(els), complex)
        self.v = np.zeros(n_bus + n_src, complex)
        self.i_el = np.zeros(len(els), complex)
        self._idx = idx

    def init_steady(self, v_bus, emf):
        """Set histories for a sinusoidal steady state.

        ``v_bus`` maps bus id to phasor voltage, ``emf`` lists machine EMFs.
        """
        v = np.zeros(len(self.v), complex)
        for bid, k in self._idx.items():
            v[k] = v_bus[bid]
        v[self.s] = emf
        v_el = self.inc @ v
        y_el = (self.g + self.alpha) / (1.0 - self.beta)
        self.i_el = y_el * v_el
        self.hist = self.alpha * v_el + self.beta * self.i_el
        self.v = v

    def source_current(self, emf):
        """``J`` in ``I_b = y_inst V_b + J`` for the coming step."""
        hn = self.inc.T @ self.hist
        rhs_i = hn[self.i] + self._gis @ emf
        return hn[self.b] + self._gbs @ emf - self._gbi @ (self._gii_inv @ rhs_i)

    def advance(self, v_b, emf):
        hn = self.inc.T @ self.hist
        v = self.v
        v[self.b] = v_b
        v[self.s] = emf
        if self.i:
            v[self.i] = -self._gii_inv @ (hn[self.i] + self._gib @ v_b + self._gis @ emf)
        v_el = self.inc @ v
        self.i_el = self.g * v_el + self.hist
        self.hist = self.alpha * v_el + self.beta * self.i_el
        return self.boundary_current()

    def boundary_current(self):
        return (self.inc.T @ self.i_el)[self.b]

    def machine_currents(self):
        """Current delivered by each machine into its terminal."""
        return -self.i_el[self.src_elements]
