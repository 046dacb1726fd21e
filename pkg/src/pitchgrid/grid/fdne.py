"""Frequency-dependent network equivalent (FDNE) as a discrete admittance.

The boundary current follows the difference equation

    i(k) = -a1 i(k-1) - ... - an i(k-n) + b0 v(k) + b1 v(k-1) + ... + bn v(k-n)

fitted by least squares (the RLS identifier with no forgetting) on samples
from an EMT frequency sweep of the passive external network.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ..rls import RecursiveLeastSquares, TransferFunction
from .network import NetworkError, NetworkModel


class FdneError(ValueError):
    """Unstable or otherwise unusable FDNE fit."""


# --------------------------------------------------------------------------- EMT sweep

@dataclass(frozen=True)
class Element:
    """Two-terminal element between ``a`` and ``b`` (``None`` is ground).

    ``kind`` is ``"rl"`` (series R-L), ``"c"`` (capacitor) or ``"g"``
    (conductance ``r`` in siemens p.u.).
    """

    a: int
    b: int | None
    kind: str
    r: float = 0.0
    l: float = 0.0
    c: float = 0.0

    def admittance(self, s):
        """Continuous-time admittance at complex frequency ``s`` (array ok)."""
        if self.kind == "rl":
            return 1.0 / (self.r + s * self.l)
        if self.kind == "c":
            return s * self.c
        if self.kind == "g":
            return self.r + 0 * s
        raise ValueError(self.kind)


class EmtSolver:
    """Trapezoidal-rule nodal solver for a passive RLC network.

    Port nodes are voltage-driven; :meth:`run` returns the current each
    source pushes into the network. With ``prewarp_hz`` the companion models
    use ``w0 / tan(w0 h / 2)`` instead of ``2 / h`` so the discrete
    response is exact at that frequency.
    """

    def __init__(self, n_nodes, elements, ports, h, prewarp_hz=None):
        self.h = float(h)
        self.ports = list(ports)
        self.internal = [n for n in range(n_nodes) if n not in set(self.ports)]
        if prewarp_hz:
            w0 = 2.0 * math.pi * prewarp_hz
            self.k = w0 / math.tan(w0 * self.h / 2.0)
        else:
            self.k = 2.0 / self.h
        n_el = len(elements)
        inc = np.zeros((n_el, n_nodes))
        g = np.zeros(n_el)
        alpha = np.zeros(n_el)
        beta = np.zeros(n_el)
        for e, el in enumerate(elements):
            inc[e, el.a] += 1.0
            if el.b is not None:
                inc[e, el.b] -= 1.0
            if el.kind == "rl":
                denom = el.r + self.k * el.l
                if denom <= 0:
                    raise NetworkError("series element with zero impedance")
                g[e] = 1.0 / denom
                alpha[e] = g[e]
                beta[e] = g[e] * (self.k * el.l - el.r)
            elif el.kind == "c":
                g[e] = self.k * el.c
                alpha[e] = -g[e]
                beta[e] = -1.0
            elif el.kind == "g":
                g[e] = el.r
            else:
                raise ValueError(f"unknown element kind {el.kind!r}")
        self.inc, self.g, self.alpha, self.beta = inc, g, alpha, beta
        gn = inc.T @ (g[:, None] * inc)
        p, i = self.ports, self.internal
        self.g_pp = gn[np.ix_(p, p)]
        self.g_pi = gn[np.ix_(p, i)]
        self.g_ip = gn[np.ix_(i, p)]
        self._lu = lu_factor(gn[np.ix_(i, i)]) if i else None

    def run(self, v_ports):
        v_ports = np.atleast_2d(np.asarray(v_ports, float))
        if v_ports.shape[0] == 1 and len(self.ports) != 1:
            v_ports = v_ports.T
        if v_ports.shape[1] != len(self.ports):
            v_ports = v_ports.T
        n_steps = v_ports.shape[0]
        out = np.zeros((n_steps, len(self.ports)))
        hist = np.zeros(len(self.g))
        v = np.zeros(self.inc.shape[1])
        p, i = self.ports, self.internal
        for k in range(n_steps):
            hn = self.inc.T @ hist
            vp = v_ports[k]
            v[p] = vp
            if self._lu is not None:
                v[i] = lu_solve(self._lu, -hn[i] - self.g_ip @ vp)
                out[k] = self.g_pp @ vp + self.g_pi @ v[i] + hn[p]
            else:
                out[k] = self.g_pp @ vp + hn[p]
            v_el = self.inc @ v
            i_el = self.g * v_el + hist
            hist = self.alpha * v_el + self.beta * i_el
        return out


def external_elements(network: NetworkModel, omega0=None, source_nodes=False):
    """Passive elements of ``network`` with all sources short-circuited.

    Returns ``(elements, node_index)``. Generators appear as their internal
    reactance to ground; loads and shunts split into R, L and C parts. With
    ``source_nodes`` each machine reactance ends on an extra node (numbered
    after the buses, in generator order) that carries its EMF instead.
    """
    w0 = omega0 or 2.0 * math.pi * network.frequency_hz
    idx = network.index()
    els = []
    for br in network.branches:
        if br.x < 0:
            raise NetworkError("series capacitance is not supported in the EMT sweep")
        els.append(Element(idx[br.from_bus], idx[br.to_bus], "rl", br.r, br.x / w0))
        if br.b:
            for bus in (br.from_bus, br.to_bus):
                els.extend(_shunt_elements(idx[bus], complex(0.0, br.b / 2.0), w0))
    for bid, y in network.bus_shunts(include_loads=True, include_generators=False).items():
        els.extend(_shunt_elements(idx[bid], y, w0))
    for k, gen in enumerate(network.generators):
        x_sys = gen.xd * network.base_mva / gen.rating
        far = len(idx) + k if source_nodes else None
        els.append(Element(idx[gen.bus], far, "rl", 0.0, x_sys / w0))
    return els, idx


def _shunt_elements(node, y, w0):
    out = []
    if y.real:
        out.append(Element(node, None, "g", y.real))
    if y.imag > 0:
        out.append(Element(node, None, "c", c=y.imag / w0))
    elif y.imag < 0:
        out.append(Element(node, None, "rl", 0.0, 1.0 / (-y.imag * w0)))
    return out


def multitone(n_steps, h, f_min=0.1, f_max=2000.0, n_tones=60, seed=0):
    """Log-spaced equal-amplitude multi-tone, peak-normalised to 1.

    ``f_max`` is capped at 0.4/h to stay clear of the Nyquist frequency.
    Returns ``(signal, tone_frequencies_hz)``.
    """
    f_max = min(f_max, 0.4 / h)
    freqs = np.geomspace(f_min, f_max, n_tones)
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * math.pi, n_tones)
    t = np.arange(n_steps) * h
    sig = np.zeros(n_steps)
    for f, ph in zip(freqs, phases):
        sig += np.sin(2.0 * math.pi * f * t + ph)
    return sig / np.max(np.abs(sig)), freqs


def sweep_port(network: NetworkModel, port_bus, other_ports=(), h=1e-3, duration=None,
               f_min=0.1, f_max=2000.0, n_tones=60, seed=0, prewarp=True):
    """Energise ``port_bus`` with a multi-tone, others shorted; return ``(v, i, freqs)``."""
    els, idx = external_elements(network)
    ports = [idx[port_bus]] + [idx[b] for b in other_ports]
    solver = EmtSolver(len(idx), els, ports, h,
                       prewarp_hz=network.frequency_hz if prewarp else None)
    n_steps = int(round((duration or 2.0 / f_min) / h))
    v, freqs = multitone(n_steps, h, f_min, f_max, n_tones, seed)
    drive = np.zeros((n_steps, len(ports)))
    drive[:, 0] = v
    i = solver.run(drive)[:, 0]
    return v, i, freqs


# --------------------------------------------------------------------------- model

@dataclass(frozen=True)
class FdneModel:
    a: tuple
    b: tuple            # b1..bn
    b0: float = 0.0
    dt: float = 1e-3
    fit_error: float = float("nan")

    @property
    def order(self):
        return len(self.a)

    def transfer_function(self):
        return TransferFunction(tuple(self.a), tuple(self.b), self.b0)

    def poles(self):
        return np.roots(np.r_[1.0, np.asarray(self.a)])

    def frequency_response(self, f_hz):
        return self.transfer_function().frequency_response(2.0 * math.pi * np.asarray(f_hz) * self.dt)

    def shifted(self, omega0):
        """Coefficients acting on complex envelopes rotating at ``omega0`` rad/s.

        A real filter applied to ``Re(X e^{j w0 t})`` maps to the envelope
        recursion with coefficients multiplied by ``e^{-j m w0 dt}``.
        """
        rot = np.exp(-1j * omega0 * self.dt * np.arange(1, self.order + 1))
        return ComplexFdne(np.asarray(self.a) * rot, np.asarray(self.b) * rot, complex(self.b0))


@dataclass
class ComplexFdne:
    a: np.ndarray
    b: np.ndarray
    b0: complex

    def dc_gain(self):
        return (self.b0 + self.b.sum()) / (1.0 + self.a.sum())


@dataclass
class FdneState:
    """Runtime history for real or frequency-shifted FDNE coefficients."""

    a: np.ndarray
    b: np.ndarray
    b0: complex
    i_hist: np.ndarray = field(default=None)
    v_hist: np.ndarray = field(default=None)

    @classmethod
    def from_model(cls, model, omega0=None):
        if omega0 is None:
            a, b, b0, dtype = np.asarray(model.a, float), np.asarray(model.b, float), model.b0, float
        else:
            sh = model.shifted(omega0)
            a, b, b0, dtype = sh.a, sh.b, sh.b0, complex
        n = len(a)
        return cls(a, b, b0, np.zeros(n, dtype), np.zeros(n, dtype))

    def init_steady(self, v):
        """Fill the history with a constant operating point and return its current."""
        gain = (self.b0 + self.b.sum()) / (1.0 + self.a.sum())
        i = gain * v
        self.i_hist[:] = i
        self.v_hist[:] = v
        return i

    def history(self):
        """Part of the next current that does not depend on the next voltage."""
        return self.b @ self.v_hist - self.a @ self.i_hist

    def advance(self, v_k, hist=None):
        i_k = self.b0 * v_k + (self.history() if hist is None else hist)
        if len(self.a):
            self.i_hist[1:] = self.i_hist[:-1]
            self.v_hist[1:] = self.v_hist[:-1]
            self.i_hist[0] = i_k
            self.v_hist[0] = v_k
        return i_k


def fdne_step(state: FdneState, v_k):
    return state.advance(v_k)


def simulate(model: FdneModel, v):
    st = FdneState.from_model(model)
    return np.array([st.advance(x) for x in v])


def fdne_fit(v, i, order, direct=True, p0_scale=1e6, dt=1e-3, check_stable=True):
    """Fit the boundary admittance recursion with RLS (no forgetting)."""
    rls = RecursiveLeastSquares(order, p0_scale=p0_scale, gamma=1.0, direct=direct)
    for vk, ik in zip(v, i):
        rls.update(float(vk), float(ik))
    tf = rls.identified_model()
    model = FdneModel(tf.a, tf.b, tf.b0, dt)
    if check_stable:
        poles = model.poles()
        bad = poles[np.abs(poles) >= 1.0]
        if bad.size:
            raise FdneError(f"unstable FDNE fit: root {bad[0]:.6g} (|z|={abs(bad[0]):.6g})")
    i_fit = simulate(model, v)
    err = float(np.sqrt(np.mean((i_fit - i) ** 2)) / max(np.sqrt(np.mean(np.asarray(i) ** 2)), 1e-300))
    return FdneModel(model.a, model.b, model.b0, dt, err)


def fdne_fit_auto(v, i, order=8, max_order=20, tol=0.01, dt=1e-3, **kw):
    """Raise the order from ``order`` until the output error drops below ``tol``."""
    best = None
    last_exc = None
    for n in range(order, max_order + 1):
        try:
            model = fdne_fit(v, i, n, dt=dt, **kw)
        except FdneError as exc:
            last_exc = exc
            continue
        if best is None or model.fit_error < best.fit_error:
            best = model
        if model.fit_error < tol:
            return model
    if best is None:
        raise last_exc
    return best
