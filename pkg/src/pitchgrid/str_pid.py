"""Pole-shifting self-tuning PID for a second-order discrete plant.

The plant is ``B/A`` with ``A = 1 + a1 q^-1 + a2 q^-2`` and
``B = b1 q^-1 + b2 q^-2``. The controller ``R u = S e`` uses

    R = (1 - q^-1)(1 + r1 q^-1),   S = s0 + s1 q^-1 + s2 q^-2

and is solved so that ``A R + B S`` equals the pole-shifted target
``(1 + alpha q^-1)(1 + a1 alpha q^-1 + a2 alpha^2 q^-2)`` with the fourth
closed-loop root at the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DesignError(ValueError):
    """The pole-placement equations have no usable solution."""


@dataclass(frozen=True)
class SecondOrderModel:
    a1: float
    a2: float
    b1: float
    b2: float

    def __post_init__(self):
        if self.b1 == 0 and self.b2 == 0:
            raise DesignError("numerator is identically zero; plant is not controllable")


@dataclass(frozen=True)
class RstDesign:
    alpha: float
    r1: float
    s0: float
    s1: float
    s2: float
    kp_gain: float
    ki_gain: float
    kd_gain: float
    ts: float

    @classmethod
    def from_pid(cls, kp, ki, kd, ts, r1=0.0, alpha=float("nan")):
        s0, s1, s2 = s_coefficients(kp, ki, kd, r1, ts)
        return cls(alpha, r1, s0, s1, s2, kp, ki, kd, ts)


def shifted_target(a1, a2, alpha):
    """Coefficients ``(t1, t2, t3)`` of the pole-shifted characteristic polynomial."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * (1.0 + a1), alpha**2 * (a1 + a2), a2 * alpha**3


def solve_rst(model: SecondOrderModel, alpha, ts):
    a1, a2, b1, b2 = model.a1, model.a2, model.b1, model.b2
    t1, t2, t3 = shifted_target(a1, a2, alpha)
    # unknowns (r1, s0, s1, s2); rows match q^-1 .. q^-4
    m = np.array([
        [1.0, b1, 0.0, 0.0],
        [a1 - 1.0, b2, b1, 0.0],
        [a2 - a1, 0.0, b2, b1],
        [-a2, 0.0, 0.0, b2],
    ])
    rhs = np.array([t1 - a1 + 1.0, t2 - a2 + a1, t3 + a2, 0.0])
    try:
        if a2 == 0.0 and b2 == 0.0:
            # first-order plant: the q^-4 row vanishes and s2 is not needed
            r1, s0, s1 = np.linalg.solve(m[:3, :3], rhs[:3])
            s2 = 0.0
        else:
            r1, s0, s1, s2 = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise DesignError(f"singular pole-placement system for {model}") from exc
    if not np.all(np.isfinite([r1, s0, s1, s2])):
        raise DesignError(f"non-finite pole-placement solution for {model}")
    kp, ki, kd = pid_gains(r1, s0, s1, s2, ts)
    return RstDesign(alpha, float(r1), float(s0), float(s1), float(s2), kp, ki, kd, ts)


def cancel_common_factor(model: SecondOrderModel, tol=0.02):
    """Drop a pole of ``A`` that (nearly) coincides with the zero of ``B``.

    A shared factor makes the pole-placement system singular. Returns the
    first-order model ``b1 q^-1 / (1 - p q^-1)`` when the zero ``-b2/b1``
    lies within ``tol`` of a real pole ``p``, otherwise ``model`` unchanged.
    """
    if model.b1 == 0.0:
        return model
    zero = -model.b2 / model.b1
    for p in np.roots([1.0, model.a1, model.a2]):
        if abs(p - zero) < tol:
            other = float((-model.a1 - p).real)
            return SecondOrderModel(-other, 0.0, model.b1, 0.0)
    return model


def s_coefficients(kp, ki, kd, r1, ts):
    """PID gains to ``(s0, s1, s2)``."""
    s0 = ts * ki + kd / ts + kp
    s1 = -2.0 * kd / ts - kp + r1 * kp
    s2 = kd / ts - r1 * kp
    return s0, s1, s2


def pid_gains(r1, s0, s1, s2, ts):
    """Inverse of :func:`s_coefficients`; returns ``(kp, ki, kd)``."""
    if ts <= 0:
        raise ValueError("ts must be positive")
    if 1.0 + r1 == 0:
        raise DesignError("degenerate design: 1 + r1 == 0")
    ki = (s0 + s1 + s2) / ts
    kp = -(s1 + 2.0 * s2) / (1.0 + r1)
    kd = -ts * (r1 * s1 - (1.0 - r1) * s2) / (1.0 + r1)
    return float(kp), float(ki), float(kd)


def closed_loop_polynomial(model: SecondOrderModel, design: RstDesign):
    """Coefficients of ``A R + B S`` in ascending powers of q^-1."""
    a = np.array([1.0, model.a1, model.a2])
    b = np.array([0.0, model.b1, model.b2])
    r = np.convolve([1.0, -1.0], [1.0, design.r1])
    s = np.array([design.s0, design.s1, design.s2])
    return np.convolve(a, r) + np.convolve(b, s)


@dataclass
class ControllerState:
    """History of the incremental RST law.

    ``du`` holds the previous applied increment, ``e1``/``e2`` the past
    errors and ``u`` the last applied output.
    """

    u: float = 0.0
    du: float = 0.0
    e1: float = 0.0
    e2: float = 0.0
    fault: bool = False
    saturated: bool = False
    _u_free: float = field(default=0.0, repr=False)


def control_step(design: RstDesign, error_k, state: ControllerState, u_min=-math.inf,
                 u_max=math.inf, anti_windup=True):
    """Advance ``R(q^-1) u(k) = S(q^-1) e(k)`` by one sample.

    The law is evaluated in incremental form
    ``du(k) = -r1 du(k-1) + s0 e(k) + s1 e(k-1) + s2 e(k-2)``, which is the
    same difference equation. The output is clipped to ``[u_min, u_max]``.
    With ``anti_windup`` the stored increment is the one actually applied,
    so nothing accumulates while the output is pinned; without it the
    unclipped output keeps integrating internally.
    """
    if not math.isfinite(error_k):
        state.fault = True
        return state.u
    state.fault = False
    du = -design.r1 * state.du + design.s0 * error_k + design.s1 * state.e1 + design.s2 * state.e2
    base = state.u if anti_windup else state._u_free
    u_raw = base + du
    u = min(max(u_raw, u_min), u_max)
    state.saturated = u != u_raw
    if anti_windup:
        state.du = u - state.u
        state._u_free = u
    else:
        state.du = du
        state._u_free = u_raw
    state.u = u
    state.e2, state.e1 = state.e1, error_k
    return u
