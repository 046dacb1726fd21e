"""Sensorless reference-speed estimation from PCC electrical quantities.

No wind-speed input appears anywhere in this module: the reference speed is
the rotor speed at which the MPPT power map delivers the measured electrical
power, capped at the rated speed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .turbine import TurbineParams, mppt_power

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PccMeasurement:
    v_pcc: float
    v_b: float
    delta_pcc: float    # rad
    delta_b: float      # rad
    x_line: float       # p.u. reactance PCC -> boundary bus

    def __post_init__(self):
        if self.v_pcc < 0 or self.v_b < 0:
            raise ValueError("voltage magnitudes must be non-negative")
        if not self.x_line > 0:
            raise ValueError("x_line must be positive")


def electrical_power(m: PccMeasurement):
    """Active power sent from the PCC towards the boundary bus."""
    return m.v_pcc * m.v_b / m.x_line * math.sin(m.delta_pcc - m.delta_b)


@dataclass
class RefSpeedEstimator:
    tol: float = 1e-6
    max_iter: int = 100
    damping: float = 1.0
    omega_history: list = field(default_factory=list)
    diagnostics: int = 0        # count of non-converged calls

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def _closed_form(p_e, params: TurbineParams):
    return params.r_gear * (p_e / params.k_p) ** (1.0 / 3.0)


def estimate_ref_speed(est: RefSpeedEstimator, p_e, params: TurbineParams):
    """Iterate the MPPT power/speed balance to ``omega_ref`` (p.u.).

    Each pass evaluates the MPPT power at the current speed iterate and
    moves the speed against the power mismatch (damped Newton on
    ``P_m(w) = P_e``). Once the step falls below ``10*tol`` the exact fixed
    point is taken, which removes the 0/0 of a speed-difference quotient.
    """
    p_e = max(float(p_e), 0.0)
    rated = params.rated_speed_pu
    if p_e == 0.0:
        est.omega_history = [0.0, 0.0]
        return 0.0
    omega = est.omega_history[-1] if est.omega_history else rated
    if omega <= 1e-3 * rated:
        omega = rated
    prev = omega
    for _ in range(est.max_iter):
        p_m = mppt_power(params, omega)
        slope = 3.0 * p_m / omega
        step = est.damping * (p_m - p_e) / slope
        prev, omega = omega, max(omega - step, 0.5 * omega)
        if abs(omega - prev) < 10.0 * est.tol:
            omega = _closed_form(p_e, params)
            break
    else:
        est.diagnostics += 1
        log.warning("reference speed did not converge for P_e=%.4g; using closed form", p_e)
        omega = _closed_form(p_e, params)
    omega = min(max(omega, 0.0), rated)
    est.omega_history = [prev, omega]
    return omega
