"""Wind-turbine aerodynamics, MPPT maps, pitch actuator and drivetrain.

Per-unit conventions: turbine powers are in p.u. of ``rated_power_kw``,
``omega_r`` is generator speed in p.u. (turbine speed times ``r_gear``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Protocol

from scipy.optimize import brentq, minimize_scalar

CP_COEFFS = (0.5176, 116.0, 0.4, 5.0, 21.0, 0.0068)

_OMEGA_FLOOR = 1e-3


def _cp_raw(lam, beta, c=CP_COEFFS):
    c1, c2, c3, c4, c5, c6 = c
    inv_li = 1.0 / (lam + 0.08 * beta) - 0.035 / (beta**3 + 1.0)
    return c1 * (c2 * inv_li - c3 * beta - c4) * math.exp(-c5 * inv_li) + c6 * lam


def optimal_tip_speed_ratio(coeffs=CP_COEFFS):
    """Return ``(lambda_opt, cp_max)`` of the Cp curve at zero pitch."""
    res = minimize_scalar(lambda lam: -_cp_raw(lam, 0.0, coeffs), bounds=(1.0, 20.0),
                          method="bounded", options={"xatol": 1e-12})
    return float(res.x), float(-res.fun)


_LAMBDA_OPT, _CP_MAX = optimal_tip_speed_ratio()
_RHO = 1.225
_RATED_KW = 2000.0
_RATED_WIND = 12.0
# swept area sized so the rated point (12 m/s, lambda_opt, beta=0) gives exactly rated power
_AREA = 2.0 * _RATED_KW * 1e3 / (_RHO * _CP_MAX * _RATED_WIND**3)
_RADIUS = math.sqrt(_AREA / math.pi)


@dataclass(frozen=True)
class TurbineParams:
    c1: float = CP_COEFFS[0]
    c2: float = CP_COEFFS[1]
    c3: float = CP_COEFFS[2]
    c4: float = CP_COEFFS[3]
    c5: float = CP_COEFFS[4]
    c6: float = CP_COEFFS[5]
    rho: float = _RHO                 # kg/m^3
    area: float = _AREA               # m^2
    radius: float = _RADIUS           # m
    omega_base: float = _LAMBDA_OPT * _RATED_WIND / _RADIUS  # turbine rad/s at 1 p.u.
    k_p: float = 1.0                  # MPPT scaling, p.u.
    r_gear: float = 1.2
    inertia_h: float = 1.5            # MW s / MVA
    rated_power_kw: float = _RATED_KW
    rated_generator_mva: float = 2.2
    rated_wind: float = _RATED_WIND   # m/s
    cut_in: float = 6.0
    cut_out: float = 25.0
    rated_speed_pu: float = 1.2
    speed_limit_pu: float = 1.25
    pitch_min: float = 0.0            # deg
    pitch_max: float = 30.0
    pitch_rate_limit: float = 10.0    # deg/s

    def __post_init__(self):
        checks = [
            (self.rho > 0, "rho must be positive"),
            (self.area > 0, "area must be positive"),
            (self.radius > 0, "radius must be positive"),
            (self.omega_base > 0, "omega_base must be positive"),
            (self.k_p > 0, "k_p must be positive"),
            (self.r_gear > 0, "r_gear must be positive"),
            (self.inertia_h > 0, "inertia_h must be positive"),
            (self.rated_power_kw > 0, "rated_power_kw must be positive"),
            (self.cut_in < self.rated_wind < self.cut_out,
             "wind speeds must satisfy cut_in < rated_wind < cut_out"),
            (self.pitch_min < self.pitch_max, "pitch_min must be below pitch_max"),
            (self.pitch_rate_limit > 0, "pitch_rate_limit must be positive"),
            (self.speed_limit_pu >= self.rated_speed_pu,
             "speed_limit_pu must be >= rated_speed_pu"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def cp_coeffs(self):
        return (self.c1, self.c2, self.c3, self.c4, self.c5, self.c6)

    @property
    def generator_rating_pu(self):
        """Generator MVA rating on the turbine power base."""
        return self.rated_generator_mva * 1e3 / self.rated_power_kw


@dataclass(frozen=True)
class TurbineState:
    omega_r: float      # p.u.
    beta: float         # deg
    p_mech: float = 0.0  # p.u.
    torque_mech: float = 0.0


def tip_speed_ratio(radius, omega_t, v_wind):
    """Blade-tip speed over wind speed. ``omega_t`` in rad/s."""
    if not v_wind > 0:
        raise ValueError(f"wind speed must be positive, got {v_wind}")
    return radius * omega_t / v_wind


def power_coefficient(lam, beta, params: TurbineParams | None = None):
    """Cp(lambda, beta), clamped at zero from below (stall, not reverse power)."""
    coeffs = params.cp_coeffs if params is not None else CP_COEFFS
    if lam + 0.08 * beta == 0:
        raise ValueError("lambda + 0.08*beta must be non-zero")
    return max(_cp_raw(lam, beta, coeffs), 0.0)


def mechanical_power(params: TurbineParams, cp, v_wind):
    """Aerodynamic shaft power in kW."""
    if v_wind < 0 or cp < 0:
        raise ValueError("v_wind and cp must be non-negative")
    return cp * 0.5 * params.rho * params.area * v_wind**3 / 1e3


def mppt_power(params: TurbineParams, omega_r):
    return params.k_p * (omega_r / params.r_gear) ** 3


def mppt_speed(params: TurbineParams, p_m):
    if p_m < 0:
        raise ValueError("p_m must be non-negative")
    return params.r_gear * (p_m / params.k_p) ** (1.0 / 3.0)


def aerodynamic_power(params: TurbineParams, omega_r, beta, v_wind):
    """Shaft power in p.u. at generator speed ``omega_r`` (p.u.).

    Returns ``(p_pu, cp, lam)``. Outside [cut_in, cut_out] the rotor is
    treated as parked aerodynamically and produces nothing.
    """
    if v_wind < params.cut_in or v_wind > params.cut_out or omega_r <= 0:
        return 0.0, 0.0, 0.0
    omega_t = omega_r / params.r_gear * params.omega_base
    lam = tip_speed_ratio(params.radius, omega_t, v_wind)
    cp = power_coefficient(lam, beta, params)
    return mechanical_power(params, cp, v_wind) / params.rated_power_kw, cp, lam


def pitch_actuator_step(beta_now, beta_cmd, dt, params: TurbineParams):
    if dt <= 0:
        raise ValueError("dt must be positive")
    max_move = params.pitch_rate_limit * dt
    move = min(max(beta_cmd - beta_now, -max_move), max_move)
    return min(max(beta_now + move, params.pitch_min), params.pitch_max)


class Drivetrain(Protocol):
    def step(self, state: TurbineState, p_m: float, p_e: float, dt: float) -> TurbineState: ...


@dataclass(frozen=True)
class LumpedDrivetrain:
    """Single-inertia rotor: 2H dw/dt = (P_m - P_e) / w, explicit Euler."""

    inertia_h: float
    substeps: int = 1

    def step(self, state: TurbineState, p_m: float, p_e: float, dt: float) -> TurbineState:
        if dt <= 0:
            raise ValueError("dt must be positive")
        omega = state.omega_r
        h = dt / self.substeps
        for _ in range(self.substeps):
            if omega <= _OMEGA_FLOOR:
                raise FloatingPointError(f"rotor speed {omega:.3g} p.u. below integration floor")
            omega += h * (p_m - p_e) / (2.0 * self.inertia_h * omega)
        if omega <= _OMEGA_FLOOR:
            raise FloatingPointError(f"rotor speed {omega:.3g} p.u. below integration floor")
        return replace(state, omega_r=omega, p_mech=p_m, torque_mech=p_m / omega)


def drivetrain_step(state: TurbineState, p_m, p_e, dt, params: TurbineParams, substeps=1):
    return LumpedDrivetrain(params.inertia_h, substeps).step(state, p_m, p_e, dt)


def operating_point(params: TurbineParams, v_wind):
    """Steady state ``(omega_r, beta)`` for a constant wind speed.

    Below rated the rotor sits on the MPPT curve at zero pitch; above rated
    speed is held at ``rated_speed_pu`` and pitch sheds the surplus.
    """
    if v_wind < params.cut_in or v_wind > params.cut_out:
        raise ValueError(f"wind speed {v_wind} outside the operating range")

    def balance(omega):
        return aerodynamic_power(params, omega, params.pitch_min, v_wind)[0] - mppt_power(params, omega)

    omega_hi = params.rated_speed_pu
    if balance(omega_hi) <= 0:
        omega = brentq(balance, 0.05, omega_hi, xtol=1e-14)
        return omega, params.pitch_min
    p_target = mppt_power(params, omega_hi)

    def surplus(beta):
        return aerodynamic_power(params, omega_hi, beta, v_wind)[0] - p_target

    if surplus(params.pitch_max) > 0:
        raise ValueError(f"pitch range cannot shed enough power at {v_wind} m/s")
    return omega_hi, brentq(surplus, params.pitch_min, params.pitch_max, xtol=1e-12)
