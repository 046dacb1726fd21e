import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pitchgrid.turbine import (
    CP_COEFFS, LumpedDrivetrain, TurbineParams, TurbineState, aerodynamic_power,
    drivetrain_step, mechanical_power, mppt_power, mppt_speed, operating_point,
    optimal_tip_speed_ratio, pitch_actuator_step, power_coefficient, tip_speed_ratio,
)

P = TurbineParams()


def cp_oracle(lam, beta):
    # independent transcription of the Cp surface
    c1, c2, c3, c4, c5, c6 = 0.5176, 116.0, 0.4, 5.0, 21.0, 0.0068
    li = 1.0 / (1.0 / (lam + 0.08 * beta) - 0.035 / (beta**3 + 1.0))
    return c1 * (c2 / li - c3 * beta - c4) * math.exp(-c5 / li) + c6 * lam


def test_tip_speed_ratio_examples():
    assert tip_speed_ratio(1.0, 8.1, 1.0) == pytest.approx(8.1)
    assert tip_speed_ratio(2.0, 4.0, 8.0) == 1.0


def test_tip_speed_ratio_at_rated_point_is_lambda_opt():
    omega_t = P.rated_speed_pu / P.r_gear * P.omega_base
    lam_opt, _ = optimal_tip_speed_ratio()
    assert tip_speed_ratio(P.radius, omega_t, 12.0) == pytest.approx(lam_opt, rel=1e-12)


def test_tip_speed_ratio_rejects_non_positive_wind():
    with pytest.raises(ValueError):
        tip_speed_ratio(1.0, 1.0, 0.0)


def test_power_coefficient_matches_scalar_oracle():
    assert power_coefficient(8.1, 0.0) == pytest.approx(cp_oracle(8.1, 0.0), abs=1e-14)
    assert power_coefficient(8.1, 0.0) == pytest.approx(0.480, abs=5e-4)
    assert power_coefficient(10.4, 0.0) == pytest.approx(cp_oracle(10.4, 0.0), abs=1e-14)
    assert power_coefficient(10.4, 0.0) == pytest.approx(0.371, abs=5e-4)


def test_power_coefficient_smaller_at_large_pitch():
    assert power_coefficient(8.1, 25.0) < power_coefficient(8.1, 0.0)


def test_power_coefficient_clamped_at_zero():
    assert cp_oracle(14.0, 30.0) < 0
    assert power_coefficient(14.0, 30.0) == 0.0


def test_cp_max_grid_search():
    lam = np.linspace(0.01, 20.0, 20001)
    cp = np.array([power_coefficient(x, 0.0) for x in lam])
    assert cp.max() == pytest.approx(0.48, abs=0.005)
    lam_opt, cp_max = optimal_tip_speed_ratio(CP_COEFFS)
    assert lam[cp.argmax()] == pytest.approx(lam_opt, abs=2e-3)
    assert cp_max >= cp.max()


def test_mechanical_power_examples():
    assert mechanical_power(P, 0.0, 12.0) == 0.0
    assert mechanical_power(P, 0.4, 20.0) == pytest.approx(8 * mechanical_power(P, 0.4, 10.0),
                                                           rel=1e-15)


def test_mechanical_power_rated_calibration():
    # solve P = Cp * (rho A / 2) v^3 for rho A / 2 at the rated point
    _, cp_max = optimal_tip_speed_ratio()
    half_rho_a = P.rated_power_kw * 1e3 / (cp_max * 12.0**3)
    assert 0.5 * P.rho * P.area == pytest.approx(half_rho_a, rel=1e-12)
    assert mechanical_power(P, cp_max, 12.0) == pytest.approx(P.rated_power_kw, rel=1e-12)


@given(st.floats(1e-6, 0.59), st.floats(0.1, 30.0))
def test_mechanical_power_exactly_cubic(cp, v):
    assert mechanical_power(P, cp, 2 * v) == pytest.approx(8 * mechanical_power(P, cp, v),
                                                           rel=1e-15, abs=0)


def test_mppt_power_examples():
    assert mppt_power(P, P.r_gear) == P.k_p
    assert mppt_power(P, 0.0) == 0.0


def test_mppt_speed_examples():
    assert mppt_speed(P, P.k_p) == pytest.approx(1.2, abs=1e-15)
    assert mppt_speed(P, 0.0) == 0.0
    assert mppt_speed(P, P.k_p / 8) == pytest.approx(P.r_gear / 2, rel=1e-15)


@given(st.floats(0.0, 2.0))
def test_mppt_round_trip(omega):
    assert mppt_speed(P, mppt_power(P, omega)) == pytest.approx(omega, abs=1e-12)


def test_pitch_actuator_examples():
    assert pitch_actuator_step(0.0, 90.0, 0.1, P) == pytest.approx(1.0)
    assert pitch_actuator_step(5.0, 5.0, 0.01, P) == 5.0
    assert pitch_actuator_step(2.0, 0.0, 0.5, P) == 0.0


def test_pitch_actuator_respects_range():
    assert pitch_actuator_step(29.9, 40.0, 1.0, P) == P.pitch_max
    assert pitch_actuator_step(0.05, -5.0, 1.0, P) == P.pitch_min


@given(st.floats(0.0, 30.0), st.floats(-90.0, 90.0), st.floats(1e-5, 1.0))
def test_pitch_actuator_rate_bound(beta_now, beta_cmd, dt):
    nxt = pitch_actuator_step(beta_now, beta_cmd, dt, P)
    assert abs(nxt - beta_now) <= P.pitch_rate_limit * dt * (1 + 1e-12) + 1e-12
    assert P.pitch_min <= nxt <= P.pitch_max


def test_drivetrain_balance_and_acceleration():
    s = TurbineState(1.1, 0.0)
    assert drivetrain_step(s, 0.8, 0.8, 0.01, P).omega_r == 1.1
    assert drivetrain_step(s, 0.9, 0.8, 0.01, P).omega_r > 1.1
    assert drivetrain_step(s, 0.7, 0.8, 0.01, P).omega_r < 1.1


def test_drivetrain_euler_matches_fine_substeps():
    # both integrate 2H w dw/dt = Pm - Pe with Pe following the MPPT curve
    dt, n = 0.01, 200
    coarse, fine = TurbineState(1.0, 0.0), TurbineState(1.0, 0.0)
    for _ in range(n):
        coarse = drivetrain_step(coarse, 0.9, mppt_power(P, coarse.omega_r), dt, P)
        fine = drivetrain_step(fine, 0.9, mppt_power(P, fine.omega_r), dt, P, substeps=100)
    assert abs(coarse.omega_r - fine.omega_r) < 5 * dt
    # analytic check of a constant-accelerating-power segment: w^2 grows linearly
    w = LumpedDrivetrain(P.inertia_h, 1000).step(TurbineState(1.0, 0.0), 0.5, 0.2, 1.0).omega_r
    assert w == pytest.approx(math.sqrt(1.0 + 0.3 / P.inertia_h), abs=1e-4)


def test_operating_point_below_and_above_rated():
    w, b = operating_point(P, 8.0)
    assert b == P.pitch_min
    assert aerodynamic_power(P, w, b, 8.0)[0] == pytest.approx(mppt_power(P, w), abs=1e-10)
    w, b = operating_point(P, 12.0)
    assert w == pytest.approx(P.rated_speed_pu, abs=1e-9)
    w, b = operating_point(P, 18.0)
    assert w == P.rated_speed_pu and b > 0
    assert aerodynamic_power(P, w, b, 18.0)[0] == pytest.approx(P.k_p, abs=1e-9)


def test_params_validation():
    with pytest.raises(ValueError):
        TurbineParams(pitch_rate_limit=0.0)
    with pytest.raises(ValueError):
        TurbineParams(speed_limit_pu=1.1)
