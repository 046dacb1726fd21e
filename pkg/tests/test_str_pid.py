import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from pitchgrid.str_pid import (
    ControllerState, DesignError, RstDesign, SecondOrderModel, cancel_common_factor,
    closed_loop_polynomial, control_step, pid_gains, s_coefficients, shifted_target, solve_rst,
)

KNOWN = SecondOrderModel(-1.5, 0.56, 0.1, 0.05)


def s_oracle(kp, ki, kd, r1, ts):
    # coefficient definitions of the discrete PID written out directly
    return (kp + ki * ts + kd / ts,
            -kp - 2 * kd / ts + r1 * kp,
            kd / ts - r1 * kp)


def random_stable_model(rng):
    if rng.random() < 0.5:
        r, th = rng.uniform(0.05, 0.98), rng.uniform(0.05, math.pi - 0.05)
        poles = [r * np.exp(1j * th), r * np.exp(-1j * th)]
    else:
        poles = list(rng.uniform(-0.98, 0.98, 2))
    a = np.real(np.poly(poles))
    b1, b2 = rng.uniform(0.05, 1.0) * rng.choice([-1, 1]), rng.uniform(-1.0, 1.0)
    return SecondOrderModel(a[1], a[2], b1, b2), np.array(poles)


def match_roots(found, expected):
    """Largest distance in a greedy nearest-neighbour pairing of two root sets."""
    rest = list(found)
    worst = 0.0
    for x in expected:
        j = int(np.argmin([abs(x - y) for y in rest]))
        worst = max(worst, abs(x - rest.pop(j)))
    return worst


def test_shifted_target_examples():
    assert shifted_target(-1.5, 0.56, 0.0) == (0.0, 0.0, 0.0)
    a1, a2 = -1.5, 0.56
    assert shifted_target(a1, a2, 1.0) == pytest.approx((1 + a1, a1 + a2, a2))
    with pytest.raises(ValueError):
        shifted_target(a1, a2, 1.5)


def test_shifted_target_symbolic_expansion():
    q, al = sp.symbols("q alpha")
    a1, a2 = sp.Rational(-3, 2), sp.Rational(14, 25)
    poly = sp.expand((1 + al * q) * (1 + a1 * al * q + a2 * al**2 * q**2))
    coeffs = [poly.coeff(q, k).subs(al, sp.Rational(9, 10)) for k in (1, 2, 3)]
    assert shifted_target(-1.5, 0.56, 0.9) == pytest.approx([float(c) for c in coeffs],
                                                            abs=1e-14)


def test_solve_rst_identity_and_linear_solve_oracle():
    d = solve_rst(KNOWN, 0.9, 0.01)
    t1, t2, t3 = shifted_target(-1.5, 0.56, 0.9)
    cl = closed_loop_polynomial(KNOWN, d)
    assert np.max(np.abs(cl - [1.0, t1, t2, t3, 0.0])) < 1e-10
    # generic symbolic solve of the same coefficient matching
    r1, s0, s1, s2, q = sp.symbols("r1 s0 s1 s2 q")
    a = 1 + sp.Rational(-3, 2) * q + sp.Rational(14, 25) * q**2
    b = sp.Rational(1, 10) * q + sp.Rational(1, 20) * q**2
    al = sp.Rational(9, 10)
    target = sp.expand((1 + al * q) * (1 - sp.Rational(3, 2) * al * q
                                       + sp.Rational(14, 25) * al**2 * q**2))
    lhs = sp.expand(a * (1 - q) * (1 + r1 * q) + b * (s0 + s1 * q + s2 * q**2))
    sol = sp.solve([sp.Eq(lhs.coeff(q, k), target.coeff(q, k)) for k in range(1, 5)],
                   [r1, s0, s1, s2])
    for name, val in zip(("r1", "s0", "s1", "s2"), (r1, s0, s1, s2)):
        assert getattr(d, name) == pytest.approx(float(sol[val]), rel=1e-10)


def test_solve_rst_rejects_zero_numerator():
    with pytest.raises(DesignError):
        solve_rst(SecondOrderModel(-1.5, 0.56, 0.0, 0.0), 0.9, 0.01)


def test_pid_gains_examples():
    s0, s1, s2 = s_oracle(1.0, 0.5, 0.1, 0.2, 0.01)
    assert pid_gains(0.2, s0, s1, s2, 0.01) == pytest.approx((1.0, 0.5, 0.1), abs=1e-12)
    assert pid_gains(0.3, 0.0, 0.0, 0.0, 0.01) == (0.0, 0.0, 0.0)
    with pytest.raises(DesignError):
        pid_gains(-1.0, 1.0, 0.0, 0.0, 0.01)


def test_s_coefficients_match_definitions():
    assert s_coefficients(1.3, 0.7, 0.02, -0.4, 0.01) == pytest.approx(
        s_oracle(1.3, 0.7, 0.02, -0.4, 0.01), abs=1e-15)


def test_pid_gains_is_symbolic_inverse():
    kp, ki, kd, r1, ts = sp.symbols("kp ki kd r1 ts")
    s0, s1, s2 = s_oracle(kp, ki, kd, r1, ts)
    sol = sp.solve([sp.Eq(sp.Symbol("S0"), s0), sp.Eq(sp.Symbol("S1"), s1),
                    sp.Eq(sp.Symbol("S2"), s2)], [kp, ki, kd], dict=True)[0]
    vals = {"S0": 0.37, "S1": -0.81, "S2": 0.29, r1: -0.3, ts: 0.01}
    subs = {sp.Symbol(k) if isinstance(k, str) else k: v for k, v in vals.items()}
    want = [float(sol[g].subs(subs)) for g in (kp, ki, kd)]
    assert pid_gains(-0.3, 0.37, -0.81, 0.29, 0.01) == pytest.approx(want, rel=1e-12)


def dyadic(lo, hi):
    # multiples of 2^-6: every step of the round trip is exact in binary floating point
    return st.integers(lo * 64, hi * 64).map(lambda n: n / 64)


@given(dyadic(-10, 10), dyadic(-10, 10), dyadic(-1, 1),
       st.integers(-3, 3).map(lambda n: n / 4), st.integers(3, 7).map(lambda n: 2.0**-n))
def test_pid_round_trip_exact(kp, ki, kd, r1, ts):
    got = pid_gains(r1, *s_oracle(kp, ki, kd, r1, ts), ts)
    assert np.max(np.abs(np.subtract(got, (kp, ki, kd)))) <= 1e-12


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-0.1, 0.1),
       st.floats(-0.95, 0.95), st.floats(1e-3, 0.1))
def test_pid_round_trip_float(kp, ki, kd, r1, ts):
    got = pid_gains(r1, *s_oracle(kp, ki, kd, r1, ts), ts)
    # rounding in s0 + s1 + s2 is amplified by 1/ts against terms of size kd/ts
    scale = 1.0 + abs(kp) / ts + abs(kd) / ts**2
    assert np.max(np.abs(np.subtract(got, (kp, ki, kd)))) <= 1e-14 * scale


@pytest.mark.parametrize("alpha", [0.5, 0.9])
def test_pole_placement_roots(alpha):
    rng = np.random.default_rng(11)
    for _ in range(1000):
        model, poles = random_stable_model(rng)
        d = solve_rst(model, alpha, 0.01)
        roots = np.roots(closed_loop_polynomial(model, d))
        expected = [*(alpha * poles), -alpha, 0.0]
        assert match_roots(roots, expected) < 1e-6


def test_pole_placement_deadbeat():
    # four-fold root at the origin: coefficient and root-cluster-mean checks
    # are well conditioned; individual roots of a perturbed 4-fold root are not
    rng = np.random.default_rng(12)
    for _ in range(1000):
        model, _ = random_stable_model(rng)
        cl = closed_loop_polynomial(model, solve_rst(model, 0.0, 0.01))
        assert np.max(np.abs(cl - [1, 0, 0, 0, 0])) < 1e-10
        assert abs(np.mean(np.roots(cl))) < 1e-6


def test_alpha_monotone_spectral_radius():
    rng = np.random.default_rng(13)
    for _ in range(50):
        model, _ = random_stable_model(rng)
        radii = [np.max(np.abs(np.roots(closed_loop_polynomial(model, solve_rst(model, a, 0.01)))))
                 for a in (0.25, 0.5, 0.75, 1.0)]
        assert all(x <= y + 1e-9 for x, y in zip(radii, radii[1:]))


def test_control_step_zero_input_from_rest():
    d = solve_rst(KNOWN, 0.9, 0.01)
    s = ControllerState()
    assert [control_step(d, 0.0, s) for _ in range(5)] == [0.0] * 5


def test_control_step_holds_output_on_zero_error():
    d = RstDesign.from_pid(1.0, 2.0, 0.0, 0.01)
    s = ControllerState()
    for e in (1.0, 0.5):
        u = control_step(d, e, s)
    s.e1 = s.e2 = 0.0
    s.du = 0.0
    assert control_step(d, 0.0, s) == u


def test_deadbeat_closed_loop_settles_in_four_samples():
    d = solve_rst(KNOWN, 0.0, 0.01)
    s = ControllerState()
    y = [0.0, 0.0]
    u = [0.0, 0.0]
    errors = []
    for _ in range(12):
        y_k = -KNOWN.a1 * y[-1] - KNOWN.a2 * y[-2] + KNOWN.b1 * u[-1] + KNOWN.b2 * u[-2]
        y.append(y_k)
        e = 1.0 - y_k
        errors.append(e)
        u.append(control_step(d, e, s))
    assert np.max(np.abs(errors[4:])) < 1e-9


def _recovery(anti_windup):
    d = RstDesign.from_pid(1.0, 10.0, 0.0, 0.01)
    s = ControllerState()
    for _ in range(500):
        control_step(d, 1.0, s, 0.0, 1.0, anti_windup=anti_windup)
    for n in range(1, 10_000):
        if control_step(d, -0.1, s, 0.0, 1.0, anti_windup=anti_windup) < 1.0:
            return n
    return 10_000


def test_anti_windup_recovery():
    assert _recovery(True) <= 10
    assert _recovery(False) >= 50


def test_control_step_non_finite_error_holds_output():
    d = RstDesign.from_pid(1.0, 1.0, 0.0, 0.01)
    s = ControllerState()
    u = control_step(d, 0.3, s)
    assert control_step(d, float("nan"), s) == u and s.fault


def test_control_step_deterministic():
    d = solve_rst(KNOWN, 0.9, 0.01)
    errs = np.random.default_rng(14).standard_normal(200)
    runs = []
    for _ in range(2):
        s = ControllerState()
        runs.append([control_step(d, e, s, -5, 5) for e in errs])
    assert runs[0] == runs[1]


def test_cancel_common_factor():
    # A = (1 - 0.9 q^-1)(1 - 0.5 q^-1), B = 0.2 q^-1 (1 - 0.9 q^-1)
    a = np.poly([0.9, 0.5])
    m = SecondOrderModel(a[1], a[2], 0.2, -0.18)
    red = cancel_common_factor(m)
    assert (red.a1, red.a2, red.b1, red.b2) == pytest.approx((-0.5, 0.0, 0.2, 0.0))
    d = solve_rst(red, 0.9, 0.01)
    cl = closed_loop_polynomial(red, d)
    t1, t2, t3 = shifted_target(red.a1, 0.0, 0.9)
    assert np.max(np.abs(cl - [1.0, t1, t2, t3, 0.0])) < 1e-10
    assert cancel_common_factor(KNOWN) is KNOWN
