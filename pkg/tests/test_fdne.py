import math

import numpy as np
import pytest

from pitchgrid.grid.fdne import (
    Element, EmtSolver, FdneError, FdneModel, FdneState, fdne_fit, fdne_fit_auto, fdne_step,
    multitone, simulate,
)


def zoh_rl(v, r, tau, h):
    """Exact zero-order-hold response of a series RL branch to a sampled voltage."""
    a = math.exp(-h / tau)
    i = np.zeros(len(v))
    for k in range(1, len(v)):
        i[k] = a * i[k - 1] + (1 - a) / r * v[k - 1]
    return i, (-a,), ((1 - a) / r,)


def random_branch(rng, topo):
    """Passive three-element branch behind a series element at the port."""
    r, l, c = rng.uniform(0.01, 1.0), rng.uniform(1e-4, 1e-2), rng.uniform(1e-5, 1e-3)
    if topo == 0:    # series R-L-C
        els = [Element(0, 1, "rl", r, l), Element(1, None, "c", c=c)]
        return els, lambda s: 1 / (r + s * l + 1 / (s * c))
    if topo == 1:    # R in series with L parallel C
        els = [Element(0, 1, "g", 1 / r), Element(1, None, "rl", 0.0, l), Element(1, None, "c", c=c)]
        return els, lambda s: 1 / (r + 1 / (1 / (s * l) + s * c))
    els = [Element(0, 1, "rl", r, l), Element(1, None, "c", c=c), Element(1, None, "g", 1 / r)]
    return els, lambda s: 1 / (r + s * l + 1 / (s * c + 1 / r))


def trapezoidal_response(y_of_s, freqs, h):
    # the sweep discretises each element with the trapezoidal rule: s -> (2/h)(1-z^-1)/(1+z^-1)
    z_inv = np.exp(-2j * np.pi * np.asarray(freqs) * h)
    return y_of_s(2.0 / h * (1 - z_inv) / (1 + z_inv))


def test_resistor_order_one():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(400)
    m = fdne_fit(v, 0.25 * v, 1)
    assert m.b0 == pytest.approx(0.25, abs=1e-8)
    assert abs(m.a[0]) < 1e-8 and abs(m.b[0]) < 1e-8


def test_unit_delay():
    rng = np.random.default_rng(1)
    v = rng.standard_normal(400)
    i = np.r_[0.0, v[:-1]]
    m = fdne_fit(v, i, 1, direct=False)
    assert abs(m.a[0]) < 1e-8 and m.b[0] == pytest.approx(1.0, abs=1e-8)


def test_rl_branch_matches_zoh_discretisation():
    h, r = 1e-3, 1.0
    tau = 10 * h
    v = np.random.default_rng(2).standard_normal(2000)
    i, a, b = zoh_rl(v, r, tau, h)
    m = fdne_fit(v, i, 1, dt=h)
    assert abs(m.a[0] - a[0]) < 1e-6
    assert abs(m.b[0] - b[0]) < 1e-6
    assert abs(m.b0) < 1e-6


def test_rl_step_response_matches_analytic():
    h, r = 1e-3, 1.0
    tau = 10 * h
    a = math.exp(-h / tau)
    m = FdneModel((-a,), ((1 - a) / r,), 0.0, h)
    i = simulate(m, np.ones(100))
    t = np.arange(100) * h
    # ZOH sampling of a step is exact, so samples equal (1 - e^{-t/tau})/R one step late
    analytic = (1 - np.exp(-np.maximum(t, 0.0) / tau)) / r
    assert np.max(np.abs(i - analytic)) < 1e-12


def test_fdne_step_examples():
    st = FdneState.from_model(FdneModel((0.0,), (1.0,), 0.0))
    assert fdne_step(st, 0.0) == 0.0
    out = [fdne_step(st, x) for x in (1.0, 0.0, 0.0)]
    assert out == [0.0, 1.0, 0.0]


def test_init_steady_is_fixed_point():
    m = FdneModel((-0.5, 0.1), (0.3, 0.2), 0.4)
    st = FdneState.from_model(m)
    i0 = st.init_steady(2.0)
    assert fdne_step(st, 2.0) == pytest.approx(i0, abs=1e-14)


def test_unstable_fit_rejected():
    # growing data from an unstable recursion cannot give a stable FDNE
    v = np.ones(200)
    i = np.zeros(200)
    for k in range(1, 200):
        i[k] = 1.05 * i[k - 1] + 0.01 * v[k - 1]
    with pytest.raises(FdneError):
        fdne_fit(v, i, 1, direct=False)


def test_random_three_element_branches_order_eight():
    h = 1e-4
    rng = np.random.default_rng(3)
    for n in range(15):
        els, y_of_s = random_branch(rng, n % 3)
        solver = EmtSolver(2, els, [0], h)
        v, freqs = multitone(int(0.2 / h), h, 10.0, 2000.0, 40, seed=n)
        i = solver.run(v[:, None])[:, 0]
        m = fdne_fit(v, i, 8, dt=h)
        ref = trapezoidal_response(y_of_s, freqs, h)
        assert np.max(np.abs(m.frequency_response(freqs) - ref) / np.abs(ref)) < 0.01


def test_emt_solver_matches_trapezoidal_oracle():
    # time-domain companion solve vs the bilinear admittance on a single tone
    h = 1e-4
    els, y_of_s = random_branch(np.random.default_rng(4), 0)
    f = 50.0
    t = np.arange(40000) * h
    v = np.sin(2 * np.pi * f * t)
    i = EmtSolver(2, els, [0], h).run(v[:, None])[:, 0]
    y = trapezoidal_response(y_of_s, [f], h)[0]
    tail = slice(30000, None)
    want = np.abs(y) * np.sin(2 * np.pi * f * t[tail] + np.angle(y))
    assert np.max(np.abs(i[tail] - want)) < 1e-3 * np.abs(y)


@pytest.mark.parametrize("kind", ["rl", "rc"])
def test_passive_fit_real_part_non_negative(kind):
    h = 1e-4
    if kind == "rl":
        els = [Element(0, None, "rl", 0.5, 2e-3)]
    else:
        els = [Element(0, 1, "g", 2.0), Element(1, None, "c", c=5e-4)]
    v, freqs = multitone(int(0.2 / h), h, 10.0, 2000.0, 40, seed=5)
    i = EmtSolver(2 if kind == "rc" else 1, els, [0], h).run(v[:, None])[:, 0]
    m = fdne_fit_auto(v, i, order=8, dt=h)
    band = np.geomspace(freqs[0], freqs[-1], 400)
    assert np.min(m.frequency_response(band).real) >= -1e-6


def test_auto_order_reaches_tolerance():
    h = 1e-4
    els, _ = random_branch(np.random.default_rng(6), 2)
    v, _ = multitone(int(0.2 / h), h, 10.0, 2000.0, 40, seed=6)
    i = EmtSolver(2, els, [0], h).run(v[:, None])[:, 0]
    m = fdne_fit_auto(v, i, order=1, max_order=20, dt=h)
    assert m.fit_error < 0.01 and 1 <= m.order <= 20


def test_shifted_coefficients_act_on_envelopes():
    # a real filter on Re(X e^{j w t}) equals Re of the rotated filter on X e^{j w t}
    m = FdneModel((-0.6, 0.08), (0.3, -0.1), 0.2, 1e-3)
    w0 = 2 * np.pi * 60
    t = np.arange(3000) * 1e-3
    env = (1.0 + 0.3 * np.sin(2 * np.pi * 0.5 * t)) * np.exp(0.2j)
    real_out = simulate(m, (env * np.exp(1j * w0 * t)).real)
    st = FdneState.from_model(m, omega0=w0)
    st_conj = FdneState.from_model(m, omega0=-w0)
    out = np.array([st.advance(x) for x in env]) * np.exp(1j * w0 * t)
    out_c = np.array([st_conj.advance(np.conj(x)) for x in env]) * np.exp(-1j * w0 * t)
    assert np.max(np.abs(real_out - 0.5 * (out + out_c).real)) < 1e-12
