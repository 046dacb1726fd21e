"""Fixed-step phasor co-simulation of turbines, machines and the reduced grid.

The external area is either absent (full quasi-static network), reduced
(TSA + FDNE) or detailed (every element as an electromagnetic companion
model). Per step: events, external-grid injection (FDNE history + TSA source),
network solve with constant-power turbine injections, turbine control and
mechanics, synchronous-machine swing integration, record.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ..grid.dynamic import DynamicPhasorNetwork
from ..grid.equivalent import FdneBank, machine_terminal_voltages
from ..grid.powerflow import PQ, PV, SLACK, PowerFlowError, power_flow
from ..ref_speed import PccMeasurement, RefSpeedEstimator, electrical_power, estimate_ref_speed
from ..rls import RecursiveLeastSquares
from ..str_pid import (ControllerState, DesignError, cancel_common_factor, RstDesign, SecondOrderModel, control_step,
                       solve_rst)
from ..turbine import (LumpedDrivetrain, TurbineState, aerodynamic_power, mppt_power,
                       operating_point, pitch_actuator_step)
from .scenario import FaultEvent, Scenario, WindEvent, tie_reactance

log = logging.getLogger(__name__)

PITCH_ENGAGED_DEG = 0.05   # pitch above minimum that marks the speed-limiting region
IDENT_BAND = 0.05          # p.u. below rated speed still used for identification


class SimulationError(RuntimeError):
    def __init__(self, message, step=None, time=None):
        self.step, self.time = step, time
        where = f" at step {step} (t={time:.6g} s)" if step is not None else ""
        super().__init__(f"{message}{where}")


# --------------------------------------------------------------------------- network solve

class NetworkSolver:
    """LU-cached nodal solve with constant-power current injections.

    ``pq`` lists node indices that inject active power ``P`` at unity power
    factor, subject to a current magnitude limit. Their voltages satisfy
    ``V = V_open + Z I(V)`` with ``Z`` the impedance columns of those nodes;
    this is solved by Newton's method in real coordinates, warm-started
    from the previous solution.
    """

    def __init__(self, y, pq=(), tol=1e-10, max_iter=50):
        y = np.asarray(y, complex)
        if not np.all(np.isfinite(y)):
            raise SimulationError("non-finite admittance matrix")
        if np.linalg.cond(y) > 1e14:
            raise SimulationError("singular network admittance matrix")
        self.lu = lu_factor(y)
        self.pq = list(pq)
        self.tol, self.max_iter = tol, max_iter
        if self.pq:
            m = len(self.pq)
            unit = np.zeros((y.shape[0], m), complex)
            unit[self.pq, range(m)] = 1.0
            self.z_cols = lu_solve(self.lu, unit)
            z = self.z_cols[self.pq, :]
            self.z_pq = z
            zr = np.empty((2 * m, 2 * m))
            zr[0::2, 0::2], zr[0::2, 1::2] = z.real, -z.imag
            zr[1::2, 0::2], zr[1::2, 1::2] = z.imag, z.real
            self._z_real = zr

    @staticmethod
    def injection(v_w, p, i_max):
        """Unity power factor current ``min(P/|V|, I_max)`` along ``V``."""
        r = np.abs(v_w)
        r_safe = np.maximum(r, 1e-12)
        c = np.minimum(p / r_safe, i_max)
        return c * v_w / r_safe, c, r_safe

    def solve(self, i_inj, p_pq=(), i_max=(), v_guess=None):
        v = lu_solve(self.lu, np.asarray(i_inj, complex))
        if not self.pq:
            return v, np.zeros(0, complex)
        p = np.asarray(p_pq, float).real
        i_max = np.asarray(i_max, float)
        m = len(self.pq)
        v_open = v[self.pq]
        v_w = np.array(v_guess if v_guess is not None else v_open, complex)
        if np.any(np.abs(v_w) < 1e-6):
            v_w = np.where(np.abs(v_w) < 1e-6, 1.0 + 0j, v_w)
        i_w = self._newton(v_open, v_w, p, i_max)
        if i_w is None:
            i_w = self._held_angle(v_open, v_w, p, i_max)
        return v + self.z_cols @ i_w, i_w

    def _newton(self, v_open, v_w, p, i_max):
        m = len(self.pq)
        for _ in range(self.max_iter):
            i_w, c, r = self.injection(v_w, p, i_max)
            f = v_w - v_open - self.z_pq @ i_w
            if np.max(np.abs(f)) < self.tol:
                return i_w
            jg = np.zeros((2 * m, 2 * m))
            for j in range(m):
                u = np.array([v_w[j].real, v_w[j].imag]) / r[j]
                uu = np.outer(u, u)
                dc = -p[j] / r[j] ** 2 if p[j] / r[j] < i_max[j] else 0.0
                jg[2 * j:2 * j + 2, 2 * j:2 * j + 2] = dc * uu + c[j] / r[j] * (np.eye(2) - uu)
            jac = np.eye(2 * m) - self._z_real @ jg
            fr = np.empty(2 * m)
            fr[0::2], fr[1::2] = f.real, f.imag
            try:
                dx = np.linalg.solve(jac, -fr)
            except np.linalg.LinAlgError:
                return None
            v_w = v_w + dx[0::2] + 1j * dx[1::2]
            if not np.all(np.isfinite(v_w)) or np.any(np.abs(v_w) < 1e-9):
                return None
        return None

    def _held_angle(self, v_open, v_prev, p, i_max):
        """Current angle held at the previous voltage angle (converter PLL lag).

        Used when no unity power factor solution exists, e.g. a deep fault
        behind a reactive network. Only the magnitudes ``c`` are iterated.
        """
        u = v_prev / np.maximum(np.abs(v_prev), 1e-12)
        c = np.zeros(len(self.pq))
        for _ in range(20 * self.max_iter):
            v_w = v_open + self.z_pq @ (c * u)
            target = np.minimum(p / np.maximum(np.abs(v_w), 1e-12), i_max)
            if np.max(np.abs(target - c)) < self.tol:
                return target * u
            c = 0.5 * (c + target)
        raise SimulationError("constant-power injection iteration did not converge")


def network_solve(y, injections, pq=(), s_pq=(), i_max=None):
    """One-off nodal solution ``Y V = I`` (see :class:`NetworkSolver`)."""
    solver = NetworkSolver(y, pq)
    s_pq = np.asarray(s_pq, complex).real
    if i_max is None:
        i_max = np.full(len(solver.pq), np.inf)
    return solver.solve(injections, s_pq, i_max)[0]


# --------------------------------------------------------------------------- state

@dataclass
class Machine:
    name: str
    h_sys: float            # inertia on the system base, s
    d_sys: float            # damping on the system base
    y_int: complex
    e_mag: float = 1.0
    delta: float = 0.0
    dw: float = 0.0         # speed deviation p.u.
    p_mech: float = 0.0
    p_elec: float = 0.0

    @property
    def emf(self):
        return self.e_mag * complex(math.cos(self.delta), math.sin(self.delta))


@dataclass
class TurbineRuntime:
    site: object
    idx: int
    tie_idx: int
    x_line: float
    state: TurbineState
    drivetrain: LumpedDrivetrain
    p_conv: float                    # converter output command after lag, p.u.
    beta_cmd: float
    ctrl: ControllerState
    design: RstDesign
    rls: RecursiveLeastSquares | None
    estimator: RefSpeedEstimator
    omega_ref: float
    wind_events: list = field(default_factory=list)
    p_del: float = 0.0               # delivered electrical power, turbine p.u.
    beta0: float = 0.0
    adapted: int = 0
    rng: np.random.Generator | None = None

    def wind(self, t):
        prof = self.site.wind
        for t_ev, p in self.wind_events:
            if t >= t_ev:
                prof = p
        return prof.speed(t)


@dataclass
class SummaryMetrics:
    max_omega_r: float
    max_p_ratio: float
    max_dbeta_dt: float
    max_torque: float
    min_pcc_voltage: float
    violations: dict

    def as_row(self):
        row = {
            "max_omega_r_pu": self.max_omega_r,
            "max_p_over_rated": self.max_p_ratio,
            "max_dbeta_dt_deg_s": self.max_dbeta_dt,
            "max_torque_pu": self.max_torque,
            "min_pcc_voltage_pu": self.min_pcc_voltage,
        }
        row.update({f"violations_{k}": v for k, v in self.violations.items()})
        return row


@dataclass
class RunResult:
    scenario: str
    mode: str
    columns: list
    data: np.ndarray
    summary: SummaryMetrics

    def column(self, name):
        return self.data[:, self.columns.index(name)]

    @property
    def records(self):
        """One dict per step (StepRecord view)."""
        return [dict(zip(self.columns, row)) for row in self.data.tolist()]


# --------------------------------------------------------------------------- simulation

class Simulation:
    def __init__(self, scenario: Scenario):
        self.sc = sc = scenario
        net = sc.network
        self.base = net.base_mva
        self.w0 = 2.0 * math.pi * net.frequency_hz
        self.ids = net.bus_ids
        self.idx = net.index()
        self.n_ctrl = int(round(sc.controller.ts / sc.dt))
        self.n_tsa = sc.tsa_every or self.n_ctrl
        self.red = sc.reduced
        n = len(self.ids)

        y0 = net.admittance(include_loads=True, include_generators=True)
        self.bank = None
        if self.red is not None:
            self.b_idx = [self.idx[b] for b in self.red.boundary]
            if self.red.fdne:
                self.bank = FdneBank(self.red)
                y0[np.ix_(self.b_idx, self.b_idx)] += self.bank.b0
            else:
                y0[np.ix_(self.b_idx, self.b_idx)] += self.red.static_admittance()
            self.m_transfer = self.red.source_transfer()
        self.dyn = None
        if sc.external is not None:
            self.dyn = DynamicPhasorNetwork(sc.external, net.boundary_buses, sc.dt)
            self.b_idx = [self.idx[b] for b in self.dyn.boundary]
            y0[np.ix_(self.b_idx, self.b_idx)] += self.dyn.y_inst
        self.y0 = y0
        self.gens = list(net.generators)
        self.g_idx = [self.idx[g.bus] for g in self.gens]
        self.faults = [ev for ev in sc.events if isinstance(ev, FaultEvent)]
        self.fault_steps = [(int(round(f.time / sc.dt)), int(round((f.time + f.duration) / sc.dt)), f)
                            for f in self.faults]
        self._solvers = {}
        self.w_idx = [self.idx[tb.bus] for tb in sc.turbines]
        self.i_max = np.array([sc.current_limit * tb.rating_mva / self.base for tb in sc.turbines])
        if n == 0:
            raise SimulationError("empty network")
        self._initialize()

    # ----------------------------------------------------------------- init
    def _initialize(self):
        sc = self.sc
        net = sc.network
        base = self.base
        self.turbines = []
        p_wtg = np.zeros(len(self.ids))
        for tb in sc.turbines:
            v0 = tb.wind.speed(0.0)
            try:
                omega, beta = operating_point(tb.params, v0)
            except ValueError as exc:
                raise SimulationError(f"turbine {tb.name}: {exc}") from None
            p0 = mppt_power(tb.params, omega)
            p_wtg[self.idx[tb.bus]] += p0 * tb.rated_mw / base
            x_line = tie_reactance(net, tb.bus, tb.tie_bus)
            ctrl_cfg = sc.controller
            pi = RstDesign.from_pid(-ctrl_cfg.kp, -ctrl_cfg.ki, -ctrl_cfg.kd, ctrl_cfg.ts)
            rls = None
            if ctrl_cfg.mode == "adaptive_str":
                rls = RecursiveLeastSquares(2, ctrl_cfg.p0_scale, ctrl_cfg.gamma,
                                            cov_limit=ctrl_cfg.cov_limit)
            est = RefSpeedEstimator()
            rt = TurbineRuntime(
                site=tb, idx=self.idx[tb.bus], tie_idx=self.idx[tb.tie_bus], x_line=x_line,
                state=TurbineState(omega, beta, p0, p0 / omega),
                drivetrain=LumpedDrivetrain(tb.params.inertia_h),
                p_conv=p0, beta_cmd=beta, ctrl=ControllerState(u=beta), design=pi, rls=rls,
                estimator=est, omega_ref=omega,
                wind_events=sorted((ev.time, ev.profile) for ev in sc.events
                                   if isinstance(ev, WindEvent) and ev.turbine == tb.name),
                p_del=p0, beta0=beta,
                rng=np.random.default_rng([sc.seed, len(self.turbines)]),
            )
            self.turbines.append(rt)

        # power flow on study network (+ reduced external blocks)
        n = len(self.ids)
        y_pf = net.admittance(include_loads=True, include_generators=False)
        bus_type = np.full(n, PQ)
        p_spec = p_wtg.copy()
        v_spec = np.ones(n)
        for g, i in zip(self.gens, self.g_idx):
            bus_type[i] = SLACK if g.slack else PV
            p_spec[i] += g.p / base
            v_spec[i] = g.v
        m_nodes = []
        if self.red is not None:
            nm = len(self.red.machines)
            m_nodes = list(range(n, n + nm))
            big = np.zeros((n + nm, n + nm), complex)
            big[:n, :n] = y_pf
            sel = self.b_idx + m_nodes
            big[np.ix_(sel, sel)] += self.red.passive_blocks()
            y_pf = big
            bus_type = np.r_[bus_type, [SLACK if g.slack else PV for g in self.red.machines]]
            p_spec = np.r_[p_spec, [g.p / base for g in self.red.machines]]
            v_spec = np.r_[v_spec, [g.v for g in self.red.machines]]
        ext_ids = []
        if self.dyn is not None:
            ext = sc.external
            ext_ids = [b for b in ext.bus_ids if b not in self.idx]
            node = {b: self.idx.get(b, n + ext_ids.index(b) if b in ext_ids else None)
                    for b in ext.bus_ids}
            big = np.zeros((n + len(ext_ids),) * 2, complex)
            big[:n, :n] = y_pf
            sel = [node[b] for b in ext.bus_ids]
            big[np.ix_(sel, sel)] += ext.admittance(include_loads=True, include_generators=False)
            y_pf = big
            extra_type = np.full(len(ext_ids), PQ)
            extra_p = np.zeros(len(ext_ids))
            extra_v = np.ones(len(ext_ids))
            for g in ext.generators:
                j = node[g.bus] - n
                extra_type[j] = SLACK if g.slack else PV
                extra_p[j] += g.p / base
                extra_v[j] = g.v
            bus_type = np.r_[bus_type, extra_type]
            p_spec = np.r_[p_spec, extra_p]
            v_spec = np.r_[v_spec, extra_v]
        if not np.any(bus_type == SLACK):
            first = int(np.flatnonzero(bus_type == PV)[0]) if np.any(bus_type == PV) else None
            if first is None:
                raise SimulationError("no synchronous machine to act as slack")
            bus_type[first] = SLACK
        try:
            v = power_flow(y_pf, bus_type, p_spec, np.zeros(len(p_spec)), v_spec)
        except PowerFlowError as exc:
            raise SimulationError(f"initial power flow failed: {exc}") from None
        s_inj = v * np.conj(y_pf @ v)

        self.machines = []
        for g, i in zip(self.gens, self.g_idx):
            self.machines.append(self._machine(g, v[i], s_inj[i] - p_wtg[i]))
        self.ext_machines = []
        if self.red is not None:
            for g, node in zip(self.red.machines, m_nodes):
                self.ext_machines.append(self._machine(g, v[node], s_inj[node]))
            v_b = v[self.b_idx]
            i_b_pf = (self.red.passive_blocks() @ v[self.b_idx + m_nodes])[: len(self.b_idx)]
            i_fdne = self.bank.init_steady(v_b) if self.bank else self.red.static_admittance() @ v_b
            y_int = self.red.y_int
            i_e = y_int * np.array([m.emf for m in self.ext_machines])
            target = i_b_pf - i_fdne
            if len(i_e):
                i_e = i_e + np.linalg.pinv(self.m_transfer) @ (target - self.m_transfer @ i_e)
            self.i_src = self.m_transfer @ i_e if len(i_e) else np.zeros(len(self.b_idx), complex)
            v_e = machine_terminal_voltages(self.red, v_b, i_e) if len(i_e) else []
            for m, ie, ve in zip(self.ext_machines, i_e, v_e):
                e = ie / m.y_int
                m.e_mag, m.delta = abs(e), math.atan2(e.imag, e.real)
                m.p_mech = m.p_elec = (e * np.conj(m.y_int * (e - ve))).real
        if self.dyn is not None:
            for g in sc.external.generators:
                i = node[g.bus]
                self.ext_machines.append(self._machine(g, v[i], s_inj[i]))
            self.dyn.init_steady({b: v[node[b]] for b in sc.external.bus_ids},
                                 np.array([m.emf for m in self.ext_machines]))
        self.v = v[: len(self.ids)].copy()
        self.v_init = self.v.copy()

    def _machine(self, g, v_t, s_g):
        y_int = g.internal_admittance(self.base)
        i_g = np.conj(s_g / v_t)
        e = v_t + i_g / y_int
        p = (e * np.conj(i_g)).real
        return Machine(
            name=g.name or f"G{g.bus}",
            h_sys=g.inertia_sys(self.base),
            d_sys=g.damping * g.rating / self.base,
            y_int=y_int, e_mag=abs(e), delta=math.atan2(e.imag, e.real),
            p_mech=p, p_elec=p,
        )

    # ----------------------------------------------------------------- helpers
    def _solver(self, active):
        key = tuple(active)
        if key not in self._solvers:
            y = self.y0.copy()
            for f in active:
                i = self.idx[f.bus]
                y[i, i] += f.admittance
            self._solvers[key] = NetworkSolver(y, self.w_idx)
        return self._solvers[key]

    def _columns(self):
        cols = ["time_s"]
        for b in self.ids:
            cols += [f"bus{b}_vm_pu", f"bus{b}_va_rad"]
        for rt in self.turbines:
            nm = rt.site.name
            cols += [f"{nm}_wind_ms", f"{nm}_omega_r_pu", f"{nm}_beta_deg", f"{nm}_p_mw",
                     f"{nm}_torque_pu", f"{nm}_omega_ref_pu", f"{nm}_kp", f"{nm}_ki",
                     f"{nm}_kd"]
            if self.sc.trace_theta and rt.rls is not None:
                cols += [f"{nm}_theta_a1", f"{nm}_theta_a2", f"{nm}_theta_b1", f"{nm}_theta_b2"]
        for m in self.machines + self.ext_machines:
            cols.append(f"{m.name}_speed_pu")
        return cols

    # ----------------------------------------------------------------- control
    def _control_tick(self, rt: TurbineRuntime):
        sc, cfg = self.sc, self.sc.controller
        prm = rt.site.params
        v_pcc, v_tie = self.v[rt.idx], self.v[rt.tie_idx]
        meas = PccMeasurement(abs(v_pcc), abs(v_tie), math.atan2(v_pcc.imag, v_pcc.real),
                              math.atan2(v_tie.imag, v_tie.real), rt.x_line)
        p_e = electrical_power(meas) * self.base / rt.site.rated_mw
        rt.omega_ref = estimate_ref_speed(rt.estimator, p_e, prm)
        if rt.state.beta > prm.pitch_min + PITCH_ENGAGED_DEG:
            # pitched blades mean the speed-limiting region: with the MPPT
            # estimate the error would vanish at any speed and never release pitch
            rt.omega_ref = prm.rated_speed_pu
        omega = rt.state.omega_r
        if cfg.mode == "none":
            return
        if rt.rls is not None:
            y = omega - rt.omega_ref
            # below rated the reference follows the rotor, so y carries no
            # information on pitch; identify only while the reference is clamped
            clamped = rt.omega_ref >= prm.rated_speed_pu - 1e-9
            active = -IDENT_BAND <= y <= cfg.rls_gate and clamped
            rt.rls.update(rt.state.beta, y, adapt=active)
            if active and rt.rls.updates >= cfg.warmup_updates:
                a1, a2 = rt.rls.theta[0], rt.rls.theta[1]
                b1, b2 = rt.rls.theta[2], rt.rls.theta[3]
                try:
                    model = cancel_common_factor(SecondOrderModel(a1, a2, b1, b2))
                    d = solve_rst(model, cfg.alpha, cfg.ts)
                except DesignError:
                    d = None
                # more pitch must slow the rotor: negative first Markov parameter
                if d is not None and b1 < 0 and self._usable(d):
                    rt.design = d
                    rt.adapted += 1
        err = rt.omega_ref - omega
        step = prm.pitch_rate_limit * cfg.ts
        lo = max(prm.pitch_min, rt.ctrl.u - step)
        hi = min(prm.pitch_max, rt.ctrl.u + step)
        rt.beta_cmd = control_step(rt.design, err, rt.ctrl, lo, hi)
        if rt.rls is not None and cfg.dither_deg > 0 and active:
            # closed-loop data alone are collinear; excite with a random-sign dither
            rt.beta_cmd += cfg.dither_deg * (1.0 if rt.rng.random() < 0.5 else -1.0)

    def _usable(self, d: RstDesign):
        lim = self.sc.controller.gain_limit
        gains = (d.kp_gain, d.ki_gain, d.kd_gain, d.s0, d.s1, d.s2)
        if not all(math.isfinite(g) for g in gains):
            return False
        # more overspeed must ask for more pitch: negative proportional and integral gains
        return d.ki_gain < 0 and d.kp_gain <= 0 and max(abs(d.kp_gain), abs(d.ki_gain), abs(d.kd_gain)) <= lim \
            and abs(d.r1) < 1.0

    # ----------------------------------------------------------------- run
    def run(self):
        sc = self.sc
        dt = sc.dt
        n_steps = sc.n_steps
        cols = self._columns()
        data = np.empty((n_steps, len(cols)))
        nb = len(self.ids)
        lag = 1.0 - math.exp(-dt / sc.converter_tau)
        for k in range(n_steps):
            t = k * dt
            try:
                self._step(k, t, dt, lag)
            except (SimulationError, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
                raise SimulationError(str(exc), step=k, time=t) from exc
            row = data[k]
            row[0] = (k + 1) * dt
            vm = np.abs(self.v)
            va = np.angle(self.v)
            row[1:1 + 2 * nb:2] = vm
            row[2:2 + 2 * nb:2] = va
            c = 1 + 2 * nb
            for rt in self.turbines:
                st = rt.state
                vals = [rt.wind(t), st.omega_r, st.beta, rt.p_del * rt.site.rated_mw,
                        st.torque_mech, rt.omega_ref, rt.design.kp_gain, rt.design.ki_gain,
                        rt.design.kd_gain]
                if sc.trace_theta and rt.rls is not None:
                    vals += list(rt.rls.theta[:4])
                row[c:c + len(vals)] = vals
                c += len(vals)
            for m in self.machines + self.ext_machines:
                row[c] = 1.0 + m.dw
                c += 1
        return RunResult(sc.name, sc.controller.mode, cols, data, self._summary(cols, data))

    def _step(self, k, t, dt, lag):
        sc = self.sc
        active = [f for (k0, k1, f) in self.fault_steps if k0 <= k < k1]
        solver = self._solver(active)
        i_inj = np.zeros(len(self.ids), complex)
        for m, i in zip(self.machines, self.g_idx):
            i_inj[i] += m.y_int * m.emf
        if self.red is not None:
            if k % self.n_tsa == 0 and self.ext_machines:
                i_e = np.array([m.y_int * m.emf for m in self.ext_machines])
                self.i_src = self.m_transfer @ i_e
                v_e = machine_terminal_voltages(self.red, self.v[self.b_idx], i_e)
                for m, ve in zip(self.ext_machines, v_e):
                    e = m.emf
                    m.p_elec = (e * np.conj(m.y_int * (e - ve))).real
            hist = self.bank.history() if self.bank else 0.0
            i_inj[self.b_idx] -= hist + self.i_src
        if self.dyn is not None:
            emf_ext = np.array([m.emf for m in self.ext_machines])
            i_inj[self.b_idx] -= self.dyn.source_current(emf_ext)
        s_w = np.array([rt.p_conv * rt.site.rated_mw / self.base for rt in self.turbines])
        v, i_w = solver.solve(i_inj, s_w, self.i_max, v_guess=self.v[self.w_idx])
        self.v = v
        if self.bank is not None:
            self.bank.advance(v[self.b_idx])
        if self.dyn is not None:
            self.dyn.advance(v[self.b_idx], emf_ext)
            for m, e, i_m in zip(self.ext_machines, emf_ext, self.dyn.machine_currents()):
                m.p_elec = (e * np.conj(i_m)).real

        tick = k % self.n_ctrl == 0
        for j, rt in enumerate(self.turbines):
            prm = rt.site.params
            rt.p_del = (v[rt.idx] * np.conj(i_w[j])).real * self.base / rt.site.rated_mw
            if tick:
                self._control_tick(rt)
            beta = pitch_actuator_step(rt.state.beta, rt.beta_cmd, dt, prm)
            p_m = aerodynamic_power(prm, rt.state.omega_r, beta, rt.wind(t))[0]
            st = rt.drivetrain.step(replace(rt.state, beta=beta), p_m, rt.p_del, dt)
            rt.state = st
            p_cmd = min(mppt_power(prm, st.omega_r), sc.p_max)
            rt.p_conv += lag * (p_cmd - rt.p_conv)

        for m, i in zip(self.machines, self.g_idx):
            e = m.emf
            m.p_elec = (e * np.conj(m.y_int * (e - v[i]))).real
        for m in self.machines + self.ext_machines:
            m.dw += dt * (m.p_mech - m.p_elec - m.d_sys * m.dw) / (2.0 * m.h_sys)
            m.delta += dt * self.w0 * m.dw
        if not np.all(np.isfinite(v)):
            raise SimulationError("non-finite bus voltage")

    def _summary(self, cols, data):
        sc = self.sc
        speed_v = power_v = rate_v = torque_v = 0
        max_w = max_p = max_rate = max_tq = 0.0
        min_v = math.inf
        for rt in self.turbines:
            nm = rt.site.name
            prm = rt.site.params
            w = data[:, cols.index(f"{nm}_omega_r_pu")]
            p = data[:, cols.index(f"{nm}_p_mw")] / (rt.site.rating_mva)
            b = data[:, cols.index(f"{nm}_beta_deg")]
            tq = data[:, cols.index(f"{nm}_torque_pu")]
            rate = np.abs(np.diff(np.r_[rt.beta0, b])) / sc.dt
            vm = data[:, cols.index(f"bus{rt.site.bus}_vm_pu")]
            max_w = max(max_w, float(w.max()))
            max_p = max(max_p, float(p.max()))
            max_rate = max(max_rate, float(rate.max()))
            max_tq = max(max_tq, float(tq.max()))
            min_v = min(min_v, float(vm.min()))
            speed_v += int(np.sum(w > prm.speed_limit_pu))
            power_v += int(np.sum(p > 1.05))
            rate_v += int(np.sum(rate > prm.pitch_rate_limit * (1.0 + 1e-9)))
            rated_torque = prm.generator_rating_pu / prm.rated_speed_pu
            torque_v += int(np.sum(tq > 1.05 * rated_torque))
        return SummaryMetrics(max_w, max_p, max_rate, max_tq,
                              min_v if math.isfinite(min_v) else float("nan"),
                              {"speed": speed_v, "power": power_v, "pitch_rate": rate_v,
                               "torque": torque_v})


def run(scenario: Scenario):
    """Run ``scenario`` to ``t_end``; returns a :class:`RunResult`."""
    return Simulation(scenario).run()
