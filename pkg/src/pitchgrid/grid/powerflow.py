"""Newton-Raphson power flow on a nodal admittance matrix."""
from __future__ import annotations

import numpy as np

PQ, PV, SLACK = 0, 1, 2


class PowerFlowError(RuntimeError):
    pass


def power_flow(y, bus_type, p_spec, q_spec, v_spec, v0=None, tol=1e-10, max_iter=30):
    """Solve for complex bus voltages.

    ``p_spec``/``q_spec`` are net injections in p.u.; ``v_spec`` holds the
    magnitude for PV and slack buses. Slack angles are taken from ``v0``
    (zero by default).
    """
    y = np.asarray(y, complex)
    bus_type = np.asarray(bus_type)
    n = len(bus_type)
    if not np.any(bus_type == SLACK):
        raise PowerFlowError("no slack bus")
    v = np.ones(n, complex) if v0 is None else np.array(v0, complex)
    fixed_mag = bus_type != PQ
    v[fixed_mag] = np.asarray(v_spec)[fixed_mag] * np.exp(1j * np.angle(v[fixed_mag]))
    pvpq = np.flatnonzero(bus_type != SLACK)
    pq = np.flatnonzero(bus_type == PQ)
    s_spec = np.asarray(p_spec) + 1j * np.asarray(q_spec)
    for _ in range(max_iter):
        i_bus = y @ v
        mis = v * np.conj(i_bus) - s_spec
        f = np.r_[mis.real[pvpq], mis.imag[pq]]
        if np.max(np.abs(f), initial=0.0) < tol:
            return v
        vm = np.abs(v)
        diag_v = np.diag(v)
        diag_i = np.diag(i_bus)
        ds_dva = 1j * diag_v @ np.conj(diag_i - y @ diag_v)
        ds_dvm = diag_v @ np.conj(y @ np.diag(v / vm)) + np.conj(diag_i) @ np.diag(v / vm)
        jac = np.block([
            [ds_dva.real[np.ix_(pvpq, pvpq)], ds_dvm.real[np.ix_(pvpq, pq)]],
            [ds_dva.imag[np.ix_(pq, pvpq)], ds_dvm.imag[np.ix_(pq, pq)]],
        ])
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError("singular power-flow Jacobian") from exc
        va = np.angle(v)
        va[pvpq] += dx[: len(pvpq)]
        vm[pq] += dx[len(pvpq):]
        v = vm * np.exp(1j * va)
    raise PowerFlowError(f"power flow did not converge in {max_iter} iterations")
