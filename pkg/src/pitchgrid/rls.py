"""Recursive least-squares identification of a discrete transfer function.

Model (q is the backward shift)::

    y(k) (1 + a1 q^-1 + ... + an q^-n) = (b0 + b1 q^-1 + ... + bn q^-n) u(k)

``b0`` is only present when ``direct=True``. The parameter vector is laid
out as ``[a1..an, (b0,) b1..bn]`` and the regressor as
``[-y(k-1)..-y(k-n), (u(k),) u(k-1)..u(k-n)]``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np


class NotReadyError(RuntimeError):
    """Raised when the model is requested before the regressor is primed."""


@dataclass(frozen=True)
class TransferFunction:
    """Discrete transfer function ``(b0 + b1 z^-1 ...) / (1 + a1 z^-1 ...)``."""

    a: tuple
    b: tuple        # b1..bn
    b0: float = 0.0

    @property
    def order(self):
        return len(self.a)

    def frequency_response(self, omega_dt):
        """Evaluate at ``z = exp(j*omega_dt)``; ``omega_dt`` may be an array."""
        z_inv = np.exp(-1j * np.asarray(omega_dt, dtype=float))
        num = self.b0 + sum(bk * z_inv ** (k + 1) for k, bk in enumerate(self.b))
        den = 1.0 + sum(ak * z_inv ** (k + 1) for k, ak in enumerate(self.a))
        return num / den

    def poles(self):
        return np.roots(np.r_[1.0, self.a]) if self.a else np.array([])


class RecursiveLeastSquares:
    """Exponentially weighted RLS on a rolling input/output history.

    The first ``order`` samples only fill the regressor; parameter updates
    start with sample ``order + 1``.
    """

    def __init__(self, order, p0_scale=1e6, gamma=0.98, direct=False, cov_limit=None):
        if int(order) != order or order < 1:
            raise ValueError(f"order must be a positive integer, got {order}")
        if not 0.0 < gamma <= 1.0:
            raise ValueError(f"forgetting factor must lie in (0, 1], got {gamma}")
        if not p0_scale > 0:
            raise ValueError(f"p0_scale must be positive, got {p0_scale}")
        if cov_limit is not None and not cov_limit > 0:
            raise ValueError(f"cov_limit must be positive, got {cov_limit}")
        self.order = int(order)
        self.cov_limit = cov_limit
        self.gamma = float(gamma)
        self.direct = bool(direct)
        n_par = 2 * self.order + (1 if direct else 0)
        self.theta = np.zeros(n_par)
        self.cov = np.eye(n_par) * float(p0_scale)
        self._y_hist = deque(maxlen=self.order)
        self._u_hist = deque(maxlen=self.order)
        self.updates = 0

    @property
    def ready(self):
        return len(self._y_hist) == self.order

    def regressor(self, u_k=0.0):
        """Regressor for the next sample; history is most-recent first."""
        parts = [-np.fromiter(self._y_hist, float, self.order)]
        if self.direct:
            parts.append([u_k])
        parts.append(np.fromiter(self._u_hist, float, self.order))
        return np.concatenate(parts)

    def predict(self, u_k=0.0):
        if not self.ready:
            raise NotReadyError("regressor history not primed")
        return float(self.regressor(u_k) @ self.theta)

    def update(self, u_k, y_k, adapt=True):
        """Absorb one sample; return the a-priori prediction error.

        During warm-up the history is filled and 0.0 is returned. With
        ``adapt=False`` the sample only enters the regressor history. When
        ``cov_limit`` is set and the covariance trace exceeds it, that step
        is taken without forgetting so an unexcited loop cannot blow up P.
        """
        if not (math.isfinite(u_k) and math.isfinite(y_k)):
            raise ValueError(f"non-finite sample u={u_k!r}, y={y_k!r}")
        err = 0.0
        if self.ready and adapt:
            x = self.regressor(u_k)
            px = self.cov @ x
            gamma = self.gamma
            if self.cov_limit is not None and np.trace(self.cov) > self.cov_limit:
                gamma = 1.0
            denom = gamma + x @ px
            gain = px / denom
            err = float(y_k - x @ self.theta)
            self.theta = self.theta + gain * err
            cov = (self.cov - np.outer(gain, px)) / gamma
            self.cov = 0.5 * (cov + cov.T)
            self.updates += 1
        self._y_hist.appendleft(float(y_k))
        self._u_hist.appendleft(float(u_k))
        return err

    def identified_model(self):
        if not self.ready:
            raise NotReadyError("identification has not started")
        n = self.order
        a = tuple(float(v) for v in self.theta[:n])
        if self.direct:
            return TransferFunction(a, tuple(float(v) for v in self.theta[n + 1:]), float(self.theta[n]))
        return TransferFunction(a, tuple(float(v) for v in self.theta[n:]))


def rls_init(order_n, p0_scale=1e6, gamma=0.98, direct=False):
    return RecursiveLeastSquares(order_n, p0_scale, gamma, direct)


def rls_update(state: RecursiveLeastSquares, u_k, y_k):
    err = state.update(u_k, y_k)
    return state, err


def identified_model(state: RecursiveLeastSquares):
    return state.identified_model()

