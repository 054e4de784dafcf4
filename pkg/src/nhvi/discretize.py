"""Midpoint discretization of continuous Lagrangians and constraint forms."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import ConstraintSet, DiscreteLagrangian
from .errors import DegenerateIntervalError
from .fd import DEFAULT_STEP_SCALE, fd_gradient, fd_jacobian

__all__ = [
    "ContinuousLagrangian",
    "midpoint_lagrangian",
    "midpoint_constraints",
    "fd_gradient",
    "fd_jacobian",
    "MIN_INTERVAL",
]

#: Builders refuse pairs whose time interval is shorter than this.
MIN_INTERVAL = 1e-10


@dataclass(frozen=True)
class ContinuousLagrangian:
    """``L(t, q, v)`` with optional analytic partials.

    ``dt`` returns a scalar, ``dq`` and ``dv`` vectors of length n.
    """

    value: Callable
    dt: Optional[Callable] = None
    dq: Optional[Callable] = None
    dv: Optional[Callable] = None

    @property
    def has_partials(self):
        return self.dt is not None and self.dq is not None and self.dv is not None

    def __call__(self, t, q, v):
        return float(self.value(t, q, v))

    def partials(self, t, q, v):
        """``(L_t, L_q, L_v)``, analytic where provided, central FD otherwise."""
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.dt is not None:
            lt = float(self.dt(t, q, v))
        else:
            lt = fd_gradient(lambda s: self.value(s[0], q, v), [t])[0]
        if self.dq is not None:
            lq = np.asarray(self.dq(t, q, v), dtype=float)
        else:
            lq = fd_gradient(lambda x: self.value(t, x, v), q)
        if self.dv is not None:
            lv = np.asarray(self.dv(t, q, v), dtype=float)
        else:
            lv = fd_gradient(lambda x: self.value(t, q, x), v)
        return lt, lq, lv

    def momentum(self, t, q, v):
        return self.partials(t, q, v)[2]


def _interval(t0, t1):
    h = t1 - t0
    if abs(h) < MIN_INTERVAL:
        raise DegenerateIntervalError(f"time interval {h!r} below {MIN_INTERVAL}")
    return h


def midpoint_lagrangian(L, name=""):
    """``L_d = h L((t0+t1)/2, (q0+q1)/2, (q1-q0)/h)`` with ``h = t1 - t0``.

    The four partials follow from the chain rule when ``L`` carries its own
    partials; otherwise the discrete Lagrangian differentiates numerically.
    """

    def value(t0, q0, t1, q1):
        h = _interval(t0, t1)
        q0 = np.asarray(q0, dtype=float)
        q1 = np.asarray(q1, dtype=float)
        return h * L.value(0.5 * (t0 + t1), 0.5 * (q0 + q1), (q1 - q0) / h)

    def gradient(t0, q0, t1, q1):
        h = _interval(t0, t1)
        q0 = np.asarray(q0, dtype=float)
        q1 = np.asarray(q1, dtype=float)
        tm = 0.5 * (t0 + t1)
        qm = 0.5 * (q0 + q1)
        v = (q1 - q0) / h
        lval = L.value(tm, qm, v)
        lt, lq, lv = L.partials(tm, qm, v)
        pv = float(lv @ v)
        half = 0.5 * h
        d1 = -lval + half * lt + pv
        d3 = lval + half * lt - pv
        d2 = half * lq - lv
        d4 = half * lq + lv
        return d1, d2, d3, d4

    return DiscreteLagrangian(value, gradient if L.has_partials else None, name=name)


def midpoint_constraints(omega, m):
    """Discrete constraints ``omega_d = omega(t_mid, q_mid) . (q1 - q0)``.

    ``omega(t, q)`` returns the m x n matrix of one-form components. The
    diagonal ``(t, q, t, q)`` is annihilated exactly since ``q1 - q0 = 0``.
    """

    def matrix(t, q):
        return np.asarray(omega(t, q), dtype=float).reshape(m, -1)

    def omega_d(t0, q0, t1, q1):
        q0 = np.asarray(q0, dtype=float)
        q1 = np.asarray(q1, dtype=float)
        return matrix(0.5 * (t0 + t1), 0.5 * (q0 + q1)) @ (q1 - q0)

    return ConstraintSet(m=m, omega=matrix, omega_d=omega_d)


def check_continuous_partials(L, t, q, v, step_scale=DEFAULT_STEP_SCALE):
    """Worst relative gap between analytic partials of ``L`` and central FD."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    fd = ContinuousLagrangian(L.value)
    exact = L.partials(t, q, v)
    approx = fd.partials(t, q, v)
    worst = 0.0
    for a, b in zip(exact, approx):
        a = np.atleast_1d(a)
        b = np.atleast_1d(b)
        worst = max(worst, float(np.max(np.abs(a - b))) / max(float(np.max(np.abs(b))), 1e-3))
    return worst
