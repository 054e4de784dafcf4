"""Continuous Lagrange-d'Alembert flow, integrated independently of the
discrete machinery.

The multipliers are eliminated by differentiating the constraints once,

    [ M   -W^T ] [ qdd ]   [ L_q - L_vq v - L_vt ]
    [ W    0   ] [ lam ] = [ -(dW/dt) v          ]

with ``M = L_vv`` and ``W = omega(t, q)``. The resulting ODE is integrated
with DOP853 in chunks; velocities are projected back onto ``ker W`` at every
chunk boundary.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from ..discretize import ContinuousLagrangian
from ..errors import AdmissibilityError, OracleError
from ..fd import fd_jacobian

#: Tolerance on omega(q0) . v0 for admissible initial data.
INITIAL_CONSTRAINT_TOL = 1e-12


@dataclass(frozen=True)
class Invariant:
    name: str
    fn: Callable
    conserved: bool = True


@dataclass(frozen=True)
class ContinuousSystem:
    lagrangian: ContinuousLagrangian
    n: int
    omega: Optional[Callable] = None
    known_invariants: tuple = ()

    @property
    def m(self):
        return 0 if self.omega is None else np.shape(self.omega(0.0, np.zeros(self.n)))[0]

    def constraint_matrix(self, t, q):
        if self.omega is None:
            return np.zeros((0, self.n))
        return np.asarray(self.omega(t, q), dtype=float).reshape(-1, self.n)

    def energy(self, t, q, v):
        L = self.lagrangian
        return float(L.momentum(t, q, v) @ v - L(t, q, v))


def accelerations(cs, t, q, v):
    """Return ``(qdd, lam)`` of the constrained Euler-Lagrange equations."""
    n = cs.n
    L = cs.lagrangian
    _, lq, _ = L.partials(t, q, v)
    x = np.concatenate(([t], q, v))
    J = fd_jacobian(lambda y: L.momentum(y[0], y[1 : n + 1], y[n + 1 :]), x, order=4)
    lvt = J[:, 0]
    lvq = J[:, 1 : n + 1]
    M = J[:, n + 1 :]
    rhs = lq - lvq @ v - lvt
    W = cs.constraint_matrix(t, q)
    m = W.shape[0]
    if m == 0:
        return np.linalg.solve(M, rhs), np.zeros(0)
    # Five-point derivative of omega along the flow direction (1, v).
    eps = 1e-3 / max(1.0, float(np.max(np.abs(v))))
    Wk = [cs.constraint_matrix(t + k * eps, q + k * eps * v) for k in (-2, -1, 1, 2)]
    dW = (Wk[0] - 8.0 * Wk[1] + 8.0 * Wk[2] - Wk[3]) / (12.0 * eps)
    K = np.block([[M, -W.T], [W, np.zeros((m, m))]])
    sol = np.linalg.solve(K, np.concatenate((rhs, -dW @ v)))
    return sol[:n], sol[n:]


def project_velocity(W, v):
    if W.shape[0] == 0:
        return v
    return v - W.T @ np.linalg.solve(W @ W.T, W @ v)


@dataclass
class ReferenceSolution:
    """Dense continuous trajectory assembled from projected chunks."""

    system: ContinuousSystem
    t0: float
    t_final: float
    segments: list = field(default_factory=list)
    max_constraint_drift: float = 0.0

    def state(self, t):
        n = self.system.n
        if not (min(self.t0, self.t_final) - 1e-12 <= t <= max(self.t0, self.t_final) + 1e-12):
            raise ValueError(f"t={t} outside [{self.t0}, {self.t_final}]")
        for ta, tb, interp in self.segments:
            if min(ta, tb) <= t <= max(ta, tb):
                y = interp(t)
                return y[:n], y[n:]
        ta, tb, interp = self.segments[-1]
        y = interp(t)
        return y[:n], y[n:]

    def __call__(self, t):
        return self.state(t)[0]

    def velocity(self, t):
        return self.state(t)[1]

    def multiplier(self, t):
        q, v = self.state(t)
        return accelerations(self.system, t, q, v)[1]


def solve_reference(cs, t0, q0, v0, t_final, accuracy=1e-11, chunk=0.25, max_step=np.inf):
    """Integrate the continuous nonholonomic flow from ``(t0, q0, v0)``."""
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    W0 = cs.constraint_matrix(t0, q0)
    if W0.shape[0] and np.max(np.abs(W0 @ v0)) > INITIAL_CONSTRAINT_TOL:
        raise AdmissibilityError(f"initial velocity violates constraints by {np.max(np.abs(W0 @ v0)):.3e}")
    n = cs.n

    def rhs(t, y):
        qdd, _ = accelerations(cs, t, y[:n], y[n:])
        return np.concatenate((y[n:], qdd))

    out = ReferenceSolution(cs, float(t0), float(t_final))
    span = t_final - t0
    if span == 0:
        y = np.concatenate((q0, v0))
        out.segments.append((t0, t0, lambda t, y=y: y))
        return out
    count = max(1, int(np.ceil(abs(span) / chunk)))
    edges = np.linspace(t0, t_final, count + 1)
    y = np.concatenate((q0, v0))
    for ta, tb in zip(edges[:-1], edges[1:]):
        sol = solve_ivp(
            rhs, (ta, tb), y, method="DOP853", rtol=accuracy, atol=accuracy,
            dense_output=True, max_step=max_step,
        )
        if not sol.success:
            raise OracleError(f"reference integration failed on [{ta}, {tb}]: {sol.message}")
        out.segments.append((ta, tb, sol.sol))
        y = sol.y[:, -1].copy()
        W = cs.constraint_matrix(tb, y[:n])
        if W.shape[0]:
            out.max_constraint_drift = max(out.max_constraint_drift, float(np.max(np.abs(W @ y[n:]))))
            y[n:] = project_velocity(W, y[n:])
    return out
