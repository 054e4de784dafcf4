"""Action sums, the discrete one-forms, the D_DEL map, energies and the two-form.

Covectors on R x Q are stored as ``CovectorExt(dt, dq)``; covectors on the
pair space use the packed ordering ``[t0, q0, t1, q1]``.
"""

from dataclasses import dataclass

import numpy as np

from .core import ExtendedPair, check_path
from .discretize import MIN_INTERVAL
from .errors import DegenerateIntervalError, PathError
from .fd import fd_jacobian


@dataclass(frozen=True)
class CovectorExt:
    """A one-form value ``dt * dt + dq . dq`` at an extended point."""

    dt: float
    dq: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dt", float(self.dt))
        dq = np.array(self.dq, dtype=float).reshape(-1)
        dq.setflags(write=False)
        object.__setattr__(self, "dq", dq)

    def as_array(self):
        return np.concatenate(([self.dt], self.dq))

    def pair_with(self, dt, dq):
        return self.dt * dt + float(self.dq @ np.asarray(dq, dtype=float))


def _require_interval(pair):
    if abs(pair.h) < MIN_INTERVAL:
        raise DegenerateIntervalError(f"degenerate interval at t={pair.p0.t}")


def action_sum(L_d, path):
    """Sum of ``L_d`` over consecutive points of ``path``."""
    check_path(path)
    return sum(L_d.value(a.t, a.q, b.t, b.q) for a, b in zip(path[:-1], path[1:]))


def theta_plus(L_d, pair):
    """``D4 L_d dq1 + D3 L_d dt1``, a covector at ``pair.p1``."""
    _require_interval(pair)
    _, _, d3, d4 = L_d.partials(*pair.args())
    return CovectorExt(d3, d4)


def theta_minus(L_d, pair):
    """``-D2 L_d dq0 - D1 L_d dt0``, a covector at ``pair.p0``."""
    _require_interval(pair)
    d1, d2, _, _ = L_d.partials(*pair.args())
    return CovectorExt(-d1, -np.asarray(d2))


def theta_plus_packed(L_d, x):
    """Theta+ as a covector on the pair space, packed ``[t0, q0, t1, q1]``."""
    n = x.size // 2 - 1
    _, _, d3, d4 = L_d.partials(x[0], x[1 : n + 1], x[n + 1], x[n + 2 :])
    out = np.zeros_like(x)
    out[n + 1] = d3
    out[n + 2 :] = d4
    return out


def theta_minus_packed(L_d, x):
    n = x.size // 2 - 1
    d1, d2, _, _ = L_d.partials(x[0], x[1 : n + 1], x[n + 1], x[n + 2 :])
    out = np.zeros_like(x)
    out[0] = -d1
    out[1 : n + 1] = -np.asarray(d2)
    return out


def differential(L_d, pair):
    """``dL_d`` packed on the pair space."""
    d1, d2, d3, d4 = L_d.partials(*pair.args())
    return np.concatenate(([d1], d2, [d3], d4))


def d_del(L_d, triple):
    """The discrete Euler-Lagrange covector at the middle point of ``triple``."""
    a, b, c = triple
    if not (a.t < b.t < c.t):
        raise PathError("triple times must be strictly increasing")
    _, _, d3, d4 = L_d.partials(a.t, a.q, b.t, b.q)
    d1, d2, _, _ = L_d.partials(b.t, b.q, c.t, c.q)
    return CovectorExt(d3 + d1, np.asarray(d4) + np.asarray(d2))


def energy_plus(L_d, pair):
    return -L_d.partials(*pair.args())[2]


def energy_minus(L_d, pair):
    return L_d.partials(*pair.args())[0]


#: Step of the five-point stencil used for two-forms, as a fraction of the
#: pair's time step: one-forms on the pair space vary on that scale.
TWO_FORM_FD_FRACTION = 1e-3


def exterior_derivative_matrix(form, x, steps, order=4):
    """Matrix ``B`` with ``d(form)(u, w) = u^T B w`` for a packed one-form field.

    With ``J[j, i] = d form_j / d x_i`` one has ``d(form)(u, w) = u^T (J^T - J) w``.
    """
    J = fd_jacobian(form, x, order=order, steps=steps)
    return J.T - J


def two_form_matrix(L_d, pair, which="plus", fraction=TWO_FORM_FD_FRACTION):
    """Matrix of ``Omega = -d Theta+`` (or ``-d Theta-``) at ``pair``."""
    x = pair.as_array() if isinstance(pair, ExtendedPair) else np.asarray(pair, dtype=float)
    n = x.size // 2 - 1
    h = abs(x[n + 1] - x[0])
    if h < MIN_INTERVAL:
        raise DegenerateIntervalError(f"degenerate interval at t={x[0]}")
    form = theta_plus_packed if which == "plus" else theta_minus_packed
    return -exterior_derivative_matrix(lambda y: form(L_d, y), x, fraction * h)


def omega_two_form(L_d, pair, u, w, which="plus"):
    """``Omega_{L_d}(u, w)`` for tangent vectors ``u``, ``w`` of the pair space."""
    W = two_form_matrix(L_d, pair, which)
    return float(np.asarray(u, dtype=float) @ W @ np.asarray(w, dtype=float))
