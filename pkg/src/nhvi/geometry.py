"""Verifiers for symmetry and symplectic structure of the discrete flows.

All tangent vectors and covectors on the pair space use the packed ordering
``[t0, q0, t1, q1]``.
"""

import numpy as np

from .calculus import theta_minus_packed, theta_plus_packed, two_form_matrix
from .core import ExtendedPair, sample_pairs, unpack
from .errors import ConvergenceError, InvarianceError, NHVIError, PathError, SectionError
from .stepper import solve_step

#: A discrete Lagrangian is declared invariant when the sampled residual is below this.
INVARIANCE_TOL = 1e-8
#: Allowed disagreement between the Theta+ and Theta- pairings of a momentum.
MOMENTUM_AGREEMENT_TOL = 1e-8
SECTION_TOL = 1e-10
#: Directional FD step for the invariance pairing, as a fraction of the pair's time step.
INVARIANCE_FD_FRACTION = 1e-2
#: FD step for differentiating the step map, as a fraction of the pair's time step.
STEP_MAP_FD_FRACTION = 1e-3


def pair_field(action, xi, x):
    """``xi`` generator on the pair space (diagonal action), packed."""
    n = x.size // 2 - 1
    return np.concatenate(
        (action.field(xi, x[0], x[1 : n + 1]), action.field(xi, x[n + 1], x[n + 2 :]))
    )


def lagrangian_invariance(L_d, action, samples=50, seed=0, n=None, h_range=(0.01, 1.0)):
    """Worst ``|<dL_d, xi_{Q x Q}>|`` over random pairs and algebra basis elements.

    The pairing is a five-point difference of the value along the generator
    itself, so no analytic partials are involved and an exact symmetry only
    leaves roundoff of order ``|L_d| eps / step``.
    """
    if n is None:
        raise ValueError("configuration dimension n is required")
    rng = np.random.default_rng(seed)
    eye = np.eye(action.dim_g)
    worst = 0.0
    for t0, q0, t1, q1 in sample_pairs(rng, n, samples, h_range):
        x = np.concatenate(([t0], q0, [t1], q1))
        step = INVARIANCE_FD_FRACTION * (t1 - t0)
        for e in eye:
            v = pair_field(action, e, x)
            vals = [L_d.value(*unpack(x + k * step * v)) for k in _FIVE_POINT_OFFSETS]
            worst = max(worst, abs(float(_five_point(vals, step))))
    return worst


def is_invariant(L_d, action, n, samples=50, seed=0):
    return lagrangian_invariance(L_d, action, samples, seed, n) <= INVARIANCE_TOL


def _momentum_pairings(L_d, action, pair, xi):
    x = pair.as_array()
    v = pair_field(action, xi, x)
    return float(theta_plus_packed(L_d, x) @ v), float(theta_minus_packed(L_d, x) @ v)


def discrete_momentum(L_d, action, pair, xi):
    """``<Theta+(pair), xi_Q(p1)>``; must agree with ``<Theta-(pair), xi_Q(p0)>``."""
    jp, jm = _momentum_pairings(L_d, action, pair, np.atleast_1d(np.asarray(xi, dtype=float)))
    gap = abs(jp - jm)
    if gap > MOMENTUM_AGREEMENT_TOL * max(1.0, abs(jp)):
        raise InvarianceError(f"Theta+/Theta- momentum pairings differ by {gap:.3e}")
    return jp


def momentum_gap(L_d, action, pair, xi):
    jp, jm = _momentum_pairings(L_d, action, pair, np.atleast_1d(np.asarray(xi, dtype=float)))
    return jp - jm


def _section_generator(sys, action, section, t, q):
    coeffs = section.coefficients(t, q)
    v = action.field(coeffs, t, q)
    if sys.m:
        r = sys.omega(t, q) @ v[1:]
        scale = max(1.0, float(np.linalg.norm(v[1:])))
        if np.max(np.abs(r)) > SECTION_TOL * scale:
            raise SectionError(
                f"section {section.name!r} leaves D at t={t}: residual {np.max(np.abs(r)):.3e}"
            )
    return v


def nonholonomic_momentum(sys, action, pair, section):
    """``<Theta+(pair), (xi_tilde(p1))_Q(p1)>``."""
    _, _, d3, d4 = sys.lagrangian.partials(*pair.args())
    v = _section_generator(sys, action, section, pair.p1.t, pair.p1.q)
    return float(d3 * v[0] + np.asarray(d4) @ v[1:])


def momentum_equation_residual(sys, action, pair01, pair12, section):
    """``|J(12) - J(01) - <Theta+(12), (xi(p2) - xi(p1))_Q(p2)>|``."""
    if pair01.p1 != pair12.p0:
        raise PathError("pairs are not consecutive")
    j01 = nonholonomic_momentum(sys, action, pair01, section)
    j12 = nonholonomic_momentum(sys, action, pair12, section)
    p1, p2 = pair12.p0, pair12.p1
    dxi = section.coefficients(p2.t, p2.q) - section.coefficients(p1.t, p1.q)
    _, _, d3, d4 = sys.lagrangian.partials(*pair12.args())
    v = action.field(dxi, p2.t, p2.q)
    rhs = float(d3 * v[0] + np.asarray(d4) @ v[1:])
    return abs(j12 - j01 - rhs)


def equivariance_residual(L_d, action, pair, xi, g):
    """``|J(g . pair) - J(pair)|`` for an abelian translation action."""
    if action.group_kind != "abelian-translation":
        raise NotImplementedError("equivariance is only checked for abelian translation groups")
    t0, q0 = action.act(g, pair.p0.t, pair.p0.q)
    t1, q1 = action.act(g, pair.p1.t, pair.p1.q)
    moved = ExtendedPair.of(t0, q0, t1, q1)
    return abs(discrete_momentum(L_d, action, moved, xi) - discrete_momentum(L_d, action, pair, xi))


class StepMap:
    """The discrete flow ``x = (t0, q0, t1, q1) -> (t1, q1, t2, q2)`` near a base pair.

    Every evaluation re-solves the implicit step with the base solution as
    the starting guess and a tolerance ``cfg.tol / 100``; iterates that stall
    at the rounding floor below ``cfg.tol`` are accepted.
    """

    def __init__(self, sys, pair, cfg):
        self.sys = sys
        self.n = sys.n
        self.cfg = cfg
        self.tol = cfg.tol / 100.0
        self.x0 = pair.as_array()
        y, _ = solve_step(
            sys.lagrangian, sys.constraints, sys.n, pair.args(), cfg, tol=self.tol, accept_tol=cfg.tol
        )
        self.y0 = y

    def solve(self, x):
        n = self.n
        args = (x[0], x[1 : n + 1], x[n + 1], x[n + 2 :])
        y, _ = solve_step(
            self.sys.lagrangian, self.sys.constraints, n, args, self.cfg,
            guess=self.y0, tol=self.tol, accept_tol=self.cfg.tol,
        )
        return y

    def image(self, x, y=None):
        n = self.n
        y = self.solve(x) if y is None else y
        return np.concatenate(([x[n + 1]], x[n + 2 :], y[: n + 1]))

    def beta(self, x, y=None):
        """``lambda(x) . omega(t1, q1)`` placed in the ``q1`` slot."""
        n = self.n
        out = np.zeros_like(x)
        if self.sys.m:
            y = self.solve(x) if y is None else y
            out[n + 2 :] = y[n + 1 :] @ self.sys.omega(x[n + 1], x[n + 2 :])
        return out

    def _stencil(self, x):
        n = self.n
        return np.full(x.size, STEP_MAP_FD_FRACTION * abs(x[n + 1] - x[0]))

    def _adapted_stencil(self):
        """Per-coordinate steps that move the solution by about ``fraction * h``.

        Off the admissible set the step map can amplify perturbations by
        orders of magnitude; a pilot solve measures the gain per coordinate.
        """
        x = self.x0
        eps = self._stencil(x)
        out = eps.copy()
        for i in range(x.size):
            e = eps[i]
            for _ in range(6):
                xs = x.copy()
                xs[i] += e
                try:
                    y = self.solve(xs)
                except NHVIError:
                    e /= 10.0
                    continue
                gain = float(np.max(np.abs(y[: self.n + 1] - self.y0[: self.n + 1]))) / e
                out[i] = eps[i] / max(1.0, gain)
                break
            else:
                raise ConvergenceError(f"step map unresolvable along coordinate {i}", np.inf, 0)
        return out

    def derivatives(self, eps=None):
        """``(D Phi, D beta)`` at the base pair by five-point central differences."""
        x = self.x0
        eps = self._adapted_stencil() if eps is None else eps
        dphi = np.empty((x.size, x.size))
        dbeta = np.empty((x.size, x.size))
        for i in range(x.size):
            vals = []
            for k in _FIVE_POINT_OFFSETS:
                xs = x.copy()
                xs[i] += k * eps[i]
                y = self.solve(xs)
                vals.append((self.image(xs, y), self.beta(xs, y)))
            dphi[:, i] = _five_point([v[0] for v in vals], eps[i])
            dbeta[:, i] = _five_point([v[1] for v in vals], eps[i])
        return dphi, dbeta


# The step map has large third derivatives where the time equation is weakly
# determined; a fourth-order stencil keeps truncation below the FD noise.
_FIVE_POINT_OFFSETS = (-2, -1, 1, 2)


def _five_point(vals, eps):
    fm2, fm1, fp1, fp2 = vals
    return (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * eps)


def symplectic_evolution_matrix(sys, pair, cfg):
    """Matrix of ``Phi* Omega - Omega - d beta`` at ``pair``."""
    phi = StepMap(sys, pair, cfg)
    dphi, dbeta = phi.derivatives()
    x = phi.x0
    image = phi.image(x, phi.y0)
    W0 = two_form_matrix(sys.lagrangian, x)
    W1 = two_form_matrix(sys.lagrangian, image)
    dB = dbeta.T - dbeta
    return dphi.T @ W1 @ dphi - W0 - dB


def symplectic_evolution_residual(sys, pair, cfg):
    """Worst basis-pair entry of ``Phi* Omega - Omega - d beta``."""
    return float(np.max(np.abs(symplectic_evolution_matrix(sys, pair, cfg))))


def restricted_action_check(sys, pair, cfg):
    """Compare ``d(L_d + L_d o Phi)`` with ``beta + Phi* Theta+ - Theta-``."""
    phi = StepMap(sys, pair, cfg)
    L = sys.lagrangian
    n = sys.n
    x = phi.x0

    def s_tilde(z):
        img = phi.image(z)
        return L.value(z[0], z[1 : n + 1], z[n + 1], z[n + 2 :]) + L.value(
            img[0], img[1 : n + 1], img[n + 1], img[n + 2 :]
        )

    eps = phi._adapted_stencil()
    grad = np.array(
        [
            _five_point([s_tilde(x + k * eps[i] * e) for k in _FIVE_POINT_OFFSETS], eps[i])
            for i, e in enumerate(np.eye(x.size))
        ]
    )
    dphi, _ = phi.derivatives(eps)
    rhs = phi.beta(x, phi.y0) + dphi.T @ theta_plus_packed(L, phi.image(x, phi.y0)) - theta_minus_packed(L, x)
    return float(np.max(np.abs(grad - rhs)))
