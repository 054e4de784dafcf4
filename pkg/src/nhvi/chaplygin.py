"""Generalized Chaplygin systems with an abelian translation symmetry.

The configuration is split into group coordinates ``g`` (``group_indices``)
and base coordinates ``r``. Invariance lets the discrete Lagrangian be
written as ``ell_d(t0, r0, t1, r1, f)`` with ``f = g1 - g0``, and the
discrete constraints solve for ``f = transition(t0, r0, t1, r1)``. The reduced
Lagrangian is ``L*_d = ell_d(.., transition(..))`` and the reduced step is
forced by

    F-(k, k+1) = ell_f (df/dr_k - A(r_k))        (at the first point)
    F+(k-1, k) = ell_f (df/dr_k + A(r_k))        (at the second point)

with ``A = omega_g^{-1} omega_r`` the local connection. The time slots carry
``ell_f df/dt`` and vanish for time-independent transitions.
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .calculus import CovectorExt
from .core import (
    DiscreteLagrangian,
    ExtendedPair,
    ExtendedPoint,
    SolverConfig,
    StepStats,
    Trajectory,
    sample_pairs,
)
from .discretize import MIN_INTERVAL
from .errors import (
    ChaplyginAssumptionError,
    DegenerateIntervalError,
    NearZeroEnergyWarning,
    NHVIError,
    NotChaplyginError,
    PathError,
    StepFailure,
    TimeCollapseError,
)
from .fd import fd_jacobian
from .stepper import NEAR_ZERO_ENERGY, StepResult, make_admissible, newton_solve

HORIZONTALITY_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-10
TRANSITION_TOL = 1e-14


@dataclass(frozen=True)
class ChaplyginSpec:
    system: object
    group: object
    group_indices: tuple
    base_indices: tuple
    connection_local: Callable
    transition: Callable
    transition_jacobian: Callable
    reduced_lagrangian: DiscreteLagrangian
    right_translation: Optional[Callable] = None
    left_translation: Optional[Callable] = None
    checks: dict = field(default_factory=dict)

    @property
    def base_dim(self):
        return len(self.base_indices)

    @property
    def dim_g(self):
        return len(self.group_indices)

    def embed(self, r, g):
        q = np.empty(self.system.n)
        q[list(self.base_indices)] = r
        q[list(self.group_indices)] = g
        return q

    def project(self, q):
        return np.asarray(q, dtype=float)[list(self.base_indices)]

    def group_part(self, q):
        return np.asarray(q, dtype=float)[list(self.group_indices)]

    def ell(self, t0, r0, t1, r1, f):
        return self.system.lagrangian.value(
            t0, self.embed(r0, np.zeros(self.dim_g)), t1, self.embed(r1, f)
        )

    def ell_partials(self, t0, r0, t1, r1, f):
        """Partials of ``ell_d`` in ``(t0, r0, t1, r1, f)``."""
        d1, d2, d3, d4 = self.system.lagrangian.partials(
            t0, self.embed(r0, np.zeros(self.dim_g)), t1, self.embed(r1, f)
        )
        b, g = list(self.base_indices), list(self.group_indices)
        return d1, np.asarray(d2)[b], d3, np.asarray(d4)[b], np.asarray(d4)[g]


def _connection(sys, base_indices, group_indices):
    b, g = list(base_indices), list(group_indices)
    dim_g = len(group_indices)

    def A(t, r):
        q = np.empty(sys.n)
        q[b] = r
        q[g] = 0.0
        W = sys.omega(t, q)
        return np.linalg.solve(W[:, g], W[:, b])

    return A


def _generic_transition(sys, base_indices, group_indices, A):
    b, g = list(base_indices), list(group_indices)
    cfg = SolverConfig(tol=TRANSITION_TOL)

    def transition(t0, r0, t1, r1):
        r0 = np.asarray(r0, dtype=float)
        r1 = np.asarray(r1, dtype=float)
        q0 = np.empty(sys.n)
        q0[b] = r0
        q0[g] = 0.0

        def residual(f):
            q1 = np.empty(sys.n)
            q1[b] = r1
            q1[g] = f
            return sys.omega_d(t0, q0, t1, q1)

        guess = -A(0.5 * (t0 + t1), 0.5 * (r0 + r1)) @ (r1 - r0)
        return newton_solve(residual, guess, cfg).x

    return transition


def _fd_transition_jacobian(transition):
    def jac(t0, r0, t1, r1):
        k = len(r0)
        x = np.concatenate(([t0], r0, [t1], r1))
        J = fd_jacobian(lambda y: transition(y[0], y[1 : k + 1], y[k + 1], y[k + 2 :]), x)
        return J[:, 0], J[:, 1 : k + 1], J[:, k + 1], J[:, k + 2 :]

    return jac


def _reduced_lagrangian(spec_parts):
    ell_partials, embed_value, transition, tjac = spec_parts

    def value(t0, r0, t1, r1):
        return embed_value(t0, r0, t1, r1, transition(t0, r0, t1, r1))

    def gradient(t0, r0, t1, r1):
        f = transition(t0, r0, t1, r1)
        d1, d2, d3, d4, lf = ell_partials(t0, r0, t1, r1, f)
        ft0, fr0, ft1, fr1 = tjac(t0, r0, t1, r1)
        return (
            d1 + lf @ ft0,
            d2 + lf @ fr0,
            d3 + lf @ ft1,
            d4 + lf @ fr1,
        )

    return value, gradient


def _sample_base_points(rng, spec, count):
    return [(rng.uniform(-1, 1), rng.uniform(-1, 1, spec.base_dim)) for _ in range(count)]


def build_chaplygin(
    sys,
    action,
    group_indices,
    transition=None,
    transition_jacobian=None,
    samples=20,
    seed=0,
    right_translation=None,
    left_translation=None,
):
    """Reduce ``sys`` by the translation ``action`` on ``group_indices``.

    Raises :class:`NotChaplyginError` if some symmetry direction satisfies the
    constraints somewhere on the sample, :class:`ChaplyginAssumptionError` if
    a structural hypothesis (dimension count, horizontality, reconstruction)
    fails.
    """
    group_indices = tuple(int(i) for i in group_indices)
    if action.group_kind != "abelian-translation":
        raise ChaplyginAssumptionError("only abelian translation groups can be reduced automatically")
    if not action.time_trivial:
        raise ChaplyginAssumptionError("the group must act trivially on time")
    if action.coordinates is None or set(action.coordinates) != set(group_indices):
        raise ChaplyginAssumptionError("group indices must be exactly the translated coordinates")
    group_indices = tuple(action.coordinates)
    base_indices = tuple(i for i in range(sys.n) if i not in group_indices)
    dim_g = len(group_indices)

    rng = np.random.default_rng(seed)
    pts = [(rng.uniform(-1, 1), rng.uniform(-1, 1, sys.n)) for _ in range(samples)]
    eye = np.eye(dim_g)
    for t, q in pts:
        W = sys.omega(t, q)
        V = np.column_stack([action.field(e, t, q)[1:] for e in eye])
        WV = W @ V
        if WV.size == 0 or np.linalg.matrix_rank(WV, tol=1e-10) < dim_g:
            raise NotChaplyginError(
                f"symmetry directions compatible with the constraints exist at q={q}"
            )
    if sys.m != dim_g:
        raise ChaplyginAssumptionError(
            f"dimension count fails: {sys.m} constraints for a {dim_g}-dimensional group"
        )

    A = _connection(sys, base_indices, group_indices)
    if transition is None:
        transition = _generic_transition(sys, base_indices, group_indices, A)
        transition_jacobian = None
    if transition_jacobian is None:
        transition_jacobian = _fd_transition_jacobian(transition)

    proto = ChaplyginSpec(
        sys, action, group_indices, base_indices, A, transition, transition_jacobian,
        DiscreteLagrangian(lambda *a: 0.0),
    )
    value, gradient = _reduced_lagrangian(
        (proto.ell_partials, proto.ell, transition, transition_jacobian)
    )
    L_red = DiscreteLagrangian(value, gradient, name=f"{sys.name}/G")
    spec = ChaplyginSpec(
        sys, action, group_indices, base_indices, A, transition, transition_jacobian, L_red,
        right_translation, left_translation,
    )

    # horizontality of the lift rdot -> (-A rdot, rdot)
    worst_h = 0.0
    for t, r in _sample_base_points(rng, spec, samples):
        rdot = rng.uniform(-1, 1, spec.base_dim)
        qdot = spec.embed(rdot, -A(t, r) @ rdot)
        q = spec.embed(r, np.zeros(dim_g))
        worst_h = max(worst_h, float(np.max(np.abs(sys.omega(t, q) @ qdot))))
    if worst_h > HORIZONTALITY_TOL:
        raise ChaplyginAssumptionError(f"horizontal lift violates the constraints by {worst_h:.3e}")

    # reconstruction: admissible pairs are recovered by the transition
    worst_r = 0.0
    for t0, q0, t1, q1 in sample_pairs(rng, sys.n, samples, h_range=(0.05, 0.3), scale=0.5):
        pair = make_admissible(sys, ExtendedPair.of(t0, q0, t1, q1))
        f = transition(t0, spec.project(pair.p0.q), t1, spec.project(pair.p1.q))
        dg = spec.group_part(pair.p1.q) - spec.group_part(pair.p0.q)
        worst_r = max(worst_r, float(np.max(np.abs(f - dg))))
    if worst_r > RECONSTRUCTION_TOL:
        raise ChaplyginAssumptionError(f"transition disagrees with admissible pairs by {worst_r:.3e}")

    spec.checks.update(horizontality=worst_h, reconstruction=worst_r)
    return spec


@dataclass(frozen=True)
class RigidityResult:
    passed: bool
    witness: Optional[tuple] = None
    residual: float = float("nan")


def rigidity_check(sys, action, samples=5, grid=None, tol=1e-8, seed=0):
    """Search a grid of group offsets ``g != e`` with ``(p0, g . p1)`` in D_d.

    Passes iff no such offset is found; the witness is ``(pair, g)``.
    """
    if action.group_kind != "abelian-translation":
        raise NotImplementedError("grid search needs an abelian translation group")
    if grid is None:
        grid = np.linspace(-1.0, 1.0, 21)
    grid = np.asarray(grid, dtype=float)
    mesh = np.stack(np.meshgrid(*([grid] * action.dim_g), indexing="ij"), -1).reshape(-1, action.dim_g)
    offsets = mesh[np.max(np.abs(mesh), axis=1) > 1e-12]
    rng = np.random.default_rng(seed)
    for t0, q0, t1, q1 in sample_pairs(rng, sys.n, samples, h_range=(0.05, 0.3), scale=0.5):
        pair = make_admissible(sys, ExtendedPair.of(t0, q0, t1, q1))
        for g in offsets:
            ts, qs = action.act(g, pair.p1.t, pair.p1.q)
            r = sys.omega_d(pair.p0.t, pair.p0.q, ts, qs)
            res = float(np.max(np.abs(r))) if r.size else 0.0
            if res <= tol:
                return RigidityResult(False, (pair, g.copy()), res)
    return RigidityResult(True)


def _translation(op, f, dim_g):
    return np.eye(dim_g) if op is None else np.asarray(op(f), dtype=float)


def discrete_forces(spec, pair, derivatives="analytic"):
    """``(F-, F+)`` of a base pair: F- lives at its first point, F+ at its second.

    ``derivatives="fd"`` differentiates ``ell_d`` and the transition by
    central differences instead of using the analytic partials.
    """
    t0, r0, t1, r1 = pair.args() if isinstance(pair, ExtendedPair) else pair
    r0 = np.asarray(r0, dtype=float)
    r1 = np.asarray(r1, dtype=float)
    f = spec.transition(t0, r0, t1, r1)
    if derivatives == "analytic":
        lf = spec.ell_partials(t0, r0, t1, r1, f)[4]
        ft0, fr0, ft1, fr1 = spec.transition_jacobian(t0, r0, t1, r1)
    elif derivatives == "fd":
        lf = fd_jacobian(lambda z: [spec.ell(t0, r0, t1, r1, z)], f)[0]
        ft0, fr0, ft1, fr1 = _fd_transition_jacobian(spec.transition)(t0, r0, t1, r1)
    else:
        raise ValueError(f"unknown derivative mode {derivatives!r}")
    R = _translation(spec.right_translation, f, spec.dim_g)
    Lt = _translation(spec.left_translation, f, spec.dim_g)
    f_minus = CovectorExt(lf @ ft0, lf @ (fr0 - R @ spec.connection_local(t0, r0)))
    f_plus = CovectorExt(lf @ ft1, lf @ (fr1 + Lt @ spec.connection_local(t1, r1)))
    return f_minus, f_plus


def _redla_parts(spec, t0, r0, t1, r1):
    L = spec.reduced_lagrangian
    k = spec.base_dim
    _, _, d3p, d4p = L.partials(t0, r0, t1, r1)
    _, fplus = discrete_forces(spec, (t0, r0, t1, r1))

    def residual(y):
        t2, r2 = y[0], y[1 : k + 1]
        if abs(t2 - t1) < MIN_INTERVAL:
            raise DegenerateIntervalError("degenerate reduced interval")
        d1, d2, _, _ = L.partials(t1, r1, t2, r2)
        fminus, _ = discrete_forces(spec, (t1, r1, t2, r2))
        out = np.empty(k + 1)
        out[0] = d1 + d3p - fminus.dt - fplus.dt
        out[1:] = d2 + d4p - fminus.dq - fplus.dq
        return out

    return residual, d3p


def redla_residual(spec, triple):
    """Reduced time equation and forced base momentum equations at the middle point."""
    a, b, c = triple
    if not (a.t < b.t < c.t):
        raise PathError("triple times must be strictly increasing")
    res, _ = _redla_parts(spec, a.t, a.q, b.t, b.q)
    return res(np.concatenate(([c.t], c.q)))


def step_redla(spec, prev_pair, cfg=SolverConfig()):
    t0, r0, t1, r1 = prev_pair.args()
    residual, d3p = _redla_parts(spec, t0, r0, t1, r1)
    if abs(d3p) < NEAR_ZERO_ENERGY:
        warnings.warn(
            f"reduced discrete energy {-d3p:.3e} is near zero; time steps may collapse",
            NearZeroEnergyWarning,
            stacklevel=2,
        )
    t2 = 2.0 * t1 - t0
    guess = np.concatenate(([t2], 2.0 * np.asarray(r1) - np.asarray(r0)))
    steps = np.full(guess.size, cfg.fd_step_scale * abs(t1 - t0))
    try:
        z = newton_solve(
            lambda z: residual(np.concatenate(([t2], z)))[1:], guess[1:], cfg,
            accept_tol=np.inf, fd_steps=steps[1:],
        ).x
        guess = np.concatenate(([t2], z))
    except NHVIError:
        pass
    nr = newton_solve(residual, guess, cfg, rank_tol=cfg.rank_tol, min_iter=1, fd_steps=steps)
    y = nr.x
    if not y[0] > t1:
        raise TimeCollapseError(f"solved time {y[0]!r} does not exceed current time {t1!r}")
    return StepResult(ExtendedPoint(y[0], y[1:]), np.zeros(0), nr.iterations, nr.residual_norm)


def simulate_redla(spec, base_pair, steps, cfg=SolverConfig()):
    points = [base_pair.p0, base_pair.p1]
    stats = []
    pair = base_pair
    for j in range(steps):
        try:
            res = step_redla(spec, pair, cfg)
        except NHVIError as exc:
            raise StepFailure(j, exc, Trajectory(points, (), (), stats)) from exc
        points.append(res.next)
        stats.append(StepStats(res.iterations, res.residual_norm))
        pair = ExtendedPair(pair.p1, res.next)
    return Trajectory(points, (), (), stats)


def project_trajectory(spec, traj):
    return [ExtendedPoint(p.t, spec.project(p.q)) for p in traj.points]


def project_and_compare(spec, edla_traj, cfg=SolverConfig()):
    """Max deviation in ``(t, r)`` between the projected EDLA run and REDLA
    started from the projected first pair."""
    proj = project_trajectory(spec, edla_traj)
    red = simulate_redla(spec, ExtendedPair(proj[0], proj[1]), len(proj) - 2, cfg)
    worst = 0.0
    for a, b in zip(proj, red.points):
        worst = max(worst, abs(a.t - b.t), float(np.max(np.abs(a.q - b.q))))
    return worst
