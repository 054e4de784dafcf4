"""Implicit one-step maps for the extended discrete Euler-Lagrange (EDEL) and
Lagrange-d'Alembert (EDLA) equations, the damped Newton solver and the
trajectory driver.

Unknowns of a step are stacked as ``(t2, q2, lambda)`` and equations as
``(time equation, n momentum equations, m discrete constraints)``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    ExtendedPair,
    ExtendedPoint,
    NonholonomicSystem,
    PairDiagnostics,
    SolverConfig,
    StepStats,
    Trajectory,
)
from .errors import (
    AdmissibilityError,
    ConvergenceError,
    DegeneracyError,
    DegenerateIntervalError,
    EvaluationError,
    NearZeroEnergyWarning,
    NHVIError,
    PathError,
    StepFailure,
    TimeCollapseError,
)
from .fd import FIVE_POINT_STEP_SCALE, fd_jacobian

#: Below this |E+| the well-posedness of the time equation is not trusted.
NEAR_ZERO_ENERGY = 1e-8
#: Chord steps tried after a step converges, to push the residual toward its rounding floor.
NEWTON_POLISH = 2


@dataclass(frozen=True)
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual_norm: float
    history: tuple = ()


@dataclass(frozen=True)
class StepResult:
    next: ExtendedPoint
    lam: np.ndarray
    iterations: int
    residual_norm: float


def _norm(r):
    return float(np.max(np.abs(r))) if r.size else 0.0


def _equilibrated_ratio(J):
    rows = np.max(np.abs(J), axis=1, keepdims=True)
    if np.any(rows == 0.0):
        return 0.0
    s = np.linalg.svd(J / rows, compute_uv=False)
    return float(s[-1] / s[0])


def _check_jacobian(J, cfg, rank_tol):
    """Raise on a non-finite or overly ill-conditioned ``J``; return its
    equilibrated singular value ratio (``inf`` when ``rank_tol`` is None)."""
    if not np.all(np.isfinite(J)):
        raise DegeneracyError("non-finite Jacobian entries")
    s = np.linalg.svd(J, compute_uv=False)
    if s.size == 0:
        return np.inf
    if s[-1] == 0.0 or s[0] / s[-1] > cfg.max_cond:
        cond = np.inf if s[-1] == 0.0 else s[0] / s[-1]
        raise DegeneracyError(f"Jacobian condition number {cond:.3e} exceeds {cfg.max_cond:.1e}")
    if rank_tol is None:
        return np.inf
    return _equilibrated_ratio(J)


def _rank_deficient(ratio):
    return DegeneracyError(
        f"Jacobian numerically rank deficient (equilibrated singular value ratio {ratio:.3e})"
    )


def newton_solve(
    residual,
    guess,
    cfg=SolverConfig(),
    jacobian=None,
    rank_tol=None,
    tol=None,
    min_iter=0,
    accept_tol=None,
    fd_steps=None,
    polish=0,
):
    """Damped Newton iteration with backtracking.

    Returns the first iterate whose residual max-norm is at most ``tol``
    (``cfg.tol`` by default). The Jacobian is central-FD unless ``jacobian``
    is supplied; ``fd_steps`` fixes its absolute stencil steps. ``min_iter`` forces that many updates even when the guess
    already meets the tolerance. If the iteration stalls at a residual below
    ``accept_tol`` the current iterate is returned instead of raising.
    After convergence up to ``polish`` chord steps with the last Jacobian are
    tried; each is kept only if it lowers the residual. They are recorded in
    ``history`` but not counted in ``iterations``.
    """
    tol = cfg.tol if tol is None else tol
    accept = -1.0 if accept_tol is None else accept_tol
    x = np.array(guess, dtype=float).reshape(-1)
    r = np.asarray(residual(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise EvaluationError("non-finite residual at the initial guess")
    norm = _norm(r)
    history = [norm]
    it = 0
    sharp = False
    J = None
    while norm > tol or it < min_iter:
        if it >= cfg.max_iter:
            if norm <= accept:
                break
            raise ConvergenceError(
                f"no convergence in {cfg.max_iter} iterations (residual {norm:.3e})", norm, it
            )
        steps5 = None if fd_steps is None else np.asarray(fd_steps) * (
            FIVE_POINT_STEP_SCALE / cfg.fd_step_scale
        )
        if jacobian is not None:
            J = jacobian(x)
        elif sharp:
            J = fd_jacobian(residual, x, order=4, steps=steps5)
        else:
            J = fd_jacobian(residual, x, cfg.fd_step_scale, steps=fd_steps)
        ratio = _check_jacobian(J, cfg, rank_tol)
        if rank_tol is not None and ratio < rank_tol:
            if jacobian is not None:
                raise _rank_deficient(ratio)
            if not sharp:
                # Borderline: resolve the small singular value with a sharper stencil.
                sharp = True
                J = fd_jacobian(residual, x, order=4, steps=steps5)
                ratio = _check_jacobian(J, cfg, rank_tol)
            if ratio < min(rank_tol, cfg.degeneracy_tol):
                raise _rank_deficient(ratio)
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise DegeneracyError(f"singular Jacobian: {exc}")
        alpha = 1.0
        collapsed = False
        while True:
            try:
                x_new = x + alpha * dx
                r_new = np.asarray(residual(x_new), dtype=float)
                ok = bool(np.all(np.isfinite(r_new)))
            except TimeCollapseError:
                ok = False
                collapsed = collapsed or alpha == 1.0
            except (DegenerateIntervalError, EvaluationError):
                ok = False
            if ok:
                new_norm = _norm(r_new)
                if new_norm < norm or new_norm <= tol:
                    break
            alpha *= cfg.damping
            if alpha < cfg.min_step:
                break
        if alpha < cfg.min_step:
            if norm <= accept:
                break
            if collapsed:
                raise TimeCollapseError(
                    f"Newton step leaves the forward time branch (residual {norm:.3e})"
                )
            raise ConvergenceError(f"line search stalled at residual {norm:.3e}", norm, it)
        x, r, norm = x_new, r_new, new_norm
        history.append(norm)
        it += 1
    for _ in range(polish if J is not None else 0):
        if norm == 0.0:
            break
        try:
            x_new = x + np.linalg.solve(J, -r)
            r_new = np.asarray(residual(x_new), dtype=float)
        except (NHVIError, np.linalg.LinAlgError):
            break
        if not (np.all(np.isfinite(r_new)) and _norm(r_new) < norm):
            break
        x, r, norm = x_new, r_new, _norm(r_new)
        history.append(norm)
    return NewtonResult(x, it, norm, tuple(history))


def _residual_parts(L_d, constraints, n, t0, q0, t1, q1):
    """Close over the quantities of the known pair; return ``y -> residual``."""
    _, _, d3p, d4p = L_d.partials(t0, q0, t1, q1)
    d4p = np.asarray(d4p, dtype=float)
    m = 0 if constraints is None else constraints.m
    W = constraints.matrix(t1, q1) if m else None

    def residual(y):
        t2 = y[0]
        q2 = y[1 : n + 1]
        d1, d2, _, _ = L_d.partials(t1, q1, t2, q2)
        r = np.empty(n + 1 + m)
        r[0] = d1 + d3p
        if m:
            r[1 : n + 1] = d2 + d4p - y[n + 1 :] @ W
            r[n + 1 :] = constraints.residual(t1, q1, t2, q2)
        else:
            r[1 : n + 1] = d2 + d4p
        return r

    return residual, d3p, max(1.0, abs(d3p), _norm(d4p))


def edel_residual(L_d, triple):
    """``(D1 L_d(next) + D3 L_d(prev), D2 L_d(next) + D4 L_d(prev))``."""
    a, b, c = triple
    res, _, _ = _residual_parts(L_d, None, a.n, a.t, a.q, b.t, b.q)
    return res(np.concatenate(([c.t], c.q)))


def edla_residual(sys, triple, lam):
    """EDLA residual: time equation, ``D2 + D4 - lambda . omega(q_k)``, ``omega_d(next)``."""
    a, b, c = triple
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.size != sys.m:
        raise ValueError(f"expected {sys.m} multipliers, got {lam.size}")
    res, _, _ = _residual_parts(sys.lagrangian, sys.constraints, sys.n, a.t, a.q, b.t, b.q)
    return res(np.concatenate(([c.t], c.q, lam)))


def initial_guess(t0, q0, t1, q1, lam, mode):
    if mode == "linear-extrapolation":
        t2 = 2.0 * t1 - t0
        q2 = 2.0 * np.asarray(q1) - np.asarray(q0)
    else:
        t2 = t1 + (t1 - t0)
        q2 = np.asarray(q1, dtype=float)
    return np.concatenate(([t2], q2, lam))


def _fixed_step_predictor(residual, guess, cfg, tol=None, fd_steps=None):
    """Solve the momentum and constraint equations with ``t2`` frozen.

    Extrapolated positions reproduce the previous velocity, which is a root of
    the energy equation on the reflected branch (``t2 < t1``) whatever the
    multipliers are; the constant-step solution lands next to the physical
    root instead.
    """
    t2 = guess[0]

    def reduced(z):
        return residual(np.concatenate(([t2], z)))[1:]

    try:
        steps = None if fd_steps is None else fd_steps[1:]
        # Any stalled iterate beats the raw guess: Newton decreases monotonically.
        z = newton_solve(reduced, guess[1:], cfg, tol=tol, fd_steps=steps, accept_tol=np.inf).x
    except NHVIError:
        return guess
    return np.concatenate(([t2], z))


def solve_step(L_d, constraints, n, pair_args, cfg, lam_guess=None, guess=None, tol=None, accept_tol=None):
    """Solve one step from raw pair arguments; returns ``(y, NewtonResult)``."""
    t0, q0, t1, q1 = pair_args
    m = 0 if constraints is None else constraints.m
    unguarded, d3p, scale = _residual_parts(L_d, constraints, n, t0, q0, t1, q1)

    def residual(y):
        # Iterates behind t1 belong to the reflected branch of the energy equation.
        if not y[0] > t1:
            raise TimeCollapseError(f"iterate time {y[0]!r} does not exceed {t1!r}")
        return unguarded(y)

    # Rounding in (t, q) limits the attainable residual in proportion to the
    # size of the discrete momenta; the tolerance is relative to that scale.
    tol = (cfg.tol if tol is None else tol) * scale
    accept_tol = None if accept_tol is None else accept_tol * scale
    if abs(d3p) < NEAR_ZERO_ENERGY:
        warnings.warn(
            f"discrete energy {-d3p:.3e} is near zero; time steps may collapse",
            NearZeroEnergyWarning,
            stacklevel=3,
        )
    # The residual varies on the scale of the time step, not of the coordinates.
    fd_steps = np.full(n + 1 + m, cfg.fd_step_scale * abs(t1 - t0))
    if guess is None:
        lam = np.zeros(m) if lam_guess is None else np.asarray(lam_guess, dtype=float)
        guess = initial_guess(t0, q0, t1, q1, lam, cfg.guess_mode)
    guess = _fixed_step_predictor(residual, np.asarray(guess, dtype=float), cfg, tol, fd_steps)
    # The predictor only solved a reduced system: always take one full update.
    result = newton_solve(
        residual, guess, cfg, rank_tol=cfg.rank_tol, tol=tol, min_iter=1,
        accept_tol=accept_tol, fd_steps=fd_steps, polish=NEWTON_POLISH,
    )
    y = result.x
    if not y[0] > t1:
        raise TimeCollapseError(f"solved time {y[0]!r} does not exceed current time {t1!r}")
    return y, result


def _step(L_d, constraints, n, prev_pair, cfg, lam_guess=None):
    y, nr = solve_step(L_d, constraints, n, prev_pair.args(), cfg, lam_guess)
    return StepResult(ExtendedPoint(y[0], y[1 : n + 1]), y[n + 1 :].copy(), nr.iterations, nr.residual_norm)


def step_edel(L_d, prev_pair, cfg=SolverConfig()):
    """One application of the discrete Lagrangian map for an unconstrained system."""
    return _step(L_d, None, prev_pair.n, prev_pair, cfg)


def step_edla(sys, prev_pair, cfg=SolverConfig(), lam_guess=None, check_admissible=True):
    """One application of the discrete Lagrange-d'Alembert map."""
    if check_admissible and sys.m:
        viol = _norm(sys.omega_d(*prev_pair.args()))
        if viol > cfg.tol:
            raise AdmissibilityError(f"previous pair violates omega_d by {viol:.3e}")
    return _step(sys.lagrangian, sys.constraints, sys.n, prev_pair, cfg, lam_guess)


def make_admissible(sys, pair, tol=1e-14, max_iter=20):
    """Minimum-norm correction of ``q1`` so that ``omega_d(pair) = 0``."""
    if sys.m == 0:
        return pair
    t0, q0, t1, q1 = pair.args()
    q1 = np.array(q1, dtype=float)
    for _ in range(max_iter):
        r = sys.omega_d(t0, q0, t1, q1)
        if _norm(r) <= tol:
            return ExtendedPair.of(t0, q0, t1, q1)
        J = fd_jacobian(lambda x: sys.omega_d(t0, q0, t1, x), q1)
        q1 = q1 - J.T @ np.linalg.solve(J @ J.T, r)
    r = sys.omega_d(t0, q0, t1, q1)
    if _norm(r) > tol:
        raise AdmissibilityError(f"could not project pair onto D_d (residual {_norm(r):.3e})")
    return ExtendedPair.of(t0, q0, t1, q1)


def pair_momenta(sys, pair, sections=(), theta=None):
    """Momentum diagnostics of a pair: one value per section, else per basis element."""
    act = sys.action
    if act is None:
        return ()
    if theta is None:
        _, _, d3, d4 = sys.lagrangian.partials(*pair.args())
        theta = np.concatenate(([d3], d4))
    t, q = pair.p1.t, pair.p1.q
    if sections:
        return tuple(float(theta @ act.field(s.coefficients(t, q), t, q)) for s in sections)
    eye = np.eye(act.dim_g)
    return tuple(float(theta @ act.field(eye[i], t, q)) for i in range(act.dim_g))


def pair_diagnostics(sys, pair, sections=()):
    d1, _, d3, d4 = sys.lagrangian.partials(*pair.args())
    res = _norm(sys.omega_d(*pair.args()))
    theta = np.concatenate(([d3], d4))
    return PairDiagnostics(-d3, d1, res, pair_momenta(sys, pair, sections, theta))


def simulate(sys, initial_pair, steps, cfg=SolverConfig(), sections=()):
    """Advance ``initial_pair`` by ``steps`` EDLA steps.

    Returns ``steps + 2`` points. A failing step raises :class:`StepFailure`
    whose ``index`` is the zero-based step number and whose ``trajectory``
    holds everything computed before the failure.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if not initial_pair.p1.t > initial_pair.p0.t:
        raise PathError("initial pair must have t1 > t0")
    viol = _norm(sys.omega_d(*initial_pair.args()))
    if viol > cfg.tol:
        raise AdmissibilityError(f"initial pair violates omega_d by {viol:.3e}")

    points = [initial_pair.p0, initial_pair.p1]
    diags = [pair_diagnostics(sys, initial_pair, sections)]
    lams, stats = [], []
    lam = None
    pair = initial_pair
    for j in range(steps):
        try:
            res = _step(sys.lagrangian, sys.constraints, sys.n, pair, cfg, lam)
            pair = ExtendedPair(pair.p1, res.next)
            diag = pair_diagnostics(sys, pair, sections)
        except NHVIError as exc:
            partial = Trajectory(points, lams, diags, stats)
            raise StepFailure(j, exc, partial) from exc
        lam = res.lam
        points.append(res.next)
        lams.append(res.lam)
        stats.append(StepStats(res.iterations, res.residual_norm))
        diags.append(diag)
    return Trajectory(points, lams, diags, stats)
