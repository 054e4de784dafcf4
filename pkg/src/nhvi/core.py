"""Domain types shared by the integrators and verifiers.

Everything is expressed in a single global chart: configurations are real
vectors ``q`` of length ``n`` and extended points carry an explicit time ``t``.
Callables stored on the types take raw arguments ``(t0, q0, t1, q1)`` so that
the inner loops of the steppers avoid object construction; the pair-level
convenience methods wrap them.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, PathError
from .fd import DEFAULT_STEP_SCALE, fd_gradient


def _frozen_vector(values, name):
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ExtendedPoint:
    """A point ``(t, q)`` of the extended configuration space R x Q."""

    t: float
    q: np.ndarray

    def __post_init__(self):
        t = float(self.t)
        if not np.isfinite(t):
            raise ValueError("t must be finite")
        q = _frozen_vector(self.q, "q")
        if q.size < 1:
            raise ConfigurationError("configuration dimension must be >= 1")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", q)

    @property
    def n(self):
        return self.q.size

    def as_array(self):
        return np.concatenate(([self.t], self.q))

    @classmethod
    def from_array(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[0], x[1:])

    def __eq__(self, other):
        if not isinstance(other, ExtendedPoint):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.q, other.q)

    def __hash__(self):
        return hash((self.t, self.q.tobytes()))


@dataclass(frozen=True)
class ExtendedPair:
    """A point ``(t0, q0, t1, q1)`` of the discrete state space."""

    p0: ExtendedPoint
    p1: ExtendedPoint

    def __post_init__(self):
        if self.p0.n != self.p1.n:
            raise ConfigurationError(
                f"pair legs have different dimensions ({self.p0.n} vs {self.p1.n})"
            )

    @classmethod
    def of(cls, t0, q0, t1, q1):
        return cls(ExtendedPoint(t0, q0), ExtendedPoint(t1, q1))

    @classmethod
    def from_array(cls, x):
        x = np.asarray(x, dtype=float)
        n = x.size // 2 - 1
        return cls(ExtendedPoint(x[0], x[1 : n + 1]), ExtendedPoint(x[n + 1], x[n + 2 :]))

    @property
    def n(self):
        return self.p0.n

    @property
    def h(self):
        return self.p1.t - self.p0.t

    def args(self):
        return self.p0.t, self.p0.q, self.p1.t, self.p1.q

    def as_array(self):
        return np.concatenate(([self.p0.t], self.p0.q, [self.p1.t], self.p1.q))


def unpack(x):
    """Split a packed ``[t0, q0, t1, q1]`` vector into raw arguments."""
    n = x.size // 2 - 1
    return x[0], x[1 : n + 1], x[n + 1], x[n + 2 :]


class DiscreteLagrangian:
    """A discrete Lagrangian ``L_d(t0, q0, t1, q1)`` and its four partials.

    ``gradient`` returns ``(D1, D2, D3, D4)``: derivatives with respect to
    ``t0`` (scalar), ``q0`` (vector), ``t1`` (scalar) and ``q1`` (vector).
    Without it the partials come from central differences of ``value``.
    """

    def __init__(self, value, gradient=None, name="", fd_step_scale=DEFAULT_STEP_SCALE):
        self._value = value
        self._gradient = gradient
        self.name = name
        self.fd_step_scale = fd_step_scale

    @property
    def derivative_mode(self):
        return "analytic" if self._gradient is not None else "finite-difference"

    def value(self, t0, q0, t1, q1):
        return float(self._value(t0, q0, t1, q1))

    def partials(self, t0, q0, t1, q1):
        if self._gradient is not None:
            d1, d2, d3, d4 = self._gradient(t0, q0, t1, q1)
            return float(d1), np.asarray(d2, dtype=float), float(d3), np.asarray(d4, dtype=float)
        return self.fd_partials(t0, q0, t1, q1)

    def fd_partials(self, t0, q0, t1, q1):
        x = np.concatenate(([t0], q0, [t1], q1))
        g = fd_gradient(lambda y: self._value(*unpack(y)), x, self.fd_step_scale)
        n = len(q0)
        return g[0], g[1 : n + 1], g[n + 1], g[n + 2 :]

    def with_fd_derivatives(self):
        return DiscreteLagrangian(self._value, None, self.name, self.fd_step_scale)

    # pair-level views
    def eval(self, pair):
        return self.value(*pair.args())

    def d1(self, pair):
        return self.partials(*pair.args())[0]

    def d2(self, pair):
        return self.partials(*pair.args())[1]

    def d3(self, pair):
        return self.partials(*pair.args())[2]

    def d4(self, pair):
        return self.partials(*pair.args())[3]


@dataclass(frozen=True)
class ConstraintSet:
    """Continuous one-forms ``omega`` (m x n, Q-components only) and their
    discrete counterparts ``omega_d`` on pairs."""

    m: int
    omega: Callable
    omega_d: Callable

    def matrix(self, t, q):
        return np.asarray(self.omega(t, q), dtype=float).reshape(self.m, -1)

    def residual(self, t0, q0, t1, q1):
        return np.asarray(self.omega_d(t0, q0, t1, q1), dtype=float).reshape(self.m)

    def pair_residual(self, pair):
        return self.residual(*pair.args())


@dataclass(frozen=True)
class GroupActionSpec:
    """A Lie group action on R x Q.

    ``generator(i, t, q)`` returns ``(dt, dq)`` for the i-th algebra basis
    element; ``act(g, t, q)`` returns the transformed ``(t, q)``; ``exp`` maps
    algebra coefficients to group elements (identity for translation groups).
    ``coordinates`` lists the translated chart coordinates (-1 for time) when
    the group is an abelian translation group.
    """

    dim_g: int
    generator: Callable
    act: Callable
    group_kind: str = "abelian-translation"
    time_trivial: bool = True
    exp: Optional[Callable] = None
    coordinates: Optional[tuple] = None

    def __post_init__(self):
        if self.group_kind not in ("abelian-translation", "matrix-group"):
            raise ConfigurationError(f"unknown group kind {self.group_kind!r}")
        if self.dim_g < 1:
            raise ConfigurationError("action dimension must be >= 1")

    def field(self, xi, t, q):
        """Generator of ``sum_i xi_i e_i`` at ``(t, q)`` as a packed ``[dt, dq]`` vector."""
        out = np.zeros(len(q) + 1)
        for i, c in enumerate(np.atleast_1d(xi)):
            if c != 0.0:
                dt, dq = self.generator(i, t, q)
                out[0] += c * dt
                out[1:] += c * np.asarray(dq, dtype=float)
        return out

    def group_element(self, xi):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return xi if self.exp is None else self.exp(xi)


def translation_action(n, coordinates):
    """Abelian action of R^k translating the listed configuration coordinates.

    Index ``-1`` stands for the time coordinate.
    """
    coordinates = tuple(int(c) for c in coordinates)
    for c in coordinates:
        if not -1 <= c < n:
            raise ConfigurationError(f"translated coordinate {c} outside 0..{n - 1}")

    def generator(i, t, q):
        dq = np.zeros(n)
        c = coordinates[i]
        if c < 0:
            return 1.0, dq
        dq[c] = 1.0
        return 0.0, dq

    def act(g, t, q):
        q = np.array(q, dtype=float)
        for c, s in zip(coordinates, np.atleast_1d(g)):
            if c < 0:
                t = t + s
            else:
                q[c] += s
        return t, q

    return GroupActionSpec(
        dim_g=len(coordinates),
        generator=generator,
        act=act,
        group_kind="abelian-translation",
        time_trivial=-1 not in coordinates,
        coordinates=coordinates,
    )


def time_translation_action(n):
    """The additive action of R on the time component."""
    return translation_action(n, (-1,))


@dataclass(frozen=True)
class SectionSpec:
    """A section of g^D: ``xi_tilde(t, q)`` gives algebra coefficients."""

    xi_tilde: Callable
    name: str = ""
    #: True for a horizontal symmetry (the coefficients never change).
    constant: bool = False

    def coefficients(self, t, q):
        return np.atleast_1d(np.asarray(self.xi_tilde(t, q), dtype=float))


@dataclass(frozen=True)
class NonholonomicSystem:
    """The triple (L_d, D_d, D) plus an optional symmetry.

    ``constraints=None`` is the unconstrained case D = TQ, D_d = Q x Q.
    """

    lagrangian: DiscreteLagrangian
    n: int
    constraints: Optional[ConstraintSet] = None
    action: Optional[GroupActionSpec] = None
    autonomous: bool = False
    name: str = ""

    @property
    def m(self):
        return 0 if self.constraints is None else self.constraints.m

    def omega(self, t, q):
        if self.constraints is None:
            return np.zeros((0, self.n))
        return self.constraints.matrix(t, q)

    def omega_d(self, t0, q0, t1, q1):
        if self.constraints is None:
            return np.zeros(0)
        return self.constraints.residual(t0, q0, t1, q1)

    def unconstrained(self):
        """The same Lagrangian with the constraints dropped."""
        return NonholonomicSystem(self.lagrangian, self.n, None, self.action, self.autonomous, self.name)


GUESS_MODES = ("linear-extrapolation", "copy-previous")


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    max_iter: int = 50
    damping: float = 0.5
    min_step: float = 2.0**-20
    fd_step_scale: float = DEFAULT_STEP_SCALE
    guess_mode: str = "linear-extrapolation"
    max_cond: float = 1e14
    # Row-equilibrated singular value ratios below rank_tol trigger a
    # five-point recomputation of the Jacobian; below degeneracy_tol the step
    # is rejected as rank deficient. The five-point floor is about 2e-12.
    rank_tol: float = 1e-8
    degeneracy_tol: float = 1e-11

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if not 0 < self.damping < 1:
            raise ConfigurationError("damping must lie in (0, 1)")
        if not 0 < self.min_step <= 1:
            raise ConfigurationError("min_step must lie in (0, 1]")
        if not 0 < self.degeneracy_tol <= self.rank_tol:
            raise ConfigurationError("need 0 < degeneracy_tol <= rank_tol")
        if self.guess_mode not in GUESS_MODES:
            raise ConfigurationError(f"guess_mode must be one of {GUESS_MODES}")

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class PairDiagnostics:
    e_plus: float
    e_minus: float
    constraint_residual: float
    momentum: tuple = ()


@dataclass(frozen=True)
class StepStats:
    iterations: int
    residual_norm: float


@dataclass(frozen=True)
class Trajectory:
    """A discrete path with per-pair diagnostics.

    ``multipliers[j]`` belongs to interior point ``j + 1``; ``diagnostics[j]``
    to the pair ``(points[j], points[j + 1])``; ``solver_stats[j]`` to the step
    that produced ``points[j + 2]``.
    """

    points: tuple
    multipliers: tuple = ()
    diagnostics: tuple = ()
    solver_stats: tuple = ()

    def __post_init__(self):
        pts = tuple(self.points)
        for k in range(len(pts) - 1):
            if not pts[k + 1].t > pts[k].t:
                raise PathError(f"times not strictly increasing at index {k}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "multipliers", tuple(self.multipliers))
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))
        object.__setattr__(self, "solver_stats", tuple(self.solver_stats))

    def __len__(self):
        return len(self.points)

    @property
    def times(self):
        return np.array([p.t for p in self.points])

    @property
    def configurations(self):
        return np.array([p.q for p in self.points])

    def pair(self, k):
        return ExtendedPair(self.points[k], self.points[k + 1])

    def pairs(self):
        return [self.pair(k) for k in range(len(self.points) - 1)]

    @property
    def energies(self):
        return np.array([d.e_plus for d in self.diagnostics])


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    note: str = ""

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        note = f" ({self.note})" if self.note else ""
        return f"{status}  {self.name}: worst={self.worst:.3e}{note}"


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self):
        return "\n".join(str(c) for c in self.checks)


DERIVATIVE_RTOL = 1e-5
GENERATOR_RTOL = 1e-5
SECTION_TOL = 1e-10
AUTONOMY_TOL = 1e-12


def sample_pairs(rng, n, count, h_range=(0.01, 1.0), scale=1.0):
    """Random raw pairs with ``t1 - t0`` drawn from ``h_range``."""
    out = []
    for _ in range(count):
        t0 = rng.uniform(-1.0, 1.0)
        h = rng.uniform(*h_range)
        q0 = rng.uniform(-scale, scale, n)
        q1 = q0 + rng.uniform(-scale, scale, n)
        out.append((t0, q0, t0 + h, q1))
    return out


def derivative_discrepancy(L_d, t0, q0, t1, q1):
    """Worst relative slot-wise gap between provided partials and central FD."""
    exact = L_d.partials(t0, q0, t1, q1)
    approx = L_d.fd_partials(t0, q0, t1, q1)
    overall = max(np.max(np.abs(np.atleast_1d(a))) for a in approx)
    worst = 0.0
    for a, b in zip(exact, approx):
        a = np.atleast_1d(a)
        b = np.atleast_1d(b)
        denom = max(np.max(np.abs(b)), 1e-3 * overall, 1e-8)
        worst = max(worst, float(np.max(np.abs(a - b))) / denom)
    return worst


def _generator_discrepancy(action, t, q, step):
    worst = 0.0
    for i in range(action.dim_g):
        e = np.zeros(action.dim_g)
        e[i] = step
        tp, qp = action.act(action.group_element(e), t, q)
        tm, qm = action.act(action.group_element(-e), t, q)
        fd = np.concatenate(([tp - tm], np.asarray(qp) - np.asarray(qm))) / (2 * step)
        dt, dq = action.generator(i, t, q)
        gen = np.concatenate(([dt], dq))
        worst = max(worst, float(np.max(np.abs(gen - fd))) / max(1.0, float(np.max(np.abs(fd)))))
    return worst


def check_section(sys, action, section, points):
    """Worst normalized residual of ``omega * (xi_tilde)_Q`` over sample points."""
    worst = 0.0
    for t, q in points:
        v = action.field(section.coefficients(t, q), t, q)[1:]
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        w = sys.omega(t, q)
        scale = max(np.linalg.norm(w), 1.0)
        worst = max(worst, float(np.max(np.abs(w @ v), initial=0.0)) / (nv * scale))
    return worst


def _dyadic(x, bits=20):
    return float(np.round(x * 2.0**bits) / 2.0**bits)


def validate_system(sys, samples=100, seed=0, sections=()):
    """Sample every structural invariant of ``sys`` and report worst residuals."""
    rng = np.random.default_rng(seed)
    n = sys.n
    report = ValidationReport()
    pairs = sample_pairs(rng, n, samples)
    points = [(p[0], p[1]) for p in pairs]

    t0, q0, t1, q1 = pairs[0]
    try:
        probe = sys.lagrangian.partials(t0, q0, t1, q1)
    except (ValueError, IndexError) as exc:
        raise ConfigurationError(f"lagrangian cannot be evaluated in dimension {n}: {exc}")
    if np.size(probe[1]) != n or np.size(probe[3]) != n:
        raise ConfigurationError(f"lagrangian partials have wrong length for n={n}")
    if sys.constraints is not None:
        shape = np.shape(sys.constraints.omega(t0, q0))
        if tuple(shape) != (sys.m, n):
            raise ConfigurationError(f"omega has shape {shape}, expected {(sys.m, n)}")
        if np.size(sys.constraints.omega_d(t0, q0, t1, q1)) != sys.m:
            raise ConfigurationError("omega_d length differs from the constraint count")

    worst = 0.0
    if sys.lagrangian.derivative_mode == "analytic":
        worst = max(derivative_discrepancy(sys.lagrangian, *p) for p in pairs)
    report.checks.append(
        CheckResult("derivative-consistency", worst <= DERIVATIVE_RTOL, worst, sys.lagrangian.derivative_mode)
    )

    if sys.constraints is not None:
        diag = max(float(np.max(np.abs(sys.omega_d(t, q, t, q)))) for t, q in points)
        report.checks.append(CheckResult("diagonal-condition", diag == 0.0, diag))
        ranks = [np.linalg.matrix_rank(sys.omega(t, q)) for t, q in points]
        bad = sum(r != sys.m for r in ranks)
        report.checks.append(CheckResult("constraint-rank", bad == 0, float(bad), f"m={sys.m}"))
        report.checks.append(CheckResult("fewer-constraints-than-dofs", sys.m < n, float(sys.m)))

    if sys.autonomous:
        worst = 0.0
        for t0, q0, t1, q1 in pairs:
            # Dyadic times and shifts keep t + s exact, so only L_d itself is tested.
            t0, t1 = _dyadic(t0), _dyadic(t1)
            s = _dyadic(rng.uniform(-10.0, 10.0))
            worst = max(worst, abs(sys.lagrangian.value(t0 + s, q0, t1 + s, q1) - sys.lagrangian.value(t0, q0, t1, q1)))
            if sys.constraints is not None:
                worst = max(
                    worst,
                    float(np.max(np.abs(sys.omega(t0 + s, q0) - sys.omega(t0, q0)))),
                    float(np.max(np.abs(sys.omega_d(t0 + s, q0, t1 + s, q1) - sys.omega_d(t0, q0, t1, q1)))),
                )
        report.checks.append(CheckResult("time-shift-invariance", worst <= AUTONOMY_TOL, worst))

    if sys.action is not None:
        act = sys.action
        worst = max(_generator_discrepancy(act, t, q, 1e-6) for t, q in points)
        report.checks.append(CheckResult("generator-consistency", worst <= GENERATOR_RTOL, worst))
        if act.time_trivial:
            worst = max(abs(act.generator(i, t, q)[0]) for t, q in points for i in range(act.dim_g))
            report.checks.append(CheckResult("time-trivial-action", worst == 0.0, worst))
        for sec in sections:
            worst = check_section(sys, act, sec, points)
            report.checks.append(CheckResult(f"section[{sec.name}]", worst <= SECTION_TOL, worst))

    return report


def check_path(points: Sequence[ExtendedPoint]):
    if len(points) < 2:
        raise PathError("a path needs at least two points")
    for k in range(len(points) - 1):
        if not points[k + 1].t > points[k].t:
            raise PathError(f"times not strictly increasing at index {k}")
