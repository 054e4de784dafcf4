"""Built-in example systems.

Each entry bundles the discrete system (midpoint discretization), the
continuous system used by the oracle, symmetry data and default initial
conditions with |E| >= 0.1.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..core import ExtendedPair, NonholonomicSystem, SectionSpec, translation_action
from ..discretize import ContinuousLagrangian, midpoint_constraints, midpoint_lagrangian
from ..stepper import make_admissible
from .oracle import ContinuousSystem, Invariant, solve_reference


@dataclass(frozen=True)
class ChaplyginChart:
    """Trivialization data: which coordinates of ``q`` are group coordinates,
    plus optional analytic transition ``f(t0, r0, t1, r1)`` and its Jacobian
    ``(df/dt0, df/dr0, df/dt1, df/dr1)``."""

    group_indices: tuple
    transition: Optional[Callable] = None
    transition_jacobian: Optional[Callable] = None


@dataclass(frozen=True)
class BuiltinSystem:
    name: str
    system: NonholonomicSystem
    continuous: ContinuousSystem
    t0: float
    q0: np.ndarray
    v0: np.ndarray
    h: float
    sections: tuple = ()
    horizontal: tuple = ()
    chaplygin: Optional[ChaplyginChart] = None
    exercises: tuple = ()
    params: dict = field(default_factory=dict)

    @property
    def energy0(self):
        return self.continuous.energy(self.t0, self.q0, self.v0)


def _kinetic(masses):
    mass = np.asarray(masses, dtype=float)
    return dict(
        value=lambda t, q, v: 0.5 * float(v @ (mass * v)),
        dv=lambda t, q, v: mass * v,
    )


def _energy_invariant(L):
    return Invariant("energy", lambda t, q, v: float(L.momentum(t, q, v) @ v - L(t, q, v)))


def _make(name, L, n, omega=None, m=0, action=None, autonomous=True, **kw):
    cons = midpoint_constraints(omega, m) if omega is not None else None
    sys = NonholonomicSystem(midpoint_lagrangian(L, name), n, cons, action, autonomous, name)
    inv = (_energy_invariant(L),) if autonomous else ()
    cs = ContinuousSystem(L, n, omega, inv)
    return sys, cs


def free_particle():
    L = ContinuousLagrangian(
        dt=lambda t, q, v: 0.0, dq=lambda t, q, v: np.zeros_like(q), **_kinetic([1.0])
    )
    sys, cs = _make("free_particle", L, 1, action=translation_action(1, (0,)))
    return BuiltinSystem(
        "free_particle", sys, cs, 0.0, np.zeros(1), np.ones(1), 0.1,
        exercises=("degeneracy",),
    )


def harmonic_oscillator():
    L = ContinuousLagrangian(
        value=lambda t, q, v: 0.5 * float(v @ v - q @ q),
        dt=lambda t, q, v: 0.0,
        dq=lambda t, q, v: -np.asarray(q, dtype=float),
        dv=lambda t, q, v: np.asarray(v, dtype=float).copy(),
    )
    sys, cs = _make("harmonic_oscillator", L, 1)
    return BuiltinSystem(
        "harmonic_oscillator", sys, cs, 0.0, np.ones(1), np.zeros(1), 0.1,
        exercises=("edel", "symplectic", "energy", "convergence"),
    )


def forced_oscillator():
    """``V(t, q) = q^2 / 2 - q sin t``."""
    L = ContinuousLagrangian(
        value=lambda t, q, v: 0.5 * float(v @ v - q @ q) + float(q[0]) * np.sin(t),
        dt=lambda t, q, v: float(q[0]) * np.cos(t),
        dq=lambda t, q, v: -np.asarray(q, dtype=float) + np.sin(t),
        dv=lambda t, q, v: np.asarray(v, dtype=float).copy(),
    )
    sys, cs = _make("forced_oscillator", L, 1, autonomous=False)
    return BuiltinSystem(
        "forced_oscillator", sys, cs, 0.0, np.ones(1), np.zeros(1), 0.05,
        exercises=("nonautonomous",),
    )


def _particle_omega(n):
    def omega(t, q):
        w = np.zeros((1, n))
        w[0, 0] = -q[1]
        w[0, 2] = 1.0
        return w

    return omega


def nonholonomic_particle():
    """``Q = R^3``, constraint ``dz - y dx``, R^2 acting on ``(x, z)``."""
    L = ContinuousLagrangian(
        dt=lambda t, q, v: 0.0, dq=lambda t, q, v: np.zeros_like(q), **_kinetic(np.ones(3))
    )
    action = translation_action(3, (0, 2))
    sys, cs = _make("nonholonomic_particle", L, 3, _particle_omega(3), 1, action)
    section = SectionSpec(lambda t, q: np.array([1.0, q[1]]), "x + y z")
    q0 = np.array([-12.0, -0.5, 3.0])
    v0 = np.array([0.45, 0.01, -0.5 * 0.45])
    return BuiltinSystem(
        "nonholonomic_particle", sys, cs, -25.0, q0, v0, 0.005,
        sections=(section,),
        exercises=("edla", "energy", "momentum-eq", "symplectic", "convergence"),
    )


def nonholonomic_particle_w():
    """The particle with an extra cyclic coordinate ``w``."""
    L = ContinuousLagrangian(
        dt=lambda t, q, v: 0.0, dq=lambda t, q, v: np.zeros_like(q), **_kinetic(np.ones(4))
    )
    action = translation_action(4, (0, 2, 3))
    sys, cs = _make("nonholonomic_particle_w", L, 4, _particle_omega(4), 1, action)
    section = SectionSpec(lambda t, q: np.array([1.0, q[1], 0.0]), "x + y z")
    horizontal = SectionSpec(lambda t, q: np.array([0.0, 0.0, 1.0]), "w", constant=True)
    q0 = np.array([-12.0, -0.5, 3.0, 0.0])
    v0 = np.array([0.45, 0.01, -0.5 * 0.45, 0.3])
    return BuiltinSystem(
        "nonholonomic_particle_w", sys, cs, -25.0, q0, v0, 0.005,
        sections=(section, horizontal),
        horizontal=(horizontal,),
        exercises=("edla", "horizontal"),
    )


def rolling_disk(m=1.0, inertia=1.0, spin=1.0, radius=1.0):
    """Vertical rolling disk ``q = (x, y, theta, phi)``; R^2 acts on ``(x, y)``."""
    R = float(radius)
    L = ContinuousLagrangian(
        dt=lambda t, q, v: 0.0,
        dq=lambda t, q, v: np.zeros_like(q),
        **_kinetic([m, m, inertia, spin]),
    )

    def omega(t, q):
        c, s = np.cos(q[3]), np.sin(q[3])
        return np.array([[1.0, 0.0, -R * c, 0.0], [0.0, 1.0, -R * s, 0.0]])

    def transition(t0, r0, t1, r1):
        pm = 0.5 * (r0[1] + r1[1])
        d = R * (r1[0] - r0[0])
        return np.array([d * np.cos(pm), d * np.sin(pm)])

    def transition_jacobian(t0, r0, t1, r1):
        pm = 0.5 * (r0[1] + r1[1])
        d = R * (r1[0] - r0[0])
        c, s = np.cos(pm), np.sin(pm)
        dr1 = np.array([[R * c, -0.5 * d * s], [R * s, 0.5 * d * c]])
        dr0 = np.array([[-R * c, -0.5 * d * s], [-R * s, 0.5 * d * c]])
        return np.zeros(2), dr0, np.zeros(2), dr1

    action = translation_action(4, (0, 1))
    sys, cs = _make("rolling_disk", L, 4, omega, 2, action)
    chart = ChaplyginChart((0, 1), transition, transition_jacobian)
    return BuiltinSystem(
        "rolling_disk", sys, cs, 0.0, np.zeros(4), np.array([R, 0.0, 1.0, 1.0]), 0.1,
        chaplygin=chart,
        exercises=("edla", "energy", "chaplygin", "symplectic"),
        params=dict(m=m, I=inertia, J=spin, R=R),
    )


_BUILDERS = (
    free_particle,
    harmonic_oscillator,
    forced_oscillator,
    nonholonomic_particle,
    nonholonomic_particle_w,
    rolling_disk,
)


def builtin_systems():
    """Name -> :class:`BuiltinSystem` for every shipped example."""
    return {b.name: b for b in (f() for f in _BUILDERS)}


def get_system(name, **params):
    for f in _BUILDERS:
        if f.__name__ == name:
            return f(**params)
    raise KeyError(f"unknown built-in system {name!r}; known: {[f.__name__ for f in _BUILDERS]}")


def initial_pair(entry, h=None, t0=None, q0=None, v0=None, method="oracle"):
    """An admissible first pair starting at ``(t0, q0)`` with velocity ``v0``.

    ``method="oracle"`` takes ``q1`` from the continuous flow at ``t0 + h``,
    ``"linear"`` uses ``q0 + h v0``; either is then projected onto D_d.
    """
    h = entry.h if h is None else float(h)
    t0 = entry.t0 if t0 is None else float(t0)
    q0 = entry.q0 if q0 is None else np.asarray(q0, dtype=float)
    v0 = entry.v0 if v0 is None else np.asarray(v0, dtype=float)
    if method == "oracle":
        q1 = solve_reference(entry.continuous, t0, q0, v0, t0 + h, chunk=max(h, 0.25))(t0 + h)
    elif method == "linear":
        q1 = q0 + h * v0
    else:
        raise ValueError(f"unknown method {method!r}")
    return make_admissible(entry.system, ExtendedPair.of(t0, q0, t0 + h, q1))
