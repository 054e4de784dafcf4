import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nhvi.calculus import energy_plus
from nhvi.core import ExtendedPair, ExtendedPoint, SolverConfig
from nhvi.errors import (
    AdmissibilityError,
    ConvergenceError,
    DegeneracyError,
    NearZeroEnergyWarning,
    NHVIError,
    StepFailure,
    TimeCollapseError,
)
from nhvi.reference import builtin_systems, initial_pair, solve_reference
from nhvi.stepper import edel_residual, edla_residual, newton_solve, simulate, step_edel, step_edla

SYSTEMS = builtin_systems()
free = SYSTEMS["free_particle"].system.lagrangian
particle = SYSTEMS["nonholonomic_particle"]


def P(t, *q):
    return ExtendedPoint(t, q)


def test_newton_square_root():
    res = newton_solve(lambda x: np.array([x[0] ** 2 - 4.0]), np.array([3.0]))
    assert abs(res.x[0] - 2.0) <= 1e-12
    assert res.iterations <= 6


def test_newton_linear_one_iteration():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    res = newton_solve(lambda x: A @ x - b, np.zeros(2), jacobian=lambda x: A)
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), atol=1e-14)
    assert res.iterations == 1


def test_newton_degenerate_root_is_slow():
    # x^3 has a triple root; Newton converges only linearly
    res = newton_solve(lambda x: np.array([x[0] ** 3]), np.array([1.0]), tol=1e-12)
    assert abs(res.x[0]) ** 3 <= 1e-12
    assert res.iterations > 10


def test_newton_gives_up():
    with pytest.raises(ConvergenceError) as info:
        newton_solve(lambda x: np.array([x[0] ** 2 + 1.0]), np.array([0.5]), cfg=SolverConfig(max_iter=5))
    assert info.value.residual_norm >= 1.0


def test_edel_residual_examples():
    np.testing.assert_array_equal(edel_residual(free, (P(0, 0), P(1, 1), P(2, 2))), [0.0, 0.0])
    r = edel_residual(free, (P(0, 0), P(1, 1), P(2, 3)))
    assert r[0] == 1.5 and r[1] == -1.0


def test_edel_residual_local_order():
    entry = SYSTEMS["harmonic_oscillator"]
    ref = solve_reference(entry.continuous, 0.0, [1.0], [0.3], 2.0)
    errs = []
    for h in (0.1, 0.05, 0.025):
        pts = [ExtendedPoint(t, ref(t)) for t in (1 - h, 1.0, 1 + h)]
        errs.append(np.max(np.abs(edel_residual(entry.system.lagrangian, pts))))
    assert 6.0 < errs[0] / errs[1] < 10.0
    assert 6.0 < errs[1] / errs[2] < 10.0


def test_edla_residual_local_order_with_scaled_multiplier():
    ref = solve_reference(particle.continuous, 0.0, [0, 0, 0], [1, 1, 0], 2.0)
    errs = []
    for h in (0.1, 0.05, 0.025):
        pts = [ExtendedPoint(t, ref(t)) for t in (1 - h, 1.0, 1 + h)]
        errs.append(np.max(np.abs(edla_residual(particle.system, pts, -h * ref.multiplier(1.0)))))
    assert errs[0] < 1e-4
    assert 6.0 < errs[0] / errs[1] < 10.0
    assert 6.0 < errs[1] / errs[2] < 10.0


def test_edla_residual_at_rest():
    pts = (P(0, 1, 2, 3), P(1, 1, 2, 3), P(2, 1, 2, 3))
    assert np.all(edla_residual(particle.system, pts, np.zeros(1)) == 0.0)


def test_edla_residual_without_constraints_is_edel():
    entry = SYSTEMS["harmonic_oscillator"]
    rng = np.random.default_rng(8)
    for _ in range(100):
        t = np.cumsum(rng.uniform(0.05, 0.5, 3))
        pts = [ExtendedPoint(ti, rng.uniform(-1, 1, 1)) for ti in t]
        a = edla_residual(entry.system, pts, np.zeros(0))
        b = edel_residual(entry.system.lagrangian, pts)
        assert np.array_equal(a, b)


def test_free_particle_step_is_degenerate():
    with pytest.raises(DegeneracyError):
        step_edel(free, ExtendedPair.of(0.0, [0.0], 1.0, [1.0]))


def test_oscillator_energy_constant():
    entry = SYSTEMS["harmonic_oscillator"]
    L = entry.system.lagrangian
    pair = initial_pair(entry, 0.1, 0.0, np.array([1.0]), np.array([0.0]))
    e0 = energy_plus(L, pair)
    for _ in range(3):
        pair = ExtendedPair(pair.p1, step_edel(L, pair).next)
        assert abs(energy_plus(L, pair) - e0) <= 1e-12


def test_forced_oscillator_energy_not_conserved():
    entry = SYSTEMS["forced_oscillator"]
    traj = simulate(entry.system, initial_pair(entry), 100)
    e = np.array([d.e_plus for d in traj.diagnostics])
    assert np.max(np.abs(e - e[0])) > 1e-6


def test_particle_step():
    pair = initial_pair(particle, 0.05, 0.0, np.array([0.0, 0.3, 0.0]), np.array([1.0, 0.5, 0.3]))
    res = step_edla(particle.system, pair)
    assert res.iterations <= 8
    assert abs(particle.system.omega_d(*ExtendedPair(pair.p1, res.next).args())[0]) <= 1e-12
    assert res.next.t > pair.p1.t


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 1), st.floats(-2, 2), st.floats(0.05, 0.3))
def test_step_edla_without_constraints_matches_edel(q0, v0, h):
    # q0 away from 0 keeps the energy away from the degenerate rest state
    entry = SYSTEMS["harmonic_oscillator"]
    pair = initial_pair(entry, h, 0.0, np.array([q0]), np.array([v0]), method="linear")
    a = step_edla(entry.system, pair)
    b = step_edel(entry.system.lagrangian, pair)
    assert a.next == b.next


def test_disk_energy_preserved():
    entry = SYSTEMS["rolling_disk"]
    L = entry.system.lagrangian
    pair = initial_pair(entry)
    e0 = energy_plus(L, pair)
    for _ in range(5):
        pair = ExtendedPair(pair.p1, step_edla(entry.system, pair).next)
        assert abs(energy_plus(L, pair) - e0) <= 1e-11


def test_violated_pair_raises():
    bad = ExtendedPair.of(0.0, [0.0, 0.3, 0.0], 0.05, [0.05, 0.325, 0.1])
    with pytest.raises(AdmissibilityError):
        step_edla(particle.system, bad)
    with pytest.raises(AdmissibilityError):
        simulate(particle.system, bad, 10)


def test_simulate_zero_steps():
    pair = initial_pair(particle)
    traj = simulate(particle.system, pair, 0)
    assert traj.points == (pair.p0, pair.p1)


def test_simulate_particle_energy():
    traj = simulate(particle.system, initial_pair(particle), 1000)
    assert len(traj.points) == 1002
    e = np.array([d.e_plus for d in traj.diagnostics])
    assert np.max(np.abs(e - e[0])) <= 1e-10
    assert max(d.constraint_residual for d in traj.diagnostics) <= 1e-12


def test_time_collapse_reports_failure():
    entry = SYSTEMS["forced_oscillator"]
    pair = initial_pair(entry, 0.2, 3.52, np.array([-1.34]), np.array([0.0164]), method="linear")
    with pytest.raises(StepFailure) as info:
        simulate(entry.system, pair, 100)
    fail = info.value
    assert isinstance(fail.cause, TimeCollapseError)
    assert len(fail.trajectory.points) == fail.index + 2
    assert fail.trajectory.points[0] == pair.p0


def test_near_zero_energy_warns():
    rest = ExtendedPair.of(0.0, [1.0, 1.0, 1.0], 0.1, [1.0, 1.0, 1.0])
    with pytest.warns(NearZeroEnergyWarning):
        with pytest.raises(NHVIError):
            step_edla(particle.system, rest)
