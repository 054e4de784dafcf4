import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nhvi.core import derivative_discrepancy
from nhvi.discretize import (
    MIN_INTERVAL,
    ContinuousLagrangian,
    check_continuous_partials,
    midpoint_constraints,
    midpoint_lagrangian,
)
from nhvi.errors import DegenerateIntervalError, EvaluationError
from nhvi.fd import fd_gradient, fd_jacobian
from nhvi.reference import builtin_systems

free = midpoint_lagrangian(ContinuousLagrangian(lambda t, q, v: 0.5 * float(v @ v)))
oscillator = builtin_systems()["harmonic_oscillator"].system.lagrangian
particle_omega = midpoint_constraints(lambda t, q: np.array([[-q[1], 0.0, 1.0]]), 1)


def test_free_particle_values():
    assert free.value(0.0, [0.0], 1.0, [1.0]) == 0.5
    assert free.value(0.0, [0.0], 2.0, [1.0]) == 0.25


def test_oscillator_value():
    assert oscillator.value(0.0, [1.0], 1.0, [1.0]) == -0.5


def test_degenerate_interval():
    with pytest.raises(DegenerateIntervalError):
        free.value(1.0, [0.0], 1.0, [1.0])
    with pytest.raises(DegenerateIntervalError):
        oscillator.partials(1.0, [0.0], 1.0 + 0.1 * MIN_INTERVAL, [1.0])


def test_midpoint_constraint_values():
    assert particle_omega.residual(0.0, [0.0, 0.0, 0.0], 1.0, [1.0, 2.0, 3.0])[0] == 2.0
    assert particle_omega.residual(0.0, [0.0, 1.0, 0.0], 1.0, [2.0, 1.0, 2.0])[0] == 0.0


@given(st.floats(-10, 10), st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_midpoint_constraint_diagonal_exact(t, q):
    assert particle_omega.residual(t, q, t, q)[0] == 0.0


@pytest.mark.parametrize("name", sorted(builtin_systems()))
def test_analytic_partials_match_fd(name):
    L = builtin_systems()[name].system.lagrangian
    assert L.derivative_mode == "analytic"
    rng = np.random.default_rng(11)
    n = builtin_systems()[name].system.n
    worst = 0.0
    for _ in range(100):
        t0 = rng.uniform(-1, 1)
        q0 = rng.uniform(-1, 1, n)
        q1 = q0 + rng.uniform(-1, 1, n)
        worst = max(worst, derivative_discrepancy(L, t0, q0, t0 + rng.uniform(0.01, 1.0), q1))
    assert worst <= 1e-5


def test_fd_mode_without_partials():
    L = midpoint_lagrangian(ContinuousLagrangian(lambda t, q, v: 0.5 * float(v @ v) - float(q @ q)))
    assert L.derivative_mode == "finite-difference"
    d1, d2, d3, d4 = L.partials(0.0, np.array([0.2]), 0.5, np.array([0.4]))
    # L = v^2/2 - q^2 at v = 0.4, q_mid = 0.3, h = 0.5
    v, qm, h = 0.4, 0.3, 0.5
    assert d4[0] == pytest.approx(v - h * qm, rel=1e-7)
    assert d2[0] == pytest.approx(-v - h * qm, rel=1e-7)
    assert d3 == pytest.approx(-(0.5 * v * v + qm * qm), rel=1e-7)
    assert d1 == pytest.approx(0.5 * v * v + qm * qm, rel=1e-7)


def test_continuous_partials_consistency():
    L = builtin_systems()["forced_oscillator"].continuous.lagrangian
    assert check_continuous_partials(L, 0.7, np.array([0.3]), np.array([-1.2])) <= 1e-5


def test_autonomous_midpoint_is_time_shift_invariant():
    rng = np.random.default_rng(5)
    for _ in range(50):
        q0, q1 = rng.uniform(-1, 1, (2, 1))
        a = oscillator.value(0.25, q0, 0.75, q1)
        b = oscillator.value(3.25, q0, 3.75, q1)
        assert a == b


def test_fd_gradient_examples():
    assert fd_gradient(lambda x: x[0] ** 2, [3.0])[0] == pytest.approx(6.0, abs=1e-6)
    np.testing.assert_allclose(fd_gradient(lambda x: x[0] * x[1], [2.0, 5.0]), [5.0, 2.0], atol=1e-6)
    np.testing.assert_allclose(fd_gradient(lambda x: 7.0, [1.0, -4.0, 1e3]), 0.0, atol=1e-12)


def test_fd_five_point_is_sharper():
    f = lambda x: [np.sin(x[0]) * np.exp(x[1])]
    x = np.array([0.3, 0.2])
    exact = np.array([[np.cos(0.3) * np.exp(0.2), np.sin(0.3) * np.exp(0.2)]])
    e2 = np.abs(fd_jacobian(f, x) - exact).max()
    e4 = np.abs(fd_jacobian(f, x, order=4) - exact).max()
    assert e4 < 1e-11
    assert e2 < 1e-9
    assert e4 < e2


def test_fd_non_finite_raises():
    with pytest.raises(EvaluationError):
        fd_gradient(lambda x: 1.0 / x[0] if x[0] > 0 else np.nan, [0.0])


@settings(max_examples=50)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_fd_gradient_quadratic(a, b):
    g = fd_gradient(lambda x: a * x[0] ** 2 + b * x[0] * x[1], [1.0, 2.0])
    np.testing.assert_allclose(g, [2 * a + 2 * b, b], atol=1e-7)
