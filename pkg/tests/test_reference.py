import numpy as np
import pytest

from nhvi.core import check_section, validate_system
from nhvi.errors import AdmissibilityError
from nhvi.reference import builtin_systems, get_system, initial_pair, solve_reference

SYSTEMS = builtin_systems()


def test_catalog():
    assert len(SYSTEMS) >= 6
    for name in ("free_particle", "harmonic_oscillator", "forced_oscillator", "nonholonomic_particle",
                 "nonholonomic_particle_w", "rolling_disk"):
        assert SYSTEMS[name].name == name


def test_get_system():
    disk = get_system("rolling_disk", radius=2.0)
    assert disk.params["R"] == 2.0
    with pytest.raises(KeyError):
        get_system("double_pendulum")


def test_particle_section_is_valid():
    e = SYSTEMS["nonholonomic_particle"]
    assert validate_system(e.system, samples=50, sections=e.sections).passed
    pts = [(0.0, np.array([0.3, y, -1.0])) for y in np.linspace(-2, 2, 9)]
    assert check_section(e.system, e.system.action, e.sections[0], pts) <= 1e-12


def test_particle_oracle_closed_form():
    e = SYSTEMS["nonholonomic_particle"]
    ref = solve_reference(e.continuous, 0.0, [0.0, 0.0, 0.0], [1.0, 1.0, 0.0], 2.0)
    for t in np.linspace(0.0, 2.0, 9):
        q, v = ref.state(t)
        assert abs(q[1] - t) <= 1e-10
        # energy with y = t pins xdot = 1/sqrt(1 + t^2)
        assert abs(v[0] - 1.0 / np.sqrt(1 + t * t)) <= 1e-9
        assert ref.multiplier(t)[0] == pytest.approx(v[1] * v[0] / (1 + q[1] ** 2), abs=1e-9)
    assert ref.multiplier(1.0)[0] == pytest.approx(1.0 / (2.0 * np.sqrt(2.0)), abs=1e-9)


def test_free_particle_line():
    e = SYSTEMS["free_particle"]
    ref = solve_reference(e.continuous, 1.0, [0.5], [-2.0], 4.0)
    for t in (1.0, 2.5, 4.0):
        assert abs(ref(t)[0] - (0.5 - 2.0 * (t - 1.0))) <= 1e-12


def test_forced_oscillator_resonance():
    # q'' = -q + sin t, q(0) = 0, q'(0) = 5: q = 5.5 sin t - (t/2) cos t
    e = SYSTEMS["forced_oscillator"]
    ref = solve_reference(e.continuous, 0.0, [0.0], [5.0], 6.0)
    for t in np.linspace(0, 6, 13):
        assert abs(ref(t)[0] - (5.5 * np.sin(t) - 0.5 * t * np.cos(t))) <= 1e-9


def test_disk_rates_constant():
    e = SYSTEMS["rolling_disk"]
    ref = solve_reference(e.continuous, e.t0, e.q0, e.v0, 5.0)
    for t in np.linspace(0, 5, 11):
        np.testing.assert_allclose(ref.velocity(t)[2:], e.v0[2:], atol=1e-10)


@pytest.mark.parametrize("name", ["nonholonomic_particle", "rolling_disk", "harmonic_oscillator"])
def test_energy_and_constraint_drift(name):
    e = SYSTEMS[name]
    ref = solve_reference(e.continuous, e.t0, e.q0, e.v0, e.t0 + 5.0)
    assert ref.max_constraint_drift <= 1e-11
    energies = [e.continuous.energy(t, *ref.state(t)) for t in np.linspace(e.t0, e.t0 + 5.0, 21)]
    assert np.max(np.abs(np.array(energies) - e.energy0)) <= 1e-10


def test_inadmissible_velocity():
    e = SYSTEMS["nonholonomic_particle"]
    with pytest.raises(AdmissibilityError):
        solve_reference(e.continuous, 0.0, [0.0, 1.0, 0.0], [1.0, 0.0, 0.0], 1.0)


@pytest.mark.parametrize("name", sorted(SYSTEMS))
def test_initial_pair_is_admissible(name):
    e = SYSTEMS[name]
    pair = initial_pair(e)
    assert pair.h == pytest.approx(e.h)
    if e.system.m:
        assert np.max(np.abs(e.system.omega_d(*pair.args()))) <= 1e-14
