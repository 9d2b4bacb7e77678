import math

import numpy as np
import pytest

from parareal_md.core import REDUCED, BlowUpError, StateVector, state_from_system
from parareal_md.forcefield import ConstantForce, ForceField
from parareal_md.integrate import (Propagator, energy_series, leapfrog_init, leapfrog_step,
                                   propagate, relative_drift, total_energy, velocity_verlet_step)
from parareal_md.potentials import ElectrostaticsBackend, LjParams
from parareal_md.systems import harmonic_dimer, random_system, rock_salt_cluster

from conftest import make_system

NO_FORCES = ForceField(electrostatics=None, lj=None, bonds=False)
BONDS_ONLY = ForceField(electrostatics=None, lj=None, bonds=True)


def nve_cluster(n=20):
    s = rock_salt_cluster(n, spacing=3.4, charge=0.5, kinetic=1.0, seed=1, box=30.0)
    return s, LjParams.from_species(s.species, cutoff=10.0)


def test_propagator_invariants():
    with pytest.raises(ValueError):
        Propagator(NO_FORCES, dt=0.0)
    with pytest.raises(ValueError):
        Propagator(NO_FORCES, steps=0)
    with pytest.raises(ValueError):
        Propagator(NO_FORCES, scheme="rk4")
    assert Propagator(NO_FORCES, dt=2.0, steps=5).interval == 10.0


@pytest.mark.parametrize("step_fn", [velocity_verlet_step, leapfrog_step])
def test_free_drift(step_fn):
    s = make_system([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]], velocities=[[0.1, -0.2, 0.3], [0, 0, 1]])
    out = step_fn(state_from_system(s), s, Propagator(NO_FORCES, dt=0.5))
    np.testing.assert_allclose(out.positions, s.positions + 0.5 * s.velocities, atol=1e-15)
    np.testing.assert_array_equal(out.velocities, s.velocities)


def test_constant_force_verlet():
    f = np.array([0.3, -0.1, 0.2])
    s = make_system([[0.0, 0, 0]], velocities=[[0.05, 0.0, -0.02]], masses=[2.0])
    prop = Propagator(ConstantForce(f), dt=0.1, steps=250)
    out = propagate(state_from_system(s), s, prop)
    t = prop.interval
    want = s.positions[0] + s.velocities[0] * t + 0.5 * f / 2.0 * t**2
    np.testing.assert_allclose(out.positions[0], want, atol=1e-10)
    np.testing.assert_allclose(out.velocities[0], s.velocities[0] + f / 2.0 * t, atol=1e-10)


def test_constant_force_leapfrog():
    f = np.array([0.3, -0.1, 0.2])
    s = make_system([[0.0, 0, 0]], velocities=[[0.05, 0.0, -0.02]], masses=[2.0])
    prop = Propagator(ConstantForce(f), dt=0.1, steps=250, scheme="leapfrog")
    out = propagate(leapfrog_init(state_from_system(s), s, prop), s, prop)
    t = prop.interval
    want = s.positions[0] + s.velocities[0] * t + 0.5 * f / 2.0 * t**2
    np.testing.assert_allclose(out.positions[0], want, atol=1e-10)


def dimer_setup(k=1.0, m=1.0):
    s = harmonic_dimer(k=k, r0=1.0, stretch=0.1, mass=m, units=REDUCED)
    omega = math.sqrt(2 * k / (m / 2))
    return s, omega, 2 * math.pi / omega


def test_dimer_energy_drift():
    s, omega, period = dimer_setup()
    prop = Propagator(BONDS_ONLY, dt=period / 100)
    times, energies = energy_series(s, prop, 10_000)
    assert relative_drift(times, energies) < 1e-4


def test_dimer_matches_analytic_oscillator():
    s, omega, period = dimer_setup()
    prop = Propagator(BONDS_ONLY, dt=period / 1000, steps=1000)
    out = propagate(state_from_system(s), s, prop)  # one full period
    r = np.linalg.norm(out.positions[1] - out.positions[0])
    assert r == pytest.approx(1.1, abs=1e-5)
    half = propagate(state_from_system(s), s, Propagator(BONDS_ONLY, period / 1000, 500))
    assert np.linalg.norm(half.positions[1] - half.positions[0]) == pytest.approx(0.9, abs=1e-5)


def test_leapfrog_matches_verlet_positions():
    s, _, period = dimer_setup()
    dt = period / 100
    vv = state_from_system(s)
    lf = leapfrog_init(vv, s, Propagator(BONDS_ONLY, dt, scheme="leapfrog"))
    for _ in range(300):
        vv = velocity_verlet_step(vv, s, Propagator(BONDS_ONLY, dt))
        lf = leapfrog_step(lf, s, Propagator(BONDS_ONLY, dt, scheme="leapfrog"))
        assert np.max(np.abs(vv.positions - lf.positions)) < 1e-9


def test_steps_one_equals_single_step():
    s, lj = nve_cluster()
    ff = ForceField(ElectrostaticsBackend("cutoff"), lj)
    a = propagate(state_from_system(s), s, Propagator(ff, 2.0, 1))
    b = velocity_verlet_step(state_from_system(s), s, Propagator(ff, 2.0, 1))
    assert np.array_equal(a.data, b.data)


@pytest.mark.parametrize("kind", ["cutoff", "msm"])
def test_composition_is_bitwise(kind):
    s = random_system(40, 18.0, seed=3, kinetic=20.0)
    ff = ForceField(ElectrostaticsBackend(kind, cutoff=8.0), LjParams.from_species(s.species, cutoff=8.0),
                    skin=0.5)
    v = state_from_system(s)
    once = propagate(v, s, Propagator(ff, 2.0, 40))
    twice = propagate(propagate(v, s, Propagator(ff, 2.0, 20)), s, Propagator(ff, 2.0, 20))
    assert np.array_equal(once.data, twice.data)


def test_deterministic():
    s, lj = nve_cluster()
    prop = Propagator(ForceField(ElectrostaticsBackend("msm"), lj), 2.0, 20)
    v = state_from_system(s)
    assert np.array_equal(propagate(v, s, prop).data, propagate(v, s, prop).data)


def test_reversibility():
    s = random_system(50, 20.0, seed=9, kinetic=15.0)
    ff = ForceField(ElectrostaticsBackend("smoothed_cutoff", cutoff=10.0, switch_on=8.0),
                    LjParams.from_species(s.species, cutoff=9.0))
    prop = Propagator(ff, 1.0, 100)
    fwd = propagate(state_from_system(s), s, prop)
    back = propagate(StateVector.from_arrays(fwd.positions, -fwd.velocities), s, prop)
    assert np.max(np.abs(back.positions - s.positions)) < 1e-8
    assert np.max(np.abs(-back.velocities - s.velocities)) < 1e-8


def test_short_nve_direct():
    s, lj = nve_cluster()
    prop = Propagator(ForceField(ElectrostaticsBackend("direct"), lj), 2.0)
    times, energies = energy_series(s, prop, 1000)
    assert relative_drift(times, energies) < 1e-3


def test_total_energy_consistent():
    s, lj = nve_cluster()
    ff = ForceField(ElectrostaticsBackend("direct"), lj)
    times, energies = energy_series(s, Propagator(ff, 2.0), 1)
    assert energies[0] == total_energy(s, ff)


def test_energy_series_needs_verlet():
    s, _, _ = dimer_setup()
    with pytest.raises(ValueError):
        energy_series(s, Propagator(BONDS_ONLY, 0.1, scheme="leapfrog"), 10)


def test_blow_up_reported_with_step():
    s = make_system([[0.0, 0, 0]])
    prop = Propagator(ConstantForce(np.array([np.inf, 0, 0])), 1.0, 5)
    with pytest.raises(BlowUpError) as info:
        propagate(state_from_system(s), s, prop)
    assert info.value.step == 1
