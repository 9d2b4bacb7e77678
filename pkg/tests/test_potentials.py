import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import erfc

from parareal_md.core import REAL, REDUCED, SingularityError
from parareal_md.forcefield import ForceField
from parareal_md.potentials import (ElectrostaticsBackend, LjParams, bond_energy_forces,
                                    coulomb_cutoff, coulomb_direct, coulomb_smoothed_cutoff,
                                    coulomb_wolf, electrostatics, lj_energy_forces, switch)
from parareal_md.systems import random_system

from conftest import fd_forces, make_system, rel_norm_error

PAIRWISE = ("direct", "cutoff", "smoothed_cutoff", "wolf")


def pair(r, q=(0.0, 0.0), **kw):
    return make_system([[0.0, 0, 0], [r, 0, 0]], charges=q, **kw)


def brute_coulomb(pos, q, k=1.0, cutoff=np.inf):
    total = 0.0
    for i, j in itertools.combinations(range(len(pos)), 2):
        r = math.dist(pos[i], pos[j])
        if r <= cutoff:
            total += k * q[i] * q[j] / r
    return total


# -- Lennard-Jones ------------------------------------------------------------


def test_lj_zero_at_sigma():
    params = LjParams.uniform(2, 0.3, 3.0, cutoff=9.0)
    rep = lj_energy_forces(pair(3.0), params)
    assert rep.total_energy == pytest.approx(0.0, abs=1e-15)


def test_lj_minimum():
    eps, sig = 0.3, 3.0
    params = LjParams.uniform(2, eps, sig, cutoff=9.0)
    rmin = 2 ** (1 / 6) * sig
    rep = lj_energy_forces(pair(rmin), params)
    assert rep.total_energy == pytest.approx(-eps, rel=1e-12)
    assert np.abs(rep.forces).max() < 1e-12
    # a plain scan of the formula puts the minimum in the same place
    rs = np.linspace(2.8, 5.0, 200_001)
    u = 4 * eps * ((sig / rs) ** 12 - (sig / rs) ** 6)
    assert rs[np.argmin(u)] == pytest.approx(rmin, abs=2e-5)


def test_lj_truncated():
    params = LjParams.uniform(2, 0.3, 3.0, cutoff=9.0)
    rep = lj_energy_forces(pair(9.5), params)
    assert rep.total_energy == 0.0 and not np.any(rep.forces)


def test_lj_mixing_rules():
    params = LjParams(np.array([0.1, 0.4]), np.array([2.0, 4.0]), cutoff=10.0)
    eps, sig = params.pair(np.array([0]), np.array([1]))
    assert eps[0] == pytest.approx(0.2) and sig[0] == pytest.approx(3.0)


def test_lj_invariants():
    with pytest.raises(ValueError):
        LjParams.uniform(2, -1.0, 3.0)
    with pytest.raises(ValueError):
        LjParams.uniform(2, 1.0, 0.0)
    with pytest.raises(ValueError):
        LjParams.uniform(2, 1.0, 3.0, cutoff=2.0)
    with pytest.raises(ValueError):
        LjParams.from_species(["Unobtainium"])


def test_lj_singularity():
    s = make_system([[0.0, 0, 0], [1e-7, 0, 0]])
    with pytest.raises(SingularityError):
        lj_energy_forces(s, LjParams.uniform(2, 0.3, 3.0))


# -- bonds --------------------------------------------------------------------


def test_bond_equilibrium():
    rep = bond_energy_forces(pair(1.3, bonds=[(0, 1, 4.0, 1.3)]))
    assert rep.total_energy == pytest.approx(0.0, abs=1e-15)
    assert np.abs(rep.forces).max() < 1e-14


def test_bond_stretched():
    rep = bond_energy_forces(pair(2.0, bonds=[(0, 1, 1.0, 1.0)]))
    assert rep.total_energy == pytest.approx(1.0)
    np.testing.assert_allclose(rep.forces, [[2.0, 0, 0], [-2.0, 0, 0]], atol=1e-14)
    assert rep.components["bonded"] == pytest.approx(1.0)


def test_no_bonds_zero():
    rep = bond_energy_forces(pair(2.0))
    assert rep.total_energy == 0.0 and not np.any(rep.forces)


def test_bond_singularity():
    s = make_system([[0.0, 0, 0], [0.0, 0, 1e-8]], bonds=[(0, 1, 1.0, 1.0)])
    with pytest.raises(SingularityError):
        bond_energy_forces(s)


# -- Coulomb --------------------------------------------------------------------


def test_direct_examples():
    assert coulomb_direct(pair(2.0, (1.0, -1.0))).total_energy == pytest.approx(-0.5)
    assert coulomb_direct(make_system([[0.0, 0, 0]], charges=[1.0])).total_energy == 0.0
    corners = np.array(list(itertools.product((0.0, 1.0), repeat=3)))
    rep = coulomb_direct(make_system(corners, charges=np.ones(8)))
    want = 12 + 12 / math.sqrt(2) + 4 / math.sqrt(3)
    assert rep.total_energy == pytest.approx(want, rel=1e-13)
    assert rep.total_energy == pytest.approx(22.794682, abs=1e-6)


def test_direct_real_units():
    s = make_system([[0.0, 0, 0], [2.0, 0, 0]], charges=[1.0, -1.0], units=REAL)
    assert coulomb_direct(s).total_energy == pytest.approx(-332.0636 / 2)


def test_direct_coincident_pair():
    s = make_system([[0.0, 0, 0], [0, 0, 5e-7]], charges=[1.0, 1.0])
    with pytest.raises(SingularityError):
        coulomb_direct(s)


def test_bonded_pairs_excluded():
    s = make_system([[0.0, 0, 0], [1.5, 0, 0], [0, 4.0, 0]], charges=[1.0, -1.0, 0.5],
                    bonds=[(0, 1, 1.0, 1.5)])
    pos = s.positions
    want = 0.5 / 4.0 - 0.5 / math.dist(pos[1], pos[2])
    assert coulomb_direct(s).total_energy == pytest.approx(want, rel=1e-13)
    lj = LjParams.uniform(3, 0.2, 1.0, cutoff=9.0)
    only_13 = make_system(pos[[0, 2]])
    assert lj_energy_forces(s, lj).total_energy == pytest.approx(
        lj_energy_forces(only_13, LjParams.uniform(2, 0.2, 1.0, 9.0)).total_energy
        + lj_energy_forces(make_system(pos[[1, 2]]), LjParams.uniform(2, 0.2, 1.0, 9.0)).total_energy)


def test_cutoff_equals_direct_when_nothing_truncated():
    s = random_system(60, 15.0, seed=4, units=REDUCED)
    big = ElectrostaticsBackend("cutoff", cutoff=100.0)
    a, b = coulomb_cutoff(s, big), coulomb_direct(s)
    assert abs(a.total_energy - b.total_energy) <= 1e-10 * abs(b.total_energy)
    np.testing.assert_allclose(a.forces, b.forces, rtol=0, atol=1e-10 * np.abs(b.forces).max())


def test_cutoff_beyond_range_is_zero():
    rep = coulomb_cutoff(pair(10.1, (1.0, 1.0)), ElectrostaticsBackend("cutoff", cutoff=10.0))
    assert rep.total_energy == 0.0


def test_cutoff_matches_filtered_brute_force():
    s = random_system(100, 30.0, seed=8, units=REDUCED)
    rep = coulomb_cutoff(s, ElectrostaticsBackend("cutoff", cutoff=10.0))
    want = brute_coulomb(s.positions, s.charges, cutoff=10.0)
    assert rep.total_energy == pytest.approx(want, rel=1e-12)


def test_switch_function_form():
    on, off = 8.0, 10.0
    r = np.linspace(8.0, 10.0, 9)
    s, _ = switch(r, on, off)
    want = (off**2 - r**2) ** 2 * (off**2 + 2 * r**2 - 3 * on**2) / (off**2 - on**2) ** 3
    np.testing.assert_allclose(s, want, atol=1e-14)
    h = 1e-6
    rr = np.linspace(8.05, 9.95, 7)
    fd = (switch(rr + h, on, off)[0] - switch(rr - h, on, off)[0]) / (2 * h)
    np.testing.assert_allclose(switch(rr, on, off)[1], fd, atol=1e-8)


def test_smoothed_cutoff_regions():
    be = ElectrostaticsBackend("smoothed_cutoff", cutoff=10.0, switch_on=8.0)
    inside = coulomb_smoothed_cutoff(pair(7.5, (1.0, -1.0)), be)
    assert inside.total_energy == pytest.approx(-1 / 7.5, rel=1e-14)
    assert coulomb_smoothed_cutoff(pair(10.0, (1.0, -1.0)), be).total_energy == 0.0
    mid = coulomb_smoothed_cutoff(pair(9.0, (1.0, -1.0)), be).total_energy
    assert -1 / 9.0 < mid < 0.0


def test_smoothed_force_continuous_at_switch_on():
    be = ElectrostaticsBackend("smoothed_cutoff", cutoff=10.0, switch_on=8.0)
    f = lambda r: coulomb_smoothed_cutoff(pair(r, (1.0, -1.0)), be).forces[0, 0]
    assert abs(f(8.0 - 1e-9) - f(8.0 + 1e-9)) < 1e-8
    assert abs(f(10.0 - 1e-9)) < 1e-8


def test_wolf_single_ion():
    s = make_system([[0.0, 0, 0]], charges=[1.0])
    be = ElectrostaticsBackend("wolf", cutoff=10.0, wolf_alpha=0.2)
    want = -(erfc(2.0) / 20 + 0.2 / math.sqrt(math.pi))
    assert coulomb_wolf(s, be).total_energy == pytest.approx(want, rel=1e-12)
    assert coulomb_wolf(s, be).total_energy == pytest.approx(-0.1130718, abs=1e-7)


def test_wolf_zero_charges():
    s = random_system(10, 12.0, seed=1, charge=0.0)
    rep = coulomb_wolf(s, ElectrostaticsBackend("wolf"))
    assert rep.total_energy == 0.0 and not np.any(rep.forces)


def test_wolf_limit_approaches_direct():
    s = pair(3.0, (1.0, -1.0))
    be = ElectrostaticsBackend("wolf", cutoff=30.0, wolf_alpha=1e-6)
    direct = coulomb_direct(s).total_energy
    assert coulomb_wolf(s, be).total_energy == pytest.approx(direct, rel=1e-3)


def test_wolf_formula_on_random_system():
    s = random_system(30, 14.0, seed=2, units=REDUCED)
    alpha, rc = 0.25, 9.0
    rep = coulomb_wolf(s, ElectrostaticsBackend("wolf", cutoff=rc, wolf_alpha=alpha))
    total = 0.0
    for i, j in itertools.combinations(range(s.n), 2):
        r = math.dist(s.positions[i], s.positions[j])
        if r <= rc:
            total += s.charges[i] * s.charges[j] * (math.erfc(alpha * r) / r - math.erfc(alpha * rc) / rc)
    total -= (math.erfc(alpha * rc) / (2 * rc) + alpha / math.sqrt(math.pi)) * np.sum(s.charges ** 2)
    assert rep.total_energy == pytest.approx(total, rel=1e-12)


def test_backend_invariants():
    with pytest.raises(ValueError):
        ElectrostaticsBackend("pme")
    with pytest.raises(ValueError):
        ElectrostaticsBackend("smoothed_cutoff", cutoff=10.0, switch_on=10.0)
    with pytest.raises(ValueError):
        ElectrostaticsBackend("wolf", wolf_alpha=0.0)


# -- properties ---------------------------------------------------------------


@given(seed=st.integers(0, 10_000), kind=st.sampled_from(PAIRWISE))
def test_pairwise_net_force_vanishes(seed, kind):
    s = random_system(40, 16.0, seed=seed, n_bonds=5)
    ff = ForceField(ElectrostaticsBackend(kind, cutoff=9.0, switch_on=7.0),
                    LjParams.from_species(s.species, cutoff=8.0))
    rep = ff.compute(s)
    scale = np.abs(rep.forces).sum()
    assert np.linalg.norm(rep.forces.sum(axis=0)) <= 1e-9 * max(scale, 1.0)


@pytest.mark.parametrize("kind", PAIRWISE)
def test_gradient_consistency(kind):
    for seed in range(3):
        s = random_system(50, 16.0, seed=seed, n_bonds=6)
        ff = ForceField(ElectrostaticsBackend(kind, cutoff=10.0, switch_on=8.0),
                        LjParams.from_species(s.species, cutoff=9.0))
        err = rel_norm_error(ff.compute(s).forces, fd_forces(lambda x: ff.compute(x).total_energy, s))
        assert err < 1e-4, (kind, seed, err)


def mean_truncation_error(seeds, cutoffs=(6.0, 9.0, 12.0, 15.0, 20.0)):
    errs = np.zeros(len(cutoffs))
    for seed in seeds:
        s = random_system(200, 30.0, seed=seed, units=REDUCED)
        exact = coulomb_direct(s).total_energy
        for c, cut in enumerate(cutoffs):
            errs[c] += abs(coulomb_cutoff(s, ElectrostaticsBackend("cutoff", cutoff=cut)).total_energy
                           - exact) / len(seeds)
    return errs


@pytest.mark.xfail(strict=True, reason="10-system average is too noisy for a strict ordering; "
                   "the per-step decrease in expectation is a few percent")
def test_truncation_error_monotone_ten_systems():
    errs = mean_truncation_error(range(100, 110))
    assert np.all(np.diff(errs) <= 0), errs


def test_truncation_error_monotone_in_expectation():
    errs = mean_truncation_error(range(1000, 1200))
    assert np.all(np.diff(errs) <= 0), errs


def test_dispatcher_routes_every_kind():
    s = random_system(20, 12.0, seed=0, units=REDUCED)
    for kind in ("direct", "cutoff", "smoothed_cutoff", "wolf", "msm"):
        rep = electrostatics(s, ElectrostaticsBackend(kind, cutoff=8.0, switch_on=6.0))
        assert np.isfinite(rep.total_energy)
