"""Seeded test-system builders."""

from __future__ import annotations

import itertools

import numpy as np

from .core import REAL, ParticleSystem, Units, kinetic_energy


def seeded_velocities(masses: np.ndarray, kinetic: float, rng: np.random.Generator,
                      units: Units = REAL) -> np.ndarray:
    """Random directions on the unit sphere, net momentum removed, scaled to ``kinetic``."""
    n = len(masses)
    if kinetic <= 0 or n < 2:
        return np.zeros((n, 3))
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    v *= rng.uniform(0.5, 1.5, size=(n, 1))
    v -= (masses[:, None] * v).sum(axis=0) / masses.sum()
    return v * np.sqrt(kinetic / kinetic_energy(masses, v, units))


def random_system(n: int, box: float, seed: int = 0, min_distance: float = 2.5,
                  charge: float = 1.0, mass: float = 40.0, n_bonds: int = 0,
                  kinetic: float = 0.0, units: Units = REAL, species: str = "X",
                  max_tries: int = 200_000) -> ParticleSystem:
    """Uniform random atoms in a cube, no pair closer than ``min_distance``.

    Charges alternate in sign so even ``n`` gives a neutral system. Bonds
    join random close pairs at their current length times 1.05.
    """
    rng = np.random.default_rng(seed)
    pos = np.empty((n, 3))
    count = tries = 0
    while count < n:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could not place {n} atoms in a {box} A box")
        trial = rng.uniform(0.0, box, 3)
        if count and np.min(np.linalg.norm(pos[:count] - trial, axis=1)) < min_distance:
            continue
        pos[count] = trial
        count += 1
    charges = charge * np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    masses = np.full(n, mass)
    bonds = []
    if n_bonds:
        d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
        a, b = np.nonzero(np.triu(d < 2.0 * min_distance, k=1))
        pick = rng.permutation(len(a))[:n_bonds]
        bonds = [(int(a[p]), int(b[p]), 5.0, 1.05 * d[a[p], b[p]]) for p in pick]
    vel = seeded_velocities(masses, kinetic, rng, units)
    return ParticleSystem(pos, vel, charges, masses, [box] * 3, tuple(bonds),
                          (species,) * n, units).validate()


def rock_salt_cluster(n: int, spacing: float = 3.6, charge: float = 0.3, mass: float = 40.0,
                      kinetic: float = 0.0, seed: int = 0, box: float | None = None,
                      species: str = "X", units: Units = REAL) -> ParticleSystem:
    """The ``n`` simple-cubic sites nearest the centre, alternating charge like NaCl."""
    side = int(np.ceil(n ** (1 / 3))) + 2
    sites = np.array(list(itertools.product(range(-side, side + 1), repeat=3)), float)
    order = np.lexsort((sites[:, 2], sites[:, 1], sites[:, 0], np.linalg.norm(sites - 0.25, axis=1)))
    sites = sites[order[:n]]
    sign = np.where(sites.sum(axis=1) % 2 == 0, 1.0, -1.0)
    pos = sites * spacing
    extent = pos.max(axis=0) - pos.min(axis=0)
    box = float(box if box is not None else max(extent.max() + 2 * spacing, 1.0))
    pos = pos - pos.min(axis=0) + 0.5 * (box - extent)
    masses = np.full(n, mass)
    rng = np.random.default_rng(seed)
    vel = seeded_velocities(masses, kinetic, rng, units)
    return ParticleSystem(pos, vel, charge * sign, masses, [box] * 3, (),
                          (species,) * n, units).validate()


def harmonic_dimer(k: float = 1.0, r0: float = 1.0, stretch: float = 0.1, mass: float = 1.0,
                   units: Units = REAL) -> ParticleSystem:
    """Two uncharged atoms joined by one bond, released at rest from r0 + stretch."""
    r = r0 + stretch
    pos = np.array([[0.0, 0.0, 0.0], [r, 0.0, 0.0]]) + 5.0
    return ParticleSystem(pos, np.zeros((2, 3)), np.zeros(2), np.full(2, mass), [10.0] * 3,
                          ((0, 1, k, r0),), units=units)
