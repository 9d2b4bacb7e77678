"""Domain types: particle systems, flat state vectors and force reports.

Units are angstrom, femtosecond, atomic mass unit and elementary charge.
Energies are kcal/mol in the ``REAL`` profile; the ``REDUCED`` profile sets
every conversion factor to one so analytic checks stay readable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

#: Coulomb prefactor 1/(4 pi eps0) in kcal*A/(mol*e^2).
COULOMB_K = 332.0636

#: (kcal/mol/A) / amu expressed in A/fs^2.
ACCEL_FACTOR = 4.184e-4

COINCIDENCE_TOL = 1e-6

COMPONENT_NAMES = ("bonded", "lj", "coulomb_short", "coulomb_long")


class MDError(Exception):
    """Base class for engine errors."""


class DimensionError(MDError, ValueError):
    pass


class SingularityError(MDError, ValueError):
    """Two interacting atoms are (numerically) on top of each other."""


class CoverageError(MDError, ValueError):
    """An atom or grid node lies outside the region covered by a grid."""


class ConfigurationError(MDError, ValueError):
    pass


class BlowUpError(MDError, FloatingPointError):
    """Integration produced non-finite coordinates."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class Units:
    name: str
    coulomb_k: float
    accel_factor: float


REAL = Units("real", COULOMB_K, ACCEL_FACTOR)
REDUCED = Units("reduced", 1.0, 1.0)
UNIT_PROFILES = {"real": REAL, "reduced": REDUCED}


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ParticleSystem:
    """Open-boundary point-charge system.

    ``bonds`` rows are ``(i, j, k_bond, r0)``. ``box`` only sets grid
    extents and cell binning; nothing wraps.
    """

    positions: np.ndarray
    velocities: np.ndarray
    charges: np.ndarray
    masses: np.ndarray
    box: np.ndarray
    bonds: tuple[tuple[int, int, float, float], ...] = ()
    species: tuple[str, ...] = ()
    units: Units = REAL

    def __post_init__(self):
        pos = _frozen(self.positions).reshape(-1, 3)
        n = len(pos)
        if n < 1:
            raise ValueError("a system needs at least one atom")
        vel = _frozen(self.velocities).reshape(-1, 3)
        q = _frozen(self.charges).reshape(-1)
        m = _frozen(self.masses).reshape(-1)
        box = _frozen(self.box).reshape(-1)
        if vel.shape != (n, 3) or q.shape != (n,) or m.shape != (n,):
            raise DimensionError("positions, velocities, charges and masses disagree on atom count")
        if box.shape != (3,) or np.any(box <= 0):
            raise ValueError("box must be three positive edge lengths")
        if np.any(m <= 0):
            raise ValueError("masses must be strictly positive")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise ValueError("positions and velocities must be finite")
        bonds = tuple((int(i), int(j), float(k), float(r0)) for i, j, k, r0 in self.bonds)
        for i, j, _, _ in bonds:
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"bad bond indices ({i}, {j}) for {n} atoms")
        species = tuple(self.species) if self.species else ("X",) * n
        if len(species) != n:
            raise DimensionError("species labels disagree on atom count")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "charges", q)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "bonds", bonds)
        object.__setattr__(self, "species", species)

    @property
    def n(self) -> int:
        return len(self.positions)

    def validate(self) -> "ParticleSystem":
        """Reject coincident atoms. Run once at load time, not every step."""
        i, j, r = closest_pair(self.positions)
        if r < COINCIDENCE_TOL:
            raise SingularityError(f"atoms {i} and {j} coincide (distance {r:.3g} A)")
        return self

    def with_positions(self, positions) -> "ParticleSystem":
        return replace(self, positions=positions)

    def with_velocities(self, velocities) -> "ParticleSystem":
        return replace(self, velocities=velocities)

    def bond_arrays(self):
        """Bond records as ``(i, j, k, r0)`` numpy arrays."""
        if not self.bonds:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, np.zeros(0), np.zeros(0)
        b = np.array(self.bonds, dtype=float)
        return b[:, 0].astype(np.int64), b[:, 1].astype(np.int64), b[:, 2], b[:, 3]

    def excluded_keys(self) -> np.ndarray:
        """Sorted ``i * n + j`` keys (i < j) of bonded pairs."""
        i, j, _, _ = self.bond_arrays()
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        return np.unique(lo * self.n + hi)


def closest_pair(positions: np.ndarray) -> tuple[int, int, float]:
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    if n < 2:
        return 0, 0, np.inf
    best = (0, 1, np.inf)
    # row blocks keep memory bounded for large n
    cols = np.arange(n)
    for start in range(0, n - 1, 256):
        rows = np.arange(start, min(start + 256, n))
        d = np.linalg.norm(pos[rows, None, :] - pos[None, :, :], axis=-1)
        d[rows[:, None] >= cols[None, :]] = np.inf
        a, b = divmod(int(np.argmin(d)), n)
        if d[a, b] < best[2]:
            best = (int(rows[a]), b, float(d[a, b]))
    return best


@dataclass(frozen=True, eq=False)
class StateVector:
    """Flat ``[positions..., velocities...]`` vector of length 6n.

    Any length is accepted so the vector algebra can be used on its own;
    the position/velocity views need a multiple of 6.
    """

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data).reshape(-1))

    @property
    def n(self) -> int:
        if len(self.data) % 6:
            raise DimensionError(f"state length {len(self.data)} is not a multiple of 6")
        return len(self.data) // 6

    @property
    def positions(self) -> np.ndarray:
        return self.data[: 3 * self.n].reshape(-1, 3)

    @property
    def velocities(self) -> np.ndarray:
        return self.data[3 * self.n:].reshape(-1, 3)

    @classmethod
    def from_arrays(cls, positions, velocities) -> "StateVector":
        return cls(np.concatenate([np.ravel(positions), np.ravel(velocities)]))

    def __len__(self):
        return len(self.data)


def state_from_system(system: ParticleSystem) -> StateVector:
    return StateVector.from_arrays(system.positions, system.velocities)


def system_with_state(system: ParticleSystem, state: StateVector) -> ParticleSystem:
    if state.n != system.n:
        raise DimensionError(f"state holds {state.n} atoms, system has {system.n}")
    return replace(system, positions=state.positions, velocities=state.velocities)


def state_axpy(alpha: float, x: StateVector, y: StateVector) -> StateVector:
    """Return ``alpha * x + y``."""
    if len(x) != len(y):
        raise DimensionError(f"length mismatch: {len(x)} vs {len(y)}")
    return StateVector(alpha * x.data + y.data)


def state_distance(x: StateVector, y: StateVector, mode: str = "max_position") -> float:
    """Per-atom displacement norm between two states (positions only)."""
    if len(x) != len(y):
        raise DimensionError(f"length mismatch: {len(x)} vs {len(y)}")
    disp = np.linalg.norm(x.positions - y.positions, axis=1)
    if mode == "max_position":
        return float(disp.max())
    if mode == "rms_position":
        return float(np.sqrt(np.mean(disp ** 2)))
    raise ValueError(f"unknown distance mode {mode!r}")


@dataclass(frozen=True, eq=False)
class ForceReport:
    """Forces, per-atom energy shares and the energy decomposition.

    ``per_atom_potential`` splits every pair energy evenly between its two
    atoms, so it sums to ``total_energy``.
    """

    forces: np.ndarray
    per_atom_potential: np.ndarray
    components: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        comps = {name: 0.0 for name in COMPONENT_NAMES}
        comps.update({k: float(v) for k, v in self.components.items()})
        object.__setattr__(self, "forces", _frozen(self.forces).reshape(-1, 3))
        object.__setattr__(self, "per_atom_potential", _frozen(self.per_atom_potential).reshape(-1))
        object.__setattr__(self, "components", comps)

    @property
    def total_energy(self) -> float:
        return float(sum(self.components.values()))

    @classmethod
    def zeros(cls, n: int) -> "ForceReport":
        return cls(np.zeros((n, 3)), np.zeros(n))

    @classmethod
    def single(cls, name: str, forces, per_atom, energy: float) -> "ForceReport":
        return cls(forces, per_atom, {name: energy})

    def __add__(self, other: "ForceReport") -> "ForceReport":
        comps = {k: self.components[k] + other.components.get(k, 0.0) for k in self.components}
        return ForceReport(self.forces + other.forces,
                           self.per_atom_potential + other.per_atom_potential, comps)


def sum_reports(reports: Sequence[ForceReport], n: int) -> ForceReport:
    total = ForceReport.zeros(n)
    for r in reports:
        total = total + r
    return total


def kinetic_energy(masses: np.ndarray, velocities: np.ndarray, units: Units = REAL) -> float:
    return float(0.5 * np.sum(masses[:, None] * velocities ** 2) / units.accel_factor)
