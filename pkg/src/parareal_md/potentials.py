"""Short-range terms and the cheap electrostatics backends.

Every pair evaluator takes its pairs from a neighbor list, drops pairs
beyond the cutoff and bonded (excluded) pairs, then accumulates in sorted
pair order so results are bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import erfc

from .core import COINCIDENCE_TOL, ForceReport, ParticleSystem, SingularityError
from .neighbor import DEFAULT_SKIN, NeighborList, build_neighbor_list

if TYPE_CHECKING:
    from .msm import MsmParams

BACKEND_KINDS = ("direct", "cutoff", "smoothed_cutoff", "wolf", "msm")

DEFAULT_CUTOFF = 12.0
DEFAULT_SWITCH_ON = 10.0
DEFAULT_WOLF_ALPHA = 0.2

# (epsilon kcal/mol, sigma A); mixed with Lorentz-Berthelot rules
DEFAULT_LJ_TABLE = {
    "Ar": (0.2381, 3.405),
    "Ne": (0.0691, 2.78),
    "Kr": (0.3339, 3.636),
    "Na": (0.0874, 2.439),
    "Cl": (0.0356, 4.478),
    "X": (0.2, 3.2),
}


@dataclass(frozen=True, eq=False)
class LjParams:
    """Per-atom LJ parameters; pair values use arithmetic sigma, geometric epsilon."""

    epsilon: np.ndarray
    sigma: np.ndarray
    cutoff: float = 10.0

    def __post_init__(self):
        eps = np.asarray(self.epsilon, float).reshape(-1)
        sig = np.asarray(self.sigma, float).reshape(-1)
        if eps.shape != sig.shape:
            raise ValueError("epsilon and sigma lengths differ")
        if np.any(eps < 0) or np.any(sig <= 0):
            raise ValueError("need epsilon >= 0 and sigma > 0")
        if len(sig) and self.cutoff <= sig.max():
            raise ValueError("LJ cutoff must exceed every sigma")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "sigma", sig)

    @classmethod
    def uniform(cls, n: int, epsilon: float, sigma: float, cutoff: float = 10.0) -> "LjParams":
        return cls(np.full(n, epsilon), np.full(n, sigma), cutoff)

    @classmethod
    def from_species(cls, species, table=None, cutoff: float = 10.0) -> "LjParams":
        table = DEFAULT_LJ_TABLE if table is None else {**DEFAULT_LJ_TABLE, **table}
        try:
            vals = np.array([table[s] for s in species], float)
        except KeyError as exc:
            raise ValueError(f"no LJ parameters for species {exc.args[0]!r}") from None
        return cls(vals[:, 0], vals[:, 1], cutoff)

    def pair(self, i: np.ndarray, j: np.ndarray):
        return np.sqrt(self.epsilon[i] * self.epsilon[j]), 0.5 * (self.sigma[i] + self.sigma[j])


@dataclass(frozen=True)
class ElectrostaticsBackend:
    kind: str = "direct"
    cutoff: float = DEFAULT_CUTOFF
    wolf_alpha: float = DEFAULT_WOLF_ALPHA
    switch_on: float = DEFAULT_SWITCH_ON
    msm_params: "MsmParams | None" = None

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"unknown electrostatics backend {self.kind!r}")
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if self.kind == "smoothed_cutoff" and not 0 < self.switch_on < self.cutoff:
            raise ValueError("need 0 < switch_on < cutoff")
        if self.kind == "wolf" and self.wolf_alpha <= 0:
            raise ValueError("wolf_alpha must be positive")
        if self.kind == "msm" and self.msm_params is None:
            from .msm import MsmParams

            object.__setattr__(self, "msm_params", MsmParams(a=self.cutoff))

    @property
    def pair_cutoff(self) -> float | None:
        """Distance the neighbor list has to cover, or None for all-pairs."""
        if self.kind == "direct":
            return None
        if self.kind == "msm":
            return self.msm_params.a
        return self.cutoff


# -- pair machinery ---------------------------------------------------------


def _ensure_list(system: ParticleSystem, nlist: NeighborList | None, cutoff: float) -> NeighborList:
    if nlist is None or nlist.cutoff + nlist.skin < cutoff:
        return build_neighbor_list(system, cutoff, DEFAULT_SKIN)
    return nlist


def pair_geometry(system: ParticleSystem, i: np.ndarray, j: np.ndarray,
                  cutoff: float | None = None, exclude_bonded: bool = True):
    """Filter candidate pairs; return ``(i, j, rij_vec, r)`` with ``rij = r_i - r_j``."""
    if exclude_bonded and system.bonds:
        keys = system.excluded_keys()
        keep = ~np.isin(i * system.n + j, keys)
        i, j = i[keep], j[keep]
    d = system.positions[i] - system.positions[j]
    r = np.sqrt(np.einsum("ij,ij->i", d, d))
    if cutoff is not None:
        keep = r <= cutoff
        i, j, d, r = i[keep], j[keep], d[keep], r[keep]
    if len(r) and r.min() < COINCIDENCE_TOL:
        k = int(np.argmin(r))
        raise SingularityError(f"atoms {i[k]} and {j[k]} are {r[k]:.3g} A apart")
    return i, j, d, r


def accumulate_pairs(n: int, i, j, d, r, energy, dedr, name: str) -> ForceReport:
    """Turn per-pair energies and dE/dr into a ForceReport."""
    fvec = (-dedr / r)[:, None] * d  # force on i
    forces = np.zeros((n, 3))
    for c in range(3):
        forces[:, c] = np.bincount(i, fvec[:, c], n) - np.bincount(j, fvec[:, c], n)
    per_atom = 0.5 * (np.bincount(i, energy, n) + np.bincount(j, energy, n))
    return ForceReport.single(name, forces, per_atom, float(np.sum(energy)))


def all_pairs(n: int):
    i, j = np.triu_indices(n, k=1)
    return i.astype(np.int64), j.astype(np.int64)


# -- short-range terms ------------------------------------------------------


def lj_energy_forces(system: ParticleSystem, params: LjParams,
                     nlist: NeighborList | None = None) -> ForceReport:
    nlist = _ensure_list(system, nlist, params.cutoff)
    i, j, d, r = pair_geometry(system, nlist.i, nlist.j, params.cutoff)
    eps, sig = params.pair(i, j)
    sr6 = (sig / r) ** 6
    energy = 4.0 * eps * (sr6 * sr6 - sr6)
    dedr = 4.0 * eps * (-12.0 * sr6 * sr6 + 6.0 * sr6) / r
    return accumulate_pairs(system.n, i, j, d, r, energy, dedr, "lj")


def bond_energy_forces(system: ParticleSystem) -> ForceReport:
    """Harmonic bonds, U = k (r - r0)^2 (no 1/2 factor)."""
    if not system.bonds:
        return ForceReport.zeros(system.n)
    i, j, k, r0 = system.bond_arrays()
    d = system.positions[i] - system.positions[j]
    r = np.sqrt(np.einsum("ij,ij->i", d, d))
    if r.min() < COINCIDENCE_TOL:
        b = int(np.argmin(r))
        raise SingularityError(f"bonded atoms {i[b]} and {j[b]} coincide")
    stretch = r - r0
    return accumulate_pairs(system.n, i, j, d, r, k * stretch ** 2, 2.0 * k * stretch, "bonded")


# -- electrostatics ---------------------------------------------------------


def coulomb_direct(system: ParticleSystem) -> ForceReport:
    """O(N^2) Coulomb sum over every non-bonded pair; the reference for all backends."""
    if system.n < 2:
        return ForceReport.zeros(system.n)
    i, j, d, r = pair_geometry(system, *all_pairs(system.n))
    qq = system.units.coulomb_k * system.charges[i] * system.charges[j]
    return accumulate_pairs(system.n, i, j, d, r, qq / r, -qq / r ** 2, "coulomb_short")


def coulomb_cutoff(system: ParticleSystem, backend: ElectrostaticsBackend,
                   nlist: NeighborList | None = None) -> ForceReport:
    nlist = _ensure_list(system, nlist, backend.cutoff)
    i, j, d, r = pair_geometry(system, nlist.i, nlist.j, backend.cutoff)
    qq = system.units.coulomb_k * system.charges[i] * system.charges[j]
    return accumulate_pairs(system.n, i, j, d, r, qq / r, -qq / r ** 2, "coulomb_short")


def switch(r, r_on: float, r_off: float):
    """C1 switching polynomial in r^2 and its derivative dS/dr."""
    r = np.asarray(r, float)
    r2, on2, off2 = r * r, r_on * r_on, r_off * r_off
    denom = (off2 - on2) ** 3
    a = off2 - r2
    s = a * a * (off2 + 2.0 * r2 - 3.0 * on2) / denom
    ds = 12.0 * r * a * (on2 - r2) / denom
    s = np.where(r <= r_on, 1.0, np.where(r >= r_off, 0.0, s))
    ds = np.where((r <= r_on) | (r >= r_off), 0.0, ds)
    return s, ds


def coulomb_smoothed_cutoff(system: ParticleSystem, backend: ElectrostaticsBackend,
                            nlist: NeighborList | None = None) -> ForceReport:
    nlist = _ensure_list(system, nlist, backend.cutoff)
    i, j, d, r = pair_geometry(system, nlist.i, nlist.j, backend.cutoff)
    qq = system.units.coulomb_k * system.charges[i] * system.charges[j]
    s, ds = switch(r, backend.switch_on, backend.cutoff)
    energy = qq * s / r
    dedr = qq * (ds / r - s / r ** 2)
    return accumulate_pairs(system.n, i, j, d, r, energy, dedr, "coulomb_short")


def wolf_self_coefficient(alpha: float, rc: float) -> float:
    return math.erfc(alpha * rc) / (2.0 * rc) + alpha / math.sqrt(math.pi)


def coulomb_wolf(system: ParticleSystem, backend: ElectrostaticsBackend,
                 nlist: NeighborList | None = None) -> ForceReport:
    """Damped, shifted pair sum plus the charge self-term.

    The pair term goes to ``coulomb_short``, the self-term to ``coulomb_long``.
    """
    alpha, rc = backend.wolf_alpha, backend.cutoff
    kc = system.units.coulomb_k
    nlist = _ensure_list(system, nlist, rc)
    i, j, d, r = pair_geometry(system, nlist.i, nlist.j, rc)
    qq = kc * system.charges[i] * system.charges[j]
    shift = math.erfc(alpha * rc) / rc
    energy = qq * (erfc(alpha * r) / r - shift)
    dedr = -qq * (erfc(alpha * r) / r ** 2
                  + 2.0 * alpha / math.sqrt(math.pi) * np.exp(-(alpha * r) ** 2) / r)
    report = accumulate_pairs(system.n, i, j, d, r, energy, dedr, "coulomb_short")
    self_atom = -kc * wolf_self_coefficient(alpha, rc) * system.charges ** 2
    return report + ForceReport.single("coulomb_long", np.zeros((system.n, 3)), self_atom,
                                       float(self_atom.sum()))


def electrostatics(system: ParticleSystem, backend: ElectrostaticsBackend,
                   nlist: NeighborList | None = None) -> ForceReport:
    if backend.kind == "direct":
        return coulomb_direct(system)
    if backend.kind == "cutoff":
        return coulomb_cutoff(system, backend, nlist)
    if backend.kind == "smoothed_cutoff":
        return coulomb_smoothed_cutoff(system, backend, nlist)
    if backend.kind == "wolf":
        return coulomb_wolf(system, backend, nlist)
    from .msm import msm_energy_forces

    return msm_energy_forces(system, backend.msm_params, nlist)
