"""Composite force fields: harmonic bonds + Lennard-Jones + one electrostatics backend."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ForceReport, ParticleSystem
from .neighbor import DEFAULT_SKIN, NeighborList, build_neighbor_list, list_valid
from .potentials import (ElectrostaticsBackend, LjParams, bond_energy_forces, electrostatics,
                         lj_energy_forces)


@dataclass(frozen=True)
class ForceField:
    electrostatics: ElectrostaticsBackend | None = field(default_factory=ElectrostaticsBackend)
    lj: LjParams | None = None
    bonds: bool = True
    skin: float = DEFAULT_SKIN

    @property
    def list_cutoff(self) -> float | None:
        cuts = []
        if self.lj is not None:
            cuts.append(self.lj.cutoff)
        if self.electrostatics is not None and self.electrostatics.pair_cutoff is not None:
            cuts.append(self.electrostatics.pair_cutoff)
        return max(cuts) if cuts else None

    def refresh_list(self, system: ParticleSystem, nlist: NeighborList | None) -> NeighborList | None:
        cutoff = self.list_cutoff
        if cutoff is None:
            return None
        if nlist is None or nlist.cutoff < cutoff or not list_valid(nlist, system):
            return build_neighbor_list(system, cutoff, self.skin)
        return nlist

    def compute(self, system: ParticleSystem, nlist: NeighborList | None = None) -> ForceReport:
        """Evaluate every active term; pass a valid list to skip the rebuild."""
        nlist = self.refresh_list(system, nlist)
        report = ForceReport.zeros(system.n)
        if self.bonds and system.bonds:
            report = report + bond_energy_forces(system)
        if self.lj is not None:
            report = report + lj_energy_forces(system, self.lj, nlist)
        if self.electrostatics is not None:
            report = report + electrostatics(system, self.electrostatics, nlist)
        return report

    def describe(self) -> str:
        parts = []
        if self.electrostatics is not None:
            parts.append(self.electrostatics.kind)
        if self.lj is not None:
            parts.append("lj")
        if self.bonds:
            parts.append("bonds")
        return "+".join(parts) or "none"


@dataclass(frozen=True, eq=False)
class ConstantForce:
    """Uniform external force field, U = -sum f . r. Used for closed-form checks."""

    forces: np.ndarray
    list_cutoff = None

    def refresh_list(self, system, nlist):
        return None

    def compute(self, system: ParticleSystem, nlist=None) -> ForceReport:
        f = np.broadcast_to(np.asarray(self.forces, float), (system.n, 3))
        per_atom = -np.einsum("ij,ij->i", f, system.positions)
        return ForceReport(f, per_atom, {"external": float(per_atom.sum())})
