"""Sequential-in-time propagators: velocity Verlet and leap-frog."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .core import (BlowUpError, ForceReport, ParticleSystem, StateVector, kinetic_energy,
                   state_from_system)
from .forcefield import ForceField

DEFAULT_DT = 2.0
SCHEMES = ("verlet", "leapfrog")


@dataclass(frozen=True)
class Propagator:
    """A force field plus a time discretisation; one call advances ``steps * dt``."""

    forcefield: ForceField
    dt: float = DEFAULT_DT
    steps: int = 1
    scheme: str = "verlet"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown integration scheme {self.scheme!r}")

    @property
    def interval(self) -> float:
        return self.dt * self.steps


class StepRecord(NamedTuple):
    step: int
    positions: np.ndarray
    velocities: np.ndarray
    report: ForceReport


class _Forces:
    """Force evaluation with a neighbor list rebuilt only when it goes stale."""

    def __init__(self, system: ParticleSystem, forcefield):
        self.system = system
        self.forcefield = forcefield
        self.nlist = None
        self.scale = system.units.accel_factor / system.masses[:, None]

    def __call__(self, positions: np.ndarray) -> tuple[np.ndarray, ForceReport]:
        system = self.system.with_positions(positions)
        self.nlist = self.forcefield.refresh_list(system, self.nlist)
        report = self.forcefield.compute(system, self.nlist)
        return report.forces * self.scale, report


def _check(positions: np.ndarray, velocities: np.ndarray, step: int):
    if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(velocities))):
        raise BlowUpError(f"non-finite coordinates after step {step}", step=step)


def iterate_steps(state: StateVector, system: ParticleSystem, propagator: Propagator,
                  n_steps: int) -> Iterator[StepRecord]:
    """Yield a record after every step. ``state`` supplies positions and velocities."""
    forces = _Forces(system, propagator.forcefield)
    dt = propagator.dt
    pos = state.positions.copy()
    vel = state.velocities.copy()
    if propagator.scheme == "verlet":
        acc, _ = forces(pos)
        for step in range(1, n_steps + 1):
            vel = vel + 0.5 * dt * acc
            pos = pos + dt * vel
            _check(pos, vel, step)
            acc, report = forces(pos)
            vel = vel + 0.5 * dt * acc
            _check(pos, vel, step)
            yield StepRecord(step, pos, vel, report)
    else:
        # velocities are the staggered v(t + dt/2)
        for step in range(1, n_steps + 1):
            pos = pos + dt * vel
            _check(pos, vel, step)
            acc, report = forces(pos)
            vel = vel + dt * acc
            _check(pos, vel, step)
            yield StepRecord(step, pos, vel, report)


def velocity_verlet_step(state: StateVector, system: ParticleSystem,
                         propagator: Propagator) -> StateVector:
    if propagator.scheme != "verlet":
        propagator = Propagator(propagator.forcefield, propagator.dt, 1, "verlet")
    rec = next(iterate_steps(state, system, propagator, 1))
    return StateVector.from_arrays(rec.positions, rec.velocities)


def leapfrog_step(state: StateVector, system: ParticleSystem, propagator: Propagator) -> StateVector:
    if propagator.scheme != "leapfrog":
        propagator = Propagator(propagator.forcefield, propagator.dt, 1, "leapfrog")
    rec = next(iterate_steps(state, system, propagator, 1))
    return StateVector.from_arrays(rec.positions, rec.velocities)


def leapfrog_init(state: StateVector, system: ParticleSystem, propagator: Propagator) -> StateVector:
    """Turn on-step velocities v(0) into v(dt/2) with one half kick."""
    acc, _ = _Forces(system, propagator.forcefield)(state.positions)
    return StateVector.from_arrays(state.positions, state.velocities + 0.5 * propagator.dt * acc)


def propagate(state: StateVector, system: ParticleSystem, propagator: Propagator) -> StateVector:
    """Advance ``state`` by ``propagator.steps`` steps; deterministic for fixed inputs."""
    rec = None
    for rec in iterate_steps(state, system, propagator, propagator.steps):
        pass
    return StateVector.from_arrays(rec.positions, rec.velocities)


def total_energy(system: ParticleSystem, forcefield: ForceField) -> float:
    return forcefield.compute(system).total_energy + kinetic_energy(
        system.masses, system.velocities, system.units)


def energy_series(system: ParticleSystem, propagator: Propagator, n_steps: int,
                  every: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Total energy at t = 0 and every ``every`` steps (velocity Verlet only)."""
    if propagator.scheme != "verlet":
        raise ValueError("energy bookkeeping needs on-step velocities")
    times = [0.0]
    energies = [total_energy(system, propagator.forcefield)]
    for rec in iterate_steps(state_from_system(system), system, propagator, n_steps):
        if rec.step % every == 0:
            times.append(rec.step * propagator.dt)
            energies.append(rec.report.total_energy
                            + kinetic_energy(system.masses, rec.velocities, system.units))
    return np.array(times), np.array(energies)


def relative_drift(times: np.ndarray, energies: np.ndarray) -> float:
    """Least-squares energy trend over the run, relative to the mean energy."""
    slope = np.polyfit(times, energies, 1)[0]
    return float(abs(slope * (times[-1] - times[0])) / abs(np.mean(energies)))
