"""Parareal iteration over sliding computational windows.

Point ``n`` of a window (0-based here, n = 0 is the seed state ``v``) is
advanced to ``n + 1`` by the fine propagator F or the coarse propagator G.
The iterate ``init`` is the coarse-only sweep; iterate ``k`` is built from

    lam[k][n+1] = F(lam[k-1][n]) + (G(lam[k][n]) - G(lam[k-1][n]))

with ``lam[-1] = init``. All fine evaluations of one iteration are
independent and run on the executor; the coarse sweep is sequential.
Writing the correction as ``F + (G_new - G_old)`` makes points that have
already converged bit-for-bit stable.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .core import BlowUpError, ParticleSystem, StateVector, state_axpy, state_distance
from .integrate import Propagator, propagate

DEFAULT_WINDOW = 16
DEFAULT_EPSILON = 1e-3


@dataclass(frozen=True)
class PararealConfig:
    fine: Propagator
    coarse: Propagator
    window: int = DEFAULT_WINDOW
    epsilon: float = DEFAULT_EPSILON
    k_max: int | None = None
    total_points: int | None = None
    workers: int = 1
    executor: str = "thread"

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("a window needs at least two time points")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.k_max is not None and self.k_max < 0:
            raise ValueError("k_max must be >= 0")
        if self.executor not in ("thread", "process"):
            raise ValueError(f"unknown executor kind {self.executor!r}")
        total = self.window if self.total_points is None else self.total_points
        if total < 2 or (total - 1) % (self.window - 1):
            raise ValueError("total_points - 1 must be a positive multiple of window - 1")

    @property
    def max_iterations(self) -> int:
        return self.window - 1 if self.k_max is None else self.k_max

    @property
    def n_windows(self) -> int:
        total = self.window if self.total_points is None else self.total_points
        return (total - 1) // (self.window - 1)


@dataclass
class WindowTrace:
    init: list[StateVector]
    iterates: list[list[StateVector]] = field(default_factory=list)
    deltas: list[np.ndarray] = field(default_factory=list)
    converged_at: int | None = None
    # "fine" is wallclock of the concurrent sweeps, "fine_tasks" the summed task time
    timings: dict[str, float] = field(default_factory=lambda: {
        "fine": 0.0, "fine_tasks": 0.0, "coarse": 0.0, "update": 0.0})
    fine_evaluations: int = 0
    coarse_evaluations: int = 0

    @property
    def converged(self) -> bool:
        return self.converged_at is not None

    @property
    def iterations(self) -> int:
        """Number of fine sweeps performed."""
        return len(self.iterates)

    @property
    def final(self) -> list[StateVector]:
        return self.iterates[-1] if self.iterates else self.init

    @property
    def wallclock(self) -> float:
        return self.timings["fine"] + self.timings["coarse"] + self.timings["update"]

    @property
    def max_deltas(self) -> list[float]:
        return [float(d.max()) for d in self.deltas]


@dataclass
class SimulationResult:
    trajectory: list[StateVector]
    windows: list[WindowTrace]

    @property
    def converged(self) -> bool:
        return all(w.converged for w in self.windows)


def _propagate_task(args):
    state, system, propagator = args
    t0 = time.perf_counter()
    out = propagate(state, system, propagator)
    return out, time.perf_counter() - t0


def worker_count(config_workers: int | None = None) -> int:
    """Executor width: explicit value, else the THREADS environment variable, else 1."""
    if config_workers:
        return max(1, int(config_workers))
    return max(1, int(os.environ.get("THREADS", "1")))


@contextmanager
def make_executor(workers: int, kind: str = "thread"):
    if workers <= 1:
        yield None
        return
    pool_cls = ThreadPoolExecutor if kind == "thread" else ProcessPoolExecutor
    with pool_cls(max_workers=workers) as pool:
        yield pool


def _fine_sweep(states, system, propagator, pool: Executor | None):
    """F on every state; returns the results and the summed per-task seconds."""
    tasks = [(s, system, propagator) for s in states]
    done = [_propagate_task(t) for t in tasks] if pool is None else list(pool.map(_propagate_task, tasks))
    return [d[0] for d in done], sum(d[1] for d in done)


def init_sweep(v: StateVector, system: ParticleSystem, config: PararealConfig) -> list[StateVector]:
    """Coarse-only prediction: lam'[0] = v, lam'[n+1] = G(lam'[n])."""
    states = [v]
    for _ in range(config.window - 1):
        states.append(propagate(states[-1], system, config.coarse))
    return states


def parareal_correct(g_new: StateVector, g_old: StateVector, f_old: StateVector) -> StateVector:
    """G(new) + F(old) - G(old), evaluated as F(old) + (G(new) - G(old))."""
    return state_axpy(1.0, state_axpy(-1.0, g_old, g_new), f_old)


def parareal_update(lam_new: StateVector, lam_old: StateVector, f_old: StateVector,
                    system: ParticleSystem, config: PararealConfig,
                    g_old: StateVector | None = None) -> tuple[StateVector, StateVector]:
    """Next point of the new iterate; returns ``(lam_next, G(lam_new))``.

    Pass ``g_old`` (G applied to ``lam_old``, cached from the previous sweep)
    to avoid re-evaluating it.
    """
    if not (len(lam_new) == len(lam_old) == len(f_old)):
        from .core import DimensionError

        raise DimensionError("parareal update operands differ in length")
    g_new = propagate(lam_new, system, config.coarse)
    if g_old is None:
        g_old = propagate(lam_old, system, config.coarse)
    return parareal_correct(g_new, g_old, f_old), g_new


def run_window(v: StateVector, system: ParticleSystem, config: PararealConfig,
               pool: Executor | None = None, window_index: int = 0) -> WindowTrace:
    """Iterate one window until successive iterates agree within ``epsilon``."""
    t0 = time.perf_counter()
    try:
        init = init_sweep(v, system, config)
    except BlowUpError as exc:
        exc.window = window_index
        raise
    trace = WindowTrace(init=init)
    trace.timings["coarse"] += time.perf_counter() - t0
    trace.coarse_evaluations += config.window - 1

    prev = init
    g_prev = init[1:]  # G(lam'[n]) is lam'[n+1]
    for k in range(config.max_iterations + 1):
        t0 = time.perf_counter()
        f, busy = _fine_sweep(prev[:-1], system, config.fine, pool)
        trace.timings["fine"] += time.perf_counter() - t0
        trace.timings["fine_tasks"] += busy
        trace.fine_evaluations += len(f)

        new = [v]
        g_new = []
        for n in range(config.window - 1):
            t0 = time.perf_counter()
            g = propagate(new[n], system, config.coarse)
            t1 = time.perf_counter()
            new.append(parareal_correct(g, g_prev[n], f[n]))
            trace.timings["coarse"] += t1 - t0
            trace.timings["update"] += time.perf_counter() - t1
            g_new.append(g)
        trace.coarse_evaluations += config.window - 1

        delta = np.array([state_distance(a, b) for a, b in zip(new, prev)])
        trace.iterates.append(new)
        trace.deltas.append(delta)
        if delta.max() < config.epsilon:
            trace.converged_at = k
            break
        prev, g_prev = new, g_new
    return trace


def run_simulation(v: StateVector, system: ParticleSystem, config: PararealConfig,
                   pool: Executor | None = None) -> SimulationResult:
    """Run consecutive windows, seeding each with the last point of the previous one."""
    trajectory = [v]
    windows = []
    seed = v
    with make_executor(worker_count(config.workers), config.executor) if pool is None \
            else _borrowed(pool) as active:
        for w in range(config.n_windows):
            trace = run_window(seed, system, config, active, window_index=w)
            windows.append(trace)
            trajectory.extend(trace.final[1:])
            seed = trace.final[-1]
    return SimulationResult(trajectory, windows)


@contextmanager
def _borrowed(pool):
    yield pool


def sequential_reference(v: StateVector, system: ParticleSystem, propagator: Propagator,
                         n_points: int) -> list[StateVector]:
    """Fine propagator applied point by point: the solution parareal converges to."""
    states = [v]
    for _ in range(n_points - 1):
        states.append(propagate(states[-1], system, propagator))
    return states


def trajectory_deviation(a: list[StateVector], b: list[StateVector]) -> np.ndarray:
    return np.array([state_distance(x, y) for x, y in zip(a, b)])


def radial_distribution(positions: np.ndarray, r_max: float, bins: int = 50):
    """Pair-distance histogram normalised to unit area (open boundary)."""
    pos = np.asarray(positions, float)
    i, j = np.triu_indices(len(pos), k=1)
    d = np.linalg.norm(pos[i] - pos[j], axis=1)
    hist, edges = np.histogram(d, bins=bins, range=(0.0, r_max), density=True)
    return 0.5 * (edges[1:] + edges[:-1]), hist


def rdf_difference(x: StateVector, y: StateVector, r_max: float = 15.0, bins: int = 50) -> float:
    """L1 distance between the pair-distance distributions of two states."""
    centres, gx = radial_distribution(x.positions, r_max, bins)
    _, gy = radial_distribution(y.positions, r_max, bins)
    return float(np.sum(np.abs(gx - gy)) * (centres[1] - centres[0]))
