"""Flop counts, fine/coarse cost ratios and parareal speedup estimates.

The event simulator builds the task graph of a parareal run (coarse chains,
fine tasks, update chains) and list-schedules it on a pool of processor
units, so the analytic speedups can be checked against an explicit
schedule rather than taken on faith.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

# Per-pair flop constant of the cutoff count. Reverse-engineered so that a
# 12 A cutoff at unit mean spacing gives 2311 flops per atom; it is not a
# count of arithmetic in any particular kernel.
CUTOFF_PAIR_FLOPS = 0.6385


@dataclass(frozen=True)
class CostModelParams:
    """Inputs of the flop model. ``h_star`` is the mean interatomic spacing N^(-1/3) L."""

    h_star: float = 1.0
    h: float = 2.0
    a: float = 12.0
    m: int = 2
    p: int = 3
    N: float = 1.0
    L: float | None = None

    def __post_init__(self):
        for name in ("h_star", "h", "a", "N"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.m < 1 or self.p < 1:
            raise ValueError("m and p must be positive")
        if self.L is not None:
            if self.L <= 0:
                raise ValueError("L must be positive")
            expected = self.L * self.N ** (-1.0 / 3.0)
            if not math.isclose(self.h_star, expected, rel_tol=1e-6):
                raise ValueError(f"h_star={self.h_star} inconsistent with N, L (expected {expected})")

    @classmethod
    def from_box(cls, N: float, L: float, **kw) -> "CostModelParams":
        return cls(h_star=L * N ** (-1.0 / 3.0), N=N, L=L, **kw)


def msm_flops(params: CostModelParams) -> float:
    """Full three-term flop count of one MSM evaluation."""
    a, h, hs, m, p, n = params.a, params.h, params.h_star, params.m, params.p, params.N
    short = (4 / 3 * math.pi * m + 32 / 3 * math.pi + 81 / 2) * (a / hs) ** 3
    grid_transfer = 6 * p**3 + 31 * p**2 + 36 * p + 17
    lattice = ((4 * a / h) ** 3 + 14 * (p + 2)) * (8 / 7) * (hs / h) ** 3
    return (short + grid_transfer + lattice) * n


def msm_flops_simplified(a: float = 12.0, h: float = 2.0, N: float = 1.0) -> float:
    """Simplified count at m=2, p=3, unit spacing: 77.7a^3 + 566 + 73a^3/h^6 + 80/h^3 per atom."""
    return (77.7 * a**3 + 566.0 + 73.0 * a**3 / h**6 + 80.0 / h**3) * N


def cutoff_flops(cutoff: float = 12.0, h_star: float = 1.0, N: float = 1.0) -> float:
    """Pairs within ``cutoff`` per atom (half the sphere count) times CUTOFF_PAIR_FLOPS."""
    if cutoff < 0 or h_star <= 0:
        raise ValueError("cutoff must be >= 0 and h_star > 0")
    pairs = 0.5 * (4.0 / 3.0) * math.pi * (cutoff / h_star) ** 3
    return pairs * CUTOFF_PAIR_FLOPS * N


def q_ratio(a: float = 12.0, h: float = 2.0, cutoff: float = 12.0, h_star: float = 1.0,
            full: bool = False) -> float:
    """Fine (MSM) to coarse (cutoff) cost ratio.

    The simplified MSM count is only valid at unit spacing; pass ``full=True``
    for other densities.
    """
    fine = msm_flops(CostModelParams(h_star=h_star, h=h, a=a)) if full else msm_flops_simplified(a, h)
    return fine / cutoff_flops(cutoff, h_star)


def plan1_speedup(q: float) -> float:
    return q / 2.0


def plan2_speedup(q: float, T: float, K: float) -> float:
    """Pipelined-plan speedup in its displayed closed form q / (1 + K/(T q))."""
    return q / (1.0 + K / (T * q))


def plan2_speedup_makespan(q: float, T: float, K: float) -> float:
    """Pipelined-plan speedup from the makespan (T/q + K) r_F, i.e. T / (T/q + K).

    This is the left-hand side the closed form is derived from; the two
    differ by a factor q in the K term.
    """
    return T / (T / q + K)


@dataclass(frozen=True)
class ScheduleResult:
    makespan: float
    units_used: int
    speedup: float
    plan: int
    sequential: float
    n_tasks: int = 0


class _Task:
    __slots__ = ("name", "duration", "deps", "children", "pending", "ready", "finish")

    def __init__(self, name, duration):
        self.name = name
        self.duration = duration
        self.deps = []
        self.children = []
        self.pending = 0
        self.ready = 0.0
        self.finish = None


class TaskGraph:
    """A DAG of timed tasks."""

    def __init__(self):
        self.tasks: dict = {}

    def add(self, name, duration: float, deps=()):
        task = _Task(name, float(duration))
        for d in deps:
            if d is None:
                continue
            parent = self.tasks[d]
            task.deps.append(parent)
            parent.children.append(task)
        task.pending = len(task.deps)
        self.tasks[name] = task
        return name

    def critical_path(self) -> float:
        finish = {}
        for name, t in self.tasks.items():  # insertion order is topological
            finish[name] = t.duration + max((finish[d.name] for d in t.deps), default=0.0)
        return max(finish.values(), default=0.0)


def list_schedule(graph: TaskGraph, units: int | None = None) -> tuple[float, int]:
    """Greedy event-driven schedule on ``units`` identical units (None = unlimited).

    Ready tasks start in order of readiness, ties broken by insertion order.
    Returns ``(makespan, peak number of busy units)``.
    """
    order = {name: i for i, name in enumerate(graph.tasks)}
    for t in graph.tasks.values():
        t.pending = len(t.deps)
        t.finish = None
    ready = [(0.0, order[t.name], t) for t in graph.tasks.values() if t.pending == 0]
    heapq.heapify(ready)
    running: list = []
    now = 0.0
    peak = 0
    done = 0
    while done < len(graph.tasks):
        while ready and ready[0][0] <= now and (units is None or len(running) < units):
            _, idx, task = heapq.heappop(ready)
            task.finish = now + task.duration
            heapq.heappush(running, (task.finish, idx, task))
        peak = max(peak, len(running))
        next_times = []
        if running:
            next_times.append(running[0][0])
        if ready and (units is None or len(running) < units):
            next_times.append(ready[0][0])
        now = max(now, min(next_times))
        while running and running[0][0] <= now:
            _, _, task = heapq.heappop(running)
            done += 1
            for child in task.children:
                child.pending -= 1
                child.ready = max(child.ready, task.finish)
                if child.pending == 0:
                    heapq.heappush(ready, (child.ready, order[child.name], child))
    makespan = max((t.finish for t in graph.tasks.values()), default=0.0)
    return makespan, peak


def _plan1_graph(T: int, T_W: int, K: int, r_fine: float, r_coarse: float) -> TaskGraph:
    """Blocked plan: per iteration one unit runs a coarse sweep, then T_W fine tasks run at once."""
    g = TaskGraph()
    barrier = None
    for w in range(T // T_W):
        for k in range(K):
            prev = barrier
            for n in range(T_W):
                prev = g.add(("G", w, k, n), r_coarse, [prev])
            fine = [g.add(("F", w, k, n), r_fine, [prev]) for n in range(T_W)]
            barrier = g.add(("sync", w, k), 0.0, fine)
    return g


def _plan2_graph(T: int, T_W: int, K: int, r_fine: float, r_coarse: float) -> TaskGraph:
    """Pipelined plan: each fine task starts as soon as the state it propagates exists.

    ``avail[k][n]`` names the task producing point n of iterate k (None for
    the window seed). Update task (k, n) evaluates G on point n of iterate k
    and combines it with the fine result F(point n of iterate k-1).
    """
    g = TaskGraph()
    seed = None
    for w in range(T // T_W):
        avail = [[seed]]
        for n in range(T_W):
            avail[0].append(g.add(("G0", w, n), r_coarse, [avail[0][n]]))
        for k in range(1, K + 1):
            row = [seed]
            for n in range(T_W):
                f = g.add(("F", w, k, n), r_fine, [avail[k - 1][n]])
                row.append(g.add(("U", w, k, n), r_coarse, [row[n], f]))
            avail.append(row)
        seed = avail[K][T_W]
    return g


def simulate_schedule(plan: int, T: int, T_W: int | None = None, K: int = 1,
                      r_fine: float = 1.0, r_coarse: float | None = None) -> ScheduleResult:
    """Event simulation of distribution plan 1 (blocked) or 2 (pipelined).

    ``T`` counts propagation intervals of the whole run, split into windows
    of ``T_W`` intervals. Plan 1 defaults T_W to floor(q) and runs on T_W
    units; plan 2 defaults T_W to T and has unlimited units, reporting the
    peak number busy. Speedup is relative to T sequential fine evaluations.
    """
    if plan not in (1, 2):
        raise ValueError(f"unknown distribution plan {plan!r}")
    if K < 1:
        raise ValueError("K must be >= 1: a schedule without fine iterations has no fine work")
    if r_coarse is None:
        r_coarse = r_fine
    if r_fine <= 0 or r_coarse <= 0:
        raise ValueError("task durations must be positive")
    q = r_fine / r_coarse
    if T_W is None:
        T_W = max(1, math.floor(q)) if plan == 1 else T
    if T_W < 1 or T % T_W:
        raise ValueError("T must be a positive multiple of T_W")
    if plan == 1:
        graph = _plan1_graph(T, T_W, K, r_fine, r_coarse)
        makespan, peak = list_schedule(graph, units=T_W)
    else:
        graph = _plan2_graph(T, T_W, K, r_fine, r_coarse)
        makespan, peak = list_schedule(graph, units=None)
    sequential = T * r_fine
    return ScheduleResult(makespan, peak, sequential / makespan, plan, sequential,
                          len(graph.tasks))


def plan2_critical_path(T: int, K: int, r_fine: float, r_coarse: float) -> float:
    return (T * r_coarse / r_fine + K) * r_fine


def cost_table(a_values=(12.0,), h_values=(2.0,), N_values=(1.0,), cutoff: float = 12.0,
               h_star: float = 1.0, T: int = 600, K: int = 2) -> list[dict]:
    """One row per (a, h, N): flop counts, Q ratio and plan speedups."""
    rows = []
    for a in a_values:
        for h in h_values:
            for n in N_values:
                params = CostModelParams(h_star=h_star, h=h, a=a, N=n)
                q_f = msm_flops_simplified(a, h, n)
                q_g = cutoff_flops(cutoff, h_star, n)
                q = q_f / q_g
                tw1 = max(1, math.floor(q))
                t1 = tw1 * max(1, round(T / tw1))
                sim1 = simulate_schedule(1, t1, K=1, r_fine=q, r_coarse=1.0)
                sim2 = simulate_schedule(2, T, K=K, r_fine=q, r_coarse=1.0)
                rows.append({
                    "a": a, "h": h, "N": n, "h_star": h_star, "cutoff": cutoff,
                    "msm_flops_full": msm_flops(params),
                    "msm_flops_simplified": q_f,
                    "cutoff_flops": q_g,
                    "q_ratio": q,
                    "plan1_speedup": plan1_speedup(q),
                    "plan1_simulated": sim1.speedup,
                    "T": T, "K": K,
                    "plan2_speedup": plan2_speedup(q, T, K),
                    "plan2_makespan_speedup": plan2_speedup_makespan(q, T, K),
                    "plan2_simulated": sim2.speedup,
                    "plan2_makespan": sim2.makespan,
                })
    return rows


def measured_ratio(fine_seconds, coarse_seconds) -> float:
    return float(np.mean(fine_seconds) / np.mean(coarse_seconds))
