"""Command-line drivers: sequential runs, parareal runs, cost tables, benchmarks.

Exit status: 0 success, 2 input/config error, 3 integrator blow-up,
4 parareal window did not converge.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .core import (UNIT_PROFILES, BlowUpError, MDError, kinetic_energy, state_from_system)
from .costmodel import (cost_table, plan2_speedup, plan2_speedup_makespan, q_ratio)
from .forcefield import ForceField
from .integrate import Propagator, iterate_steps
from .io import (CONFIG_TYPES, CsvWriter, ParseError, RunConfig, append_frame, coerce_value,
                 parse_config, parse_system, write_csv, write_system)
from .msm import MsmParams
from .parareal import (PararealConfig, rdf_difference, run_simulation, sequential_reference,
                       trajectory_deviation, worker_count)
from .potentials import BACKEND_KINDS, ElectrostaticsBackend, LjParams

EXIT_OK, EXIT_PARSE, EXIT_BLOWUP, EXIT_NOT_CONVERGED = 0, 2, 3, 4

METRIC_COLUMNS = ("step", "time", "kinetic", "bonded", "lj", "coulomb_short", "coulomb_long",
                  "potential", "total", "drift", "wallclock")


# -- setup helpers ----------------------------------------------------------


def load_system(config: RunConfig):
    if not config.system:
        raise ParseError("no system file given (use --system or 'system = ...')")
    return parse_system(config.system, UNIT_PROFILES[config.units])


def _backend(kind: str, cutoff: float, config: RunConfig) -> ElectrostaticsBackend:
    msm = MsmParams(a=cutoff, h=config.msm_h, levels=config.msm_levels) if kind == "msm" else None
    return ElectrostaticsBackend(kind, cutoff=cutoff, wolf_alpha=config.wolf_alpha,
                                 switch_on=config.switch_on if kind == "smoothed_cutoff"
                                 else min(config.switch_on, 0.8 * cutoff),
                                 msm_params=msm)


def build_forcefield(config: RunConfig, system, coarse: bool = False) -> ForceField:
    kind = config.coarse_backend if coarse else config.backend
    cutoff = config.coarse_cutoff if coarse else config.cutoff
    lj = None
    if config.lj:
        try:
            lj = LjParams.from_species(system.species, cutoff=config.lj_cutoff)
        except ValueError as exc:
            raise ParseError(str(exc)) from None
    return ForceField(_backend(kind, cutoff, config), lj, bonds=config.bonds)


def write_manifest(outdir: str, command: str, config: RunConfig, outputs, extra=None):
    import matplotlib
    import scipy

    manifest = {
        "command": command,
        "argv": sys.argv,
        "config": config.as_dict(),
        "seed": config.seed,
        "threads": os.environ.get("THREADS"),
        "versions": {
            "parareal_md": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__,
            "platform": platform.platform(),
        },
        "outputs": sorted(os.path.basename(p) for p in outputs),
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    return path


def _outdir(config: RunConfig) -> str:
    os.makedirs(config.output, exist_ok=True)
    return config.output


# -- subcommands ------------------------------------------------------------


def run_sequential(config: RunConfig) -> dict:
    """Velocity-Verlet NVE run writing metrics.csv, optional frames and an energy plot."""
    from .plotting import plot_energy

    system = load_system(config)
    ff = build_forcefield(config, system)
    prop = Propagator(ff, config.dt, config.steps)
    out = _outdir(config)
    outputs = [os.path.join(out, "metrics.csv")]
    frames = None
    if config.stride > 0:
        outputs.append(os.path.join(out, "trajectory.xyz"))
        frames = open(outputs[-1], "w")

    series = {"time": [], "kinetic": [], "potential": [], "total": []}
    t_start = time.perf_counter()
    e0 = None
    with CsvWriter(outputs[0], METRIC_COLUMNS) as csv_out:
        def record(step, vel, report, pos):
            nonlocal e0
            ke = kinetic_energy(system.masses, vel, system.units)
            pot = report.total_energy
            total = ke + pot
            e0 = total if e0 is None else e0
            row = {"step": step, "time": step * config.dt, "kinetic": ke, "potential": pot,
                   "total": total, "drift": (total - e0) / abs(e0) if e0 else 0.0,
                   "wallclock": time.perf_counter() - t_start}
            for name in ("bonded", "lj", "coulomb_short", "coulomb_long"):
                row[name] = report.components.get(name, 0.0)
            csv_out.row(row)
            for key in series:
                series[key].append(row[key])
            if frames is not None and step % config.stride == 0:
                append_frame(frames, system.species, pos, f"step = {step} time = {row['time']}")

        try:
            record(0, system.velocities, ff.compute(system), system.positions)
            for rec in iterate_steps(state_from_system(system), system, prop, config.steps):
                if rec.step % config.metrics_every == 0 or rec.step == config.steps:
                    record(rec.step, rec.velocities, rec.report, rec.positions)
        finally:
            if frames is not None:
                frames.close()

    outputs.append(plot_energy(series["time"], series["kinetic"], series["potential"],
                               series["total"], os.path.join(out, "energy.png")))
    summary = {"final_drift": (series["total"][-1] - e0) / abs(e0) if e0 else 0.0,
               "wallclock": time.perf_counter() - t_start}
    outputs.append(write_manifest(out, "run", config, outputs, {"summary": summary}))
    print(f"run: {config.steps} steps, backend {ff.describe()}, "
          f"relative energy change {summary['final_drift']:.3e}")
    return summary


def run_parareal(config: RunConfig) -> dict:
    """Parareal over ``windows`` windows; writes convergence and speedup reports."""
    from .plotting import plot_convergence, plot_deviation

    system = load_system(config)
    fine = Propagator(build_forcefield(config, system), config.dt, config.steps)
    coarse = Propagator(build_forcefield(config, system, coarse=True), config.dt, config.steps)
    pcfg = PararealConfig(fine, coarse, window=config.window, epsilon=config.epsilon,
                          k_max=config.k_max,
                          total_points=config.windows * (config.window - 1) + 1,
                          workers=worker_count(config.workers), executor=config.executor)
    out = _outdir(config)
    v = state_from_system(system)

    t0 = time.perf_counter()
    result = run_simulation(v, system, pcfg)
    parareal_seconds = time.perf_counter() - t0

    intervals = config.window - 1
    window_rows, iteration_rows = [], []
    for w, tr in enumerate(result.windows):
        fine_per = tr.timings["fine_tasks"] / max(tr.fine_evaluations, 1)
        coarse_per = tr.timings["coarse"] / max(tr.coarse_evaluations, 1)
        q = fine_per / coarse_per if coarse_per > 0 else math.inf
        k_obs = tr.iterations
        window_rows.append({
            "window": w, "converged": int(tr.converged),
            "converged_at": "" if tr.converged_at is None else tr.converged_at,
            "fine_sweeps": k_obs, "fine_evaluations": tr.fine_evaluations,
            "coarse_evaluations": tr.coarse_evaluations,
            "fine_wall_seconds": tr.timings["fine"], "fine_task_seconds": tr.timings["fine_tasks"],
            "coarse_seconds": tr.timings["coarse"], "update_seconds": tr.timings["update"],
            "wallclock": tr.wallclock, "q_measured": q,
            "achieved_speedup": intervals * fine_per / tr.wallclock,
            "theoretical_speedup": plan2_speedup(q, intervals, k_obs),
            "makespan_speedup": plan2_speedup_makespan(q, intervals, k_obs),
        })
        for k, d in enumerate(tr.max_deltas):
            iteration_rows.append({"window": w, "iteration": k, "max_delta": d})

    outputs = [os.path.join(out, "parareal_windows.csv"), os.path.join(out, "parareal_iterations.csv")]
    write_csv(outputs[0], window_rows)
    write_csv(outputs[1], iteration_rows)
    outputs.append(plot_convergence([tr.max_deltas for tr in result.windows], config.epsilon,
                                    os.path.join(out, "convergence.png")))

    summary = {"converged": result.converged, "parareal_seconds": parareal_seconds,
               "converged_at": [tr.converged_at for tr in result.windows]}
    if config.reference:
        t0 = time.perf_counter()
        ref = sequential_reference(v, system, fine, len(result.trajectory))
        summary["reference_seconds"] = time.perf_counter() - t0
        dev = trajectory_deviation(result.trajectory, ref)
        times = np.arange(len(dev)) * fine.interval
        bound = config.epsilon * config.window
        dev_path = os.path.join(out, "deviation.csv")
        write_csv(dev_path, [{"point": i, "time": t, "deviation": d}
                             for i, (t, d) in enumerate(zip(times, dev))])
        outputs.append(dev_path)
        outputs.append(plot_deviation(times, dev, bound, os.path.join(out, "deviation.png")))
        summary.update(max_deviation=float(dev.max()), deviation_bound=bound,
                       rdf_difference=rdf_difference(result.trajectory[-1], ref[-1]),
                       measured_speedup=summary["reference_seconds"] / parareal_seconds)
    if config.stride > 0:
        path = os.path.join(out, "trajectory.xyz")
        with open(path, "w") as fh:
            for i, s in enumerate(result.trajectory):
                if i % config.stride == 0:
                    append_frame(fh, system.species, s.positions, f"point = {i}")
        outputs.append(path)
    outputs.append(write_manifest(out, "parareal", config, outputs, {"summary": summary}))

    print("window,converged_at,fine_sweeps,max_delta_last,achieved_speedup,theoretical_speedup")
    for r, tr in zip(window_rows, result.windows):
        print(f"{r['window']},{r['converged_at']},{r['fine_sweeps']},{tr.max_deltas[-1]:.3e},"
              f"{r['achieved_speedup']:.3f},{r['theoretical_speedup']:.3f}")
    if "max_deviation" in summary:
        print(f"max deviation from sequential run {summary['max_deviation']:.3e} A "
              f"(bound {summary['deviation_bound']:.3e})")
    return summary


def _parse_list(text, kind=float):
    return [kind(x) for x in str(text).split(",") if x.strip()]


def run_cost(args) -> list[dict]:
    """Print the flop/speedup table as CSV and save it with a speedup figure."""
    from .plotting import plot_speedup

    rows = cost_table(_parse_list(args.a), _parse_list(args.h), _parse_list(args.N),
                      cutoff=args.cutoff, h_star=args.h_star, T=args.T, K=args.K)
    for r in rows:
        r["msm_flops_per_atom"] = f"{r['msm_flops_simplified'] / r['N']:.0f}"
        r["cutoff_flops_per_atom"] = f"{r['cutoff_flops'] / r['N']:.0f}"
    columns = ["a", "h", "N", "h_star", "cutoff", "msm_flops_full", "msm_flops_simplified",
               "msm_flops_per_atom", "cutoff_flops", "cutoff_flops_per_atom", "q_ratio",
               "plan1_speedup", "plan1_simulated", "T", "K", "plan2_speedup",
               "plan2_makespan_speedup", "plan2_simulated", "plan2_makespan"]
    print(",".join(columns))
    for r in rows:
        print(",".join(v if isinstance(v, str) else f"{v:.6g}" for v in (r[c] for c in columns)))
    os.makedirs(args.output, exist_ok=True)
    outputs = [os.path.join(args.output, "cost.csv")]
    write_csv(outputs[0], rows, columns)
    outputs.append(plot_speedup(rows, os.path.join(args.output, "speedup.png")))
    write_manifest(args.output, "cost", RunConfig(output=args.output), outputs,
                   {"cost_args": {k: v for k, v in vars(args).items() if k != "func"}})
    return rows


def run_bench(config: RunConfig) -> list[dict]:
    """Time every backend's force evaluation and compare the fine/coarse ratio with the flop model."""
    from .plotting import plot_bench
    from .systems import random_system

    if config.system:
        system = load_system(config)
    else:
        system = random_system(500, 40.0, seed=config.seed, units=UNIT_PROFILES[config.units])
    kinds = [config.backend, config.coarse_backend] + [
        k for k in BACKEND_KINDS if k not in (config.backend, config.coarse_backend)]
    timings = {}
    for kind in kinds:
        cutoff = config.coarse_cutoff if kind == config.coarse_backend and kind != config.backend \
            else config.cutoff
        ff = ForceField(_backend(kind, cutoff, config), None, bonds=False)
        ff.compute(system)  # warm caches
        samples = []
        for _ in range(config.repeats):
            t0 = time.perf_counter()
            ff.compute(system)
            samples.append(time.perf_counter() - t0)
        timings[kind] = samples
    h_star = float(np.prod(system.box)) ** (1 / 3) * system.n ** (-1 / 3)
    analytic = q_ratio(a=config.cutoff, h=config.msm_h, cutoff=config.coarse_cutoff, h_star=h_star,
                       full=True)
    measured = np.mean(timings[config.backend]) / np.mean(timings[config.coarse_backend])
    rows = [{"backend": k, "mean_seconds": float(np.mean(s)), "std_seconds": float(np.std(s)),
             "repeats": len(s)} for k, s in timings.items()]
    out = _outdir(config)
    outputs = [os.path.join(out, "bench.csv")]
    write_csv(outputs[0], rows)
    outputs.append(plot_bench(list(timings), list(timings.values()), os.path.join(out, "bench.png")))
    ratio = {"fine": config.backend, "coarse": config.coarse_backend, "measured_q": measured,
             "analytic_q": analytic, "within_factor_3": bool(analytic / 3 <= measured <= 3 * analytic)}
    outputs.append(write_manifest(out, "bench", config, outputs, {"ratio": ratio}))
    for r in rows:
        print(f"{r['backend']:>16s} {r['mean_seconds']:.4e} s")
    print(f"measured {config.backend}/{config.coarse_backend} ratio {measured:.2f}, "
          f"flop model {analytic:.2f}")
    return rows


def run_generate(args):
    from .systems import random_system, rock_salt_cluster

    units = UNIT_PROFILES[args.units]
    if args.kind == "rock_salt":
        system = rock_salt_cluster(args.n, spacing=args.spacing, charge=args.charge,
                                   kinetic=args.kinetic, seed=args.seed, box=args.box, units=units)
    else:
        system = random_system(args.n, args.box or 40.0, seed=args.seed, charge=args.charge,
                               kinetic=args.kinetic, n_bonds=args.bonds, units=units)
    write_system(args.out, system, comment=f"{args.kind} n = {args.n} seed = {args.seed}")
    print(f"wrote {system.n} atoms to {args.out}")


# -- argument handling ------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value configuration file")
    for key in CONFIG_TYPES:
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, metavar="VALUE")


def config_from_args(args) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    values = parse_config(args.config) if args.config else {}
    for key in CONFIG_TYPES:
        raw = getattr(args, key, None)
        if raw is not None:
            values[key] = coerce_value(key, raw)
    return RunConfig(**values).validate()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parareal-md", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "sequential velocity-Verlet run"),
                       ("parareal", "parareal run with convergence report"),
                       ("bench", "time the force backends")):
        _add_config_flags(sub.add_parser(name, help=text))

    cost = sub.add_parser("cost", help="flop counts and speedup estimates")
    cost.add_argument("--a", default="12", help="MSM cutoff(s), comma separated")
    cost.add_argument("--h", default="2", help="finest grid spacing(s)")
    cost.add_argument("--N", default="1", help="atom count(s)")
    cost.add_argument("--cutoff", type=float, default=12.0, help="coarse cutoff")
    cost.add_argument("--h-star", dest="h_star", type=float, default=1.0)
    cost.add_argument("--T", type=int, default=600)
    cost.add_argument("--K", type=int, default=2)
    cost.add_argument("--output", default="out")

    gen = sub.add_parser("generate", help="write a seeded test system")
    gen.add_argument("--kind", choices=("rock_salt", "random"), default="rock_salt")
    gen.add_argument("--n", type=int, default=40)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--kinetic", type=float, default=1.0)
    gen.add_argument("--charge", type=float, default=0.5)
    gen.add_argument("--spacing", type=float, default=3.4)
    gen.add_argument("--box", type=float, default=None)
    gen.add_argument("--bonds", type=int, default=0)
    gen.add_argument("--units", choices=sorted(UNIT_PROFILES), default="real")
    gen.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "cost":
            run_cost(args)
            return EXIT_OK
        if args.command == "generate":
            run_generate(args)
            return EXIT_OK
        config = config_from_args(args)
        if args.command == "run":
            run_sequential(config)
        elif args.command == "bench":
            run_bench(config)
        else:
            summary = run_parareal(config)
            if not summary["converged"]:
                print("parareal: at least one window did not converge", file=sys.stderr)
                return EXIT_NOT_CONVERGED
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BlowUpError as exc:
        where = f" at step {exc.step}" if exc.step is not None else ""
        window = getattr(exc, "window", None)
        where += f" in window {window}" if window is not None else ""
        print(f"blow-up{where}: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (MDError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
