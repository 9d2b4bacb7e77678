"""Report figures written next to the CSV outputs. Uses the non-interactive Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _figure(ncols=1, width=4.5, height=3.0):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(1, ncols, figsize=(width * ncols, height))
    return fig, ax


def _save(fig, path):
    with plt.rc_context(STYLE):
        fig.savefig(path)
    plt.close(fig)
    return path


def plot_energy(time, kinetic, potential, total, path):
    """Energy components against time plus the relative total-energy deviation."""
    time = np.asarray(time, float)
    total = np.asarray(total, float)
    fig, (ax, ax2) = _figure(ncols=2)
    ax.plot(time, kinetic, lw=1, label="kinetic")
    ax.plot(time, potential, lw=1, label="potential")
    ax.plot(time, total, lw=1.2, color="k", label="total")
    ax.set_xlabel("time [fs]")
    ax.set_ylabel("energy")
    ax.legend(frameon=False)
    ref = total[0] if total[0] != 0 else 1.0
    ax2.plot(time, (total - total[0]) / abs(ref), lw=1, color="C3")
    ax2.set_xlabel("time [fs]")
    ax2.set_ylabel("relative total-energy change")
    fig.tight_layout()
    return _save(fig, path)


def plot_convergence(deltas_per_window, epsilon, path):
    """Max successive-iterate difference per iteration, one line per window."""
    fig, ax = _figure()
    for w, deltas in enumerate(deltas_per_window):
        d = np.maximum(np.asarray(deltas, float), 1e-18)
        ax.semilogy(np.arange(len(d)), d, marker="o", ms=3, lw=1, label=f"window {w}")
    ax.axhline(epsilon, color="k", ls="--", lw=0.8, label="epsilon")
    ax.set_xlabel("iteration k")
    ax.set_ylabel(r"max$_n$ $\Delta_n^k$ [$\AA$]")
    if len(deltas_per_window) <= 8:
        ax.legend(frameon=False)
    return _save(fig, path)


def plot_deviation(times, deviation, bound, path):
    fig, ax = _figure()
    ax.semilogy(times, np.maximum(deviation, 1e-18), lw=1, marker=".", ms=3)
    ax.axhline(bound, color="k", ls="--", lw=0.8, label="bound")
    ax.set_xlabel("time [fs]")
    ax.set_ylabel(r"deviation from sequential run [$\AA$]")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_speedup(rows, path):
    """Analytic and simulated speedups against the cost ratio."""
    q = np.array([float(r["q_ratio"]) for r in rows])
    order = np.argsort(q)
    fig, ax = _figure()
    for key, style in (("plan1_speedup", "C0-"), ("plan1_simulated", "C0o"),
                       ("plan2_speedup", "C1-"), ("plan2_makespan_speedup", "C2--"),
                       ("plan2_simulated", "C2s")):
        y = np.array([float(r[key]) for r in rows])[order]
        ax.plot(q[order], y, style, ms=4, lw=1, label=key.replace("_", " "))
    ax.set_xlabel(r"$Q_{F/G}$")
    ax.set_ylabel("speedup")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_bench(labels, seconds, path):
    fig, ax = _figure()
    means = [np.mean(s) for s in seconds]
    errs = [np.std(s) for s in seconds]
    ax.bar(np.arange(len(labels)), means, yerr=errs, color="0.6", edgecolor="k", lw=0.6)
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, rotation=20)
    ax.set_ylabel("seconds per force evaluation")
    return _save(fig, path)
