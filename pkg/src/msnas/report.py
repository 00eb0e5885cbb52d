"""Figure rendering for CLI reports.

matplotlib is imported lazily with the Agg backend so that library use and
headless runs never require a display; every function writes a PNG to the
given path and returns that path.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "plot_fit",
    "plot_loo_report",
    "plot_history",
    "plot_population_curves",
    "plot_correlation_matrix",
]


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_fit(points, fit, target_mflops, prediction, path):
    """One-shot rewards, the fitted curve and the extrapolated target."""
    from .curvefit import X_SCALE, eval_family

    plt = _plt()
    xs = np.array([p.x for p in points])
    ys = np.array([p.y for p in points])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(xs, ys, color="tab:blue", zorder=3, label="one-shot rewards")
    grid = np.linspace(min(xs.min(), target_mflops) * 0.9,
                       max(xs.max(), target_mflops) * 1.05, 256)
    if fit is not None and fit.converged:
        curve = eval_family(fit.family, fit.params, grid / X_SCALE)
        ax.plot(grid, curve, color="tab:orange",
                label=f"fit: {fit.family.value}")
    ax.scatter([target_mflops], [prediction], marker="*", s=160,
               color="tab:red", zorder=4, label="extrapolated")
    ax.axvline(target_mflops, color="tab:red", lw=0.8, ls=":")
    ax.set_xlabel("capacity (MFLOPs)")
    ax.set_ylabel("reward")
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_loo_report(report, path):
    """Per-family leave-one-out correlation averages with per-index detail."""
    plt = _plt()
    families = list(report.averages)
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(11, 4))
    names = [f.value for f in families]
    avgs = [report.averages[f] for f in families]
    colors = ["tab:green" if f is report.selected else "tab:gray"
              for f in families]
    ax0.barh(names, avgs, color=colors)
    ax0.set_xlabel("mean leave-one-out rank correlation")
    ax0.set_title(f"selected: {report.selected.value}")
    for f in families:
        js = range(1, len(report.taus[f]) + 1)
        ax1.plot(js, report.taus[f], marker="o",
                 label=f.value, lw=1.5 if f is report.selected else 0.8)
    ax1.set_xlabel("left-out supernet index")
    ax1.set_ylabel("rank correlation")
    ax1.legend(fontsize=7, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_history(history, path):
    """Best-so-far estimated reward against the real-evaluation index."""
    plt = _plt()
    best = history.best_so_far()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(1, best.size + 1), best, color="tab:blue")
    rewards = [e.est_reward for e in history.entries]
    ax.scatter(np.arange(1, best.size + 1), rewards, s=6, alpha=0.35,
               color="tab:gray")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("estimated reward")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_population_curves(backend, topologies, target_mflops, path,
                           highlight=()):
    """Noiseless simulator reward curves; crossing pairs drawn in color.

    ``highlight`` is a sequence of (id, id) tuples referring to members of
    ``topologies``.
    """
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    grid = np.linspace(50.0, max(2.0 * target_mflops, 100.0), 256)
    by_id = {t.id: t for t in topologies}
    flat_high = {tid for pair in highlight for tid in pair}
    for t in topologies:
        if t.id in flat_high:
            continue
        ys = [backend.ground_truth_at(t, x) for x in grid]
        ax.plot(grid, ys, color="tab:gray", alpha=0.25, lw=0.7)
    cmap = plt.get_cmap("tab10")
    for i, pair in enumerate(highlight):
        for tid, style in zip(pair, ("-", "--")):
            if tid not in by_id:
                continue
            ys = [backend.ground_truth_at(by_id[tid], x) for x in grid]
            ax.plot(grid, ys, style, color=cmap(i % 10), lw=1.6)
    ax.axvline(target_mflops, color="tab:red", lw=0.8, ls=":")
    ax.set_xlabel("capacity (MFLOPs)")
    ax.set_ylabel("noiseless reward")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_correlation_matrix(matrix, channels, path):
    """Heatmap of pairwise rank correlations between supernet rewards."""
    plt = _plt()
    m = np.asarray(matrix, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(m, vmin=-1.0, vmax=1.0, cmap="viridis")
    ticks = np.arange(len(channels))
    ax.set_xticks(ticks, [str(c) for c in channels])
    ax.set_yticks(ticks, [str(c) for c in channels])
    ax.set_xlabel("init channels")
    ax.set_ylabel("init channels")
    for i in range(m.shape[0]):
        for j in range(m.shape[1]):
            ax.text(j, i, f"{m[i, j]:.2f}", ha="center", va="center",
                    fontsize=6, color="white")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
