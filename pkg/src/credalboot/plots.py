"""Figure rendering for pipeline results (PNG files, non-interactive).

matplotlib is imported lazily so that text-only runs never touch it; the
Agg backend is forced and savefig metadata is stripped so a rerun with the
same inputs produces byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .credal import rough_summary

__all__ = ["render_figures"]

_SAVE_OPTS = {"dpi": 120, "metadata": {"Software": None}}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def _scatter_against_diagonal(plt, path, x, y, xlabel, ylabel):
    fig, ax = plt.subplots(figsize=(5, 5))
    lim = (-0.02, 1.02)
    ax.plot(lim, lim, color="0.6", linewidth=1, zorder=1)
    ax.scatter(x, y, s=12, alpha=0.6, zorder=2)
    ax.set_xlim(lim)
    ax.set_ylim(lim)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def _set_label(members) -> str:
    return "{" + ",".join(str(k + 1) for k in members) + "}"


def _partition_map(plt, path, data, partition):
    from matplotlib import colormaps

    summary = rough_summary(partition)
    sets = partition.family.index_sets()
    colors = colormaps["tab10"](np.linspace(0, 1, 10))
    hard_idx = np.array([sets.index(s) for s in summary.hard_sets])

    fig, ax = plt.subplots(figsize=(6, 5))
    for si, members in enumerate(sets):
        mask = hard_idx == si
        if not mask.any():
            continue
        color = colors[si % 10]
        marker = "o" if len(members) == 1 else "s"
        ax.scatter(
            data.rows[mask, 0], data.rows[mask, 1],
            color=color, marker=marker, s=28, label=_set_label(members),
        )
    # hull per cluster around its upper approximation (possible members)
    from scipy.spatial import ConvexHull, QhullError

    for k, members in enumerate(summary.upper):
        pts = data.rows[members]
        if len(pts) < 3:
            continue
        try:
            hull = ConvexHull(pts)
        except QhullError:
            # degenerate geometry (e.g. collinear points): no hull outline
            continue
        cycle = np.append(hull.vertices, hull.vertices[0])
        ax.plot(
            pts[cycle, 0], pts[cycle, 1],
            color=colors[k % 10], linewidth=1, linestyle="--", alpha=0.8,
        )
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def _trace_plot(plt, path, values):
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(values.size), values, marker="o", markersize=3)
    if values.size and values.min() > 0:
        ax.set_yscale("log")
    ax.set_xlabel("sweep")
    ax.set_ylabel("objective")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def render_figures(out_dir, *, intervals=None, rel=None, data=None,
                   partition=None, trace=None) -> list:
    """Write the figures that the given inputs allow; returns written paths.

    Calibration scatters need ``intervals`` and ``rel``; the partition map
    needs two-dimensional ``data`` plus ``partition``; the convergence plot
    needs ``trace`` (the per-sweep objective values as a 1-d sequence).
    """
    from pathlib import Path

    out_dir = Path(out_dir)
    written = []
    plt = _pyplot()

    if intervals is not None and rel is not None:
        if intervals.n != rel.n:
            raise ValueError(
                f"intervals cover n={intervals.n} objects, relational n={rel.n}"
            )
        path = out_dir / "fig_bel_vs_lower.png"
        _scatter_against_diagonal(
            plt, path, intervals.flat_lower(), rel.bel,
            "interval lower bound", "belief",
        )
        written.append(path)
        path = out_dir / "fig_pl_vs_upper.png"
        _scatter_against_diagonal(
            plt, path, intervals.flat_upper(), rel.pl,
            "interval upper bound", "plausibility",
        )
        written.append(path)

    if data is not None and partition is not None and data.d == 2:
        path = out_dir / "fig_partition_map.png"
        _partition_map(plt, path, data, partition)
        written.append(path)

    if trace is not None:
        path = out_dir / "fig_irqp_trace.png"
        _trace_plot(plt, path, trace)
        written.append(path)

    return written
