"""Figures for the CLI report path.

Uses the object-oriented matplotlib API (``Figure`` + Agg canvas), so no
global pyplot state or display backend is involved.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

CMAP = "inferno"


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return path


def _extent(m):
    dx = (m.xs[1] - m.xs[0]) / 2 if len(m.xs) > 1 else 0.5
    dy = (m.ys[1] - m.ys[0]) / 2 if len(m.ys) > 1 else 0.5
    return [m.xs[0] - dx, m.xs[-1] + dx, m.ys[0] - dy, m.ys[-1] + dy]


def _panel(ax, m, title, vmax=None, marks=()):
    im = ax.imshow(m.values, origin="lower", extent=_extent(m), cmap=CMAP, vmin=0, vmax=vmax)
    for x, y in marks:
        ax.plot(x, y, marker="+", color="cyan", ms=10, mew=1.5)
    ax.set_title(title, fontsize=9)
    ax.set_xlabel(r"x ($\mu$m)", fontsize=8)
    ax.set_ylabel(r"y ($\mu$m)", fontsize=8)
    ax.tick_params(labelsize=7)
    return im


def speckle_figure(maps: dict, path, marks=()) -> Path:
    fig = Figure(figsize=(8, 3.6))
    axes = fig.subplots(1, 2)
    for ax, key in zip(axes, ("coincidence", "singles")):
        im = _panel(ax, maps[key], key, marks=marks)
        fig.colorbar(im, ax=ax, shrink=0.8, label="counts / window")
    fig.tight_layout()
    return _save(fig, path)


def before_after_figure(before: dict, after: dict, path, marks=(), title="") -> Path:
    """Coincidences and singles before and after optimization, shared colour scale per row."""
    fig = Figure(figsize=(8, 7))
    axes = fig.subplots(2, 2)
    for row, key in enumerate(("coincidence", "singles")):
        vmax = max(before[key].values.max(), after[key].values.max())
        for col, (label, maps) in enumerate((("before", before), ("after", after))):
            im = _panel(axes[row, col], maps[key], f"{key}, {label}", vmax=vmax, marks=marks)
        fig.colorbar(im, ax=axes[row, :].tolist(), shrink=0.8, label="counts / window")
    if title:
        fig.suptitle(title, fontsize=10)
    return _save(fig, path)


def trace_figure(run, baseline, path, ylabel="cost") -> Path:
    """Best-so-far and swarm-mean cost per iteration against the random baseline."""
    fig = Figure(figsize=(6, 3.6))
    ax = fig.subplots()
    it = np.arange(len(run.trace_best))
    ax.plot(it, run.trace_mean, color="0.6", lw=0.8, label="swarm mean")
    ax.plot(it, run.trace_best, color="C3", lw=1.5, label="best so far")
    ax.axhline(baseline.mean, color="C2", ls="--", lw=1, label="random configurations")
    ax.fill_between(it, baseline.mean - baseline.std, baseline.mean + baseline.std,
                    color="C2", alpha=0.2, lw=0)
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def histogram_figure(samples: dict, path) -> Path:
    """Normalised histograms of ensemble samples (value / mean), one per entry."""
    fig = Figure(figsize=(6, 3.6))
    ax = fig.subplots()
    for label, s in samples.items():
        s = np.asarray(s)
        ax.hist(s / s.mean(), bins=60, density=True, histtype="step", lw=1.3, label=label)
    ax.set_xlabel("signal / mean")
    ax.set_ylabel("probability density")
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    return _save(fig, path)
