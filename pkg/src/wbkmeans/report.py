"""Matplotlib figures written next to the CLI's delimited output."""
from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.colors import ListedColormap
from matplotlib.figure import Figure

# fixed metadata keeps reruns byte-identical
_PNG_META = {"Software": None}
_COLORS = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"]


def _save(fig: Figure, path) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=100, metadata=_PNG_META)


def plot_trace(traces, path, labels=None) -> None:
    """Objective per iteration, one line per run."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot(1, 1, 1)
    for r, thetas in enumerate(traces):
        label = labels[r] if labels is not None else f"run {r}"
        ax.plot(np.arange(1, len(thetas) + 1), thetas, marker="o", ms=3, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    ax.grid(alpha=0.3)
    if len(traces) <= 10:
        ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def _project(points: np.ndarray) -> np.ndarray:
    if points.shape[1] == 1:
        return np.hstack([points, np.zeros_like(points)])
    return points[:, :2]


def plot_clusters(points, y, sites, sigma, path, resolution: int = 300) -> None:
    """Points colored by their largest fraction, split points circled, power cells shaded.

    Cells are drawn only for two-dimensional data; otherwise the first two
    coordinates are shown without cells.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    y = np.asarray(y)
    sites = np.asarray(sites, dtype=float).reshape(-1, points.shape[1])
    k = sites.shape[0]
    cmap = ListedColormap([_COLORS[i % len(_COLORS)] for i in range(k)])
    xy, sxy = _project(points), _project(sites)
    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot(1, 1, 1)
    lo = np.minimum(xy.min(0), sxy.min(0))
    hi = np.maximum(xy.max(0), sxy.max(0))
    pad = 0.08 * np.maximum(hi - lo, 1e-9)
    lo, hi = lo - pad, hi + pad
    if points.shape[1] == 2 and sigma is not None:
        gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], resolution), np.linspace(lo[1], hi[1], resolution))
        grid = np.column_stack([gx.ravel(), gy.ravel()])
        power = ((grid[None, :, :] - sites[:, None, :]) ** 2).sum(-1) - np.asarray(sigma)[:, None]
        cell = np.argmin(power, axis=0).reshape(gx.shape)
        ax.imshow(cell, origin="lower", extent=(lo[0], hi[0], lo[1], hi[1]), cmap=cmap,
                  vmin=-0.5, vmax=k - 0.5, alpha=0.18, aspect="auto", interpolation="nearest")
    dominant = np.argmax(y, axis=0)
    split = (y > 1e-9).sum(axis=0) > 1
    ax.scatter(xy[:, 0], xy[:, 1], c=dominant, cmap=cmap, vmin=-0.5, vmax=k - 0.5, s=18, zorder=2)
    if split.any():
        ax.scatter(xy[split, 0], xy[split, 1], facecolors="none", edgecolors="k", s=90,
                   linewidths=1.2, zorder=3, label="split point")
        ax.legend(loc="best", fontsize=8)
    ax.scatter(sxy[:, 0], sxy[:, 1], c=np.arange(k), cmap=cmap, vmin=-0.5, vmax=k - 0.5,
               marker="X", s=140, edgecolors="k", zorder=4)
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    fig.tight_layout()
    _save(fig, path)
