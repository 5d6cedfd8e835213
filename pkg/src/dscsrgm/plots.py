"""Static SVG figures for campaign and ablation reports."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "dscsrgm"
_SVG_META = {"Date": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def error_scatter(errors_x, errors_y, label_x: str, label_y: str, metric: str, path) -> Path:
    """Per-target errors of two variants on log axes, with the y = x line."""
    x = np.asarray(errors_x, dtype=float)
    y = np.asarray(errors_y, dtype=float)
    keep = (x > 0) & (y > 0)
    x, y = x[keep], y[keep]
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(x, y, s=14, alpha=0.8)
    if x.size:
        lo = min(x.min(), y.min()) * 0.8
        hi = max(x.max(), y.max()) * 1.25
        ax.plot([lo, hi], [lo, hi], color="grey", lw=0.8, ls="--")
        ax.set_xlim(lo, hi)
        ax.set_ylim(lo, hi)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(f"{label_x} {metric.upper()}")
    ax.set_ylabel(f"{label_y} {metric.upper()}")
    ax.set_title(f"{label_y} vs {label_x} ({metric.upper()})")
    fig.tight_layout()
    return _save(fig, path)


def wtl_bars(tallies: dict, title: str, path) -> Path:
    """Stacked win/tie/loss bars; ``tallies`` maps a label to (wins, ties, losses)."""
    labels = list(tallies)
    w = np.array([tallies[k][0] for k in labels])
    t = np.array([tallies[k][1] for k in labels])
    l = np.array([tallies[k][2] for k in labels])
    fig, ax = plt.subplots(figsize=(1.6 * max(len(labels), 2) + 1, 3.5))
    pos = np.arange(len(labels))
    ax.bar(pos, w, label="win", color="#4c72b0")
    ax.bar(pos, t, bottom=w, label="tie", color="#bbbbbb")
    ax.bar(pos, l, bottom=w + t, label="loss", color="#c44e52")
    ax.set_xticks(pos)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("targets")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def sweep_line(settings, values, xlabel: str, ylabel: str, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    xs = np.arange(len(settings))
    ax.plot(xs, values, marker="o")
    ax.set_xticks(xs)
    ax.set_xticklabels([str(s) for s in settings])
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    return _save(fig, path)
