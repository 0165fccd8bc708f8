"""Figure helpers. Everything renders off-screen to files."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CURVE_PANELS = (
    ("episode_reward_mean", "episode reward"),
    ("violation_rate", "violation rate"),
    ("success_rate", "success rate"),
    ("value_loss", "value loss"),
    ("safety_loss", "safety loss"),
    ("lambda", "lambda"),
)


def plot_curves(rows_by_seed: Mapping[int, Sequence[dict]], path: str | Path, title: str = "") -> None:
    """Training curves, one line per seed."""
    fig, axes = plt.subplots(2, 3, figsize=(12, 6), sharex=True)
    for ax, (key, label) in zip(axes.ravel(), CURVE_PANELS):
        for seed, rows in sorted(rows_by_seed.items()):
            if not rows:
                continue
            x = [r["step"] for r in rows]
            y = [r[key] for r in rows]
            ax.plot(x, y, lw=1.2, label=f"seed {seed}")
        ax.set_title(label, fontsize=10)
        ax.grid(alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("environment steps")
    axes[0, 0].legend(fontsize=7)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_landscape(xs, ys, panels: Mapping[str, np.ndarray], obstacles: np.ndarray, path: str | Path) -> None:
    """Side-by-side heatmaps on a shared color scale with obstacle outlines."""
    vals = np.concatenate([np.ravel(v) for v in panels.values()])
    vmin, vmax = float(np.min(vals)), float(np.max(vals))
    extent = (xs[0], xs[-1], ys[0], ys[-1])
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 4), layout="constrained")
    axes = np.atleast_1d(axes)
    for ax, (name, img) in zip(axes, panels.items()):
        im = ax.imshow(img, origin="lower", extent=extent, vmin=vmin, vmax=vmax, cmap="viridis")
        for x0, y0, x1, y1 in obstacles:
            ax.add_patch(plt.Rectangle((x0, y0), x1 - x0, y1 - y0, fc="0.6", ec="k", lw=0.8))
        ax.set_title(name, fontsize=10)
        ax.set_aspect("equal")
    fig.colorbar(im, ax=list(axes), shrink=0.8)
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_sweep(param: str, values: Sequence, means: Mapping[str, Sequence[float]], stds: Mapping[str, Sequence[float]],
               path: str | Path) -> None:
    """Final evaluation metrics against the swept parameter."""
    fig, axes = plt.subplots(1, len(means), figsize=(4 * len(means), 3.2))
    axes = np.atleast_1d(axes)
    pos = np.arange(len(values))
    for ax, key in zip(axes, means):
        ax.errorbar(pos, means[key], yerr=stds[key], marker="o", capsize=3)
        ax.set_xticks(pos, [str(v) for v in values])
        ax.set_xlabel(param)
        ax.set_title(key, fontsize=10)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
