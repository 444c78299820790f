"""Report figures rendered to files (Agg backend, no display required)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import Trajectory
from .evaluate import LikelihoodMap
from .world import WorldModel

__all__ = [
    "plot_world",
    "plot_trajectories",
    "plot_likelihood_map",
    "plot_loss_curves",
    "plot_error_over_time",
]


def _save(fig, path) -> None:
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)


def plot_world(world: WorldModel, path, season: int = 0, resolution: int = 320) -> None:
    """Top-down appearance of one season over the full extent."""
    grid = world.appearance_grid(season, resolution)
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(
        grid,
        origin="upper",
        cmap="gray",
        vmin=0.0,
        vmax=1.0,
        extent=(0, world.extent_m, 0, world.extent_m),
    )
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"world seed={world.seed} season={season}")
    _save(fig, path)


def plot_trajectories(path, ground_truth: Trajectory, estimates: dict[str, Trajectory], world: WorldModel | None = None, season: int = 0) -> None:
    """Ground truth vs. one or more estimated tracks, optionally over the map."""
    fig, ax = plt.subplots(figsize=(6.5, 6))
    if world is not None:
        grid = world.appearance_grid(season, 220)
        ax.imshow(
            grid,
            origin="upper",
            cmap="gray",
            vmin=0.0,
            vmax=1.0,
            extent=(0, world.extent_m, 0, world.extent_m),
            alpha=0.65,
        )
    gt = ground_truth.positions()
    ax.plot(gt[:, 0], gt[:, 1], "k-", lw=2, label="ground truth")
    ax.plot(gt[0, 0], gt[0, 1], "k^", ms=9)
    for name, traj in estimates.items():
        p = traj.positions()
        ax.plot(p[:, 0], p[:, 1], lw=1.4, alpha=0.9, label=name)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)


def plot_likelihood_map(path, lmap: LikelihoodMap) -> None:
    """Similarity heatmap with the true cell marked."""
    fig, ax = plt.subplots(figsize=(6, 5.4))
    im = ax.imshow(lmap.grid, cmap="viridis", vmin=0.0, vmax=1.0)
    row, col = lmap.gt_cell
    ax.plot(col, row, "r*", ms=14, mec="white", mew=0.8, label="true pose")
    ax.set_xlabel("east cell")
    ax.set_ylabel("north cell")
    ax.set_title(f"query similarity (gt percentile {lmap.gt_rank_percentile:.1f})")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.legend(loc="lower right", fontsize=8)
    _save(fig, path)


def plot_loss_curves(path, history: list[dict]) -> None:
    """Train/validation loss per epoch, one panel per stage."""
    stages = sorted({row["stage"] for row in history})
    fig, axes = plt.subplots(1, max(len(stages), 1), figsize=(5.2 * max(len(stages), 1), 3.8), squeeze=False)
    for ax, stage in zip(axes[0], stages):
        rows = [r for r in history if r["stage"] == stage]
        epochs = [r["epoch"] for r in rows]
        ax.plot(epochs, [r["train_loss"] for r in rows], label="train")
        ax.plot(epochs, [r["val_loss"] for r in rows], label="held-out")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.set_title(f"stage {stage}")
        ax.legend(fontsize=8)
    _save(fig, path)


def plot_error_over_time(path, times: np.ndarray, errors: np.ndarray, entropy: np.ndarray | None = None) -> None:
    """Position error trace, optionally with the belief-entropy trace below."""
    n_rows = 2 if entropy is not None else 1
    fig, axes = plt.subplots(n_rows, 1, figsize=(6.5, 3.0 * n_rows), sharex=True, squeeze=False)
    ax = axes[0, 0]
    ax.plot(np.asarray(times, dtype=float), np.asarray(errors, dtype=float), lw=1.3)
    ax.set_ylabel("position error [m]")
    ax.grid(alpha=0.3)
    if entropy is not None:
        ax2 = axes[1, 0]
        ax2.plot(np.asarray(times, dtype=float), np.asarray(entropy, dtype=float), lw=1.3, color="tab:orange")
        ax2.set_ylabel("belief entropy [nats]")
        ax2.grid(alpha=0.3)
        ax2.set_xlabel("t [s]")
    else:
        ax.set_xlabel("t [s]")
    _save(fig, path)
