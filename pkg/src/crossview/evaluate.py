"""Trajectory metrics and single-frame likelihood maps.

Predicted and ground-truth trajectories are associated by nearest timestamp
(within half the median ground-truth frame spacing); metrics operate on the
associated pairs.  Likelihood maps score a grid of candidate poses around a
query with an arbitrary matcher and report where the true cell ranks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Pose, Trajectory
from .errors import ConfigError, DomainError, ShapeError
from .world import WorldModel, render_aerial_patches

__all__ = [
    "associate",
    "ate",
    "sdr",
    "success_rate",
    "MetricsReport",
    "compute_metrics",
    "LikelihoodMap",
    "likelihood_map",
]


def associate(pred: Trajectory, gt: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-timestamp association of every predicted frame to a ground-truth frame.

    The tolerance is half the median ground-truth stamp spacing; a predicted
    frame without a ground-truth stamp that close is an error, as the two
    streams then do not describe the same run.
    Returns (pred_indices, gt_indices), one pair per predicted frame.
    """
    tp = pred.times()
    tg = gt.times()
    if tg.size >= 2:
        tol = 0.5 * float(np.median(np.diff(tg)))
    else:
        tol = math.inf
    pos = np.searchsorted(tg, tp)
    left = np.clip(pos - 1, 0, tg.size - 1)
    right = np.clip(pos, 0, tg.size - 1)
    pick = np.where(np.abs(tg[left] - tp) <= np.abs(tg[right] - tp), left, right)
    gaps = np.abs(tg[pick] - tp)
    if np.any(gaps > tol):
        worst = int(np.argmax(gaps))
        raise DomainError(
            f"prediction at t={tp[worst]!r} has no ground-truth stamp within {tol!r}s"
        )
    return np.arange(tp.size), pick


def ate(pred: Trajectory, gt: Trajectory) -> tuple[float, float]:
    """Absolute trajectory error: (mean, max) Euclidean position error."""
    ip, ig = associate(pred, gt)
    errors = np.hypot(
        pred.positions()[ip, 0] - gt.positions()[ig, 0],
        pred.positions()[ip, 1] - gt.positions()[ig, 1],
    )
    return float(errors.mean()), float(errors.max())


def sdr(pred: Trajectory, gt: Trajectory) -> float:
    """Scale drift rate: absolute arc-length mismatch as a percentage of truth."""
    if len(pred) < 2 or len(gt) < 2:
        raise DomainError("sdr needs at least two poses per trajectory")
    arc_gt = gt.arc_length()
    if arc_gt <= 0.0:
        raise DomainError("ground-truth arc length must be positive")
    return float(abs(pred.arc_length() - arc_gt) / arc_gt * 100.0)


def success_rate(pred: Trajectory, gt: Trajectory, thresholds=(10.0, 25.0, 50.0)) -> dict[float, float]:
    """Percentage of frames whose position error is within each threshold."""
    ths = [float(t) for t in thresholds]
    if len(ths) == 0 or any(t <= 0.0 for t in ths):
        raise ConfigError("thresholds must be positive and non-empty")
    ip, ig = associate(pred, gt)
    errors = np.hypot(
        pred.positions()[ip, 0] - gt.positions()[ig, 0],
        pred.positions()[ip, 1] - gt.positions()[ig, 1],
    )
    return {t: float(100.0 * np.mean(errors <= t)) for t in ths}


@dataclass
class MetricsReport:
    ate_mean: float
    ate_max: float
    sdr_percent: float
    success_rates: dict[float, float]
    num_frames: int

    def to_dict(self) -> dict:
        return {
            "ate_mean": self.ate_mean,
            "ate_max": self.ate_max,
            "sdr_percent": self.sdr_percent,
            "success_rates": {repr(float(k)): v for k, v in sorted(self.success_rates.items())},
            "num_frames": self.num_frames,
        }


def compute_metrics(pred: Trajectory, gt: Trajectory, thresholds=(10.0, 25.0, 50.0)) -> MetricsReport:
    mean_err, max_err = ate(pred, gt)
    return MetricsReport(
        ate_mean=mean_err,
        ate_max=max_err,
        sdr_percent=sdr(pred, gt),
        success_rates=success_rate(pred, gt, thresholds),
        num_frames=len(pred),
    )


# ------------------------------------------------------------- likelihood map


@dataclass
class LikelihoodMap:
    """Min-max-normalized matcher scores over a pose grid around a query.

    ``grid[row, col]``: row 0 is the north edge, columns run west to east.
    The grid is laid out so the query position coincides with one cell's
    center (see ``likelihood_map``).  ``gt_rank_percentile`` ranks the cell
    containing the query among all cells by raw score (descending,
    average-rank ties): 100 * rank / G^2, lower is better.
    """

    grid: np.ndarray
    cell_size_m: float
    center: Pose
    orientation_prior: float
    gt_rank_percentile: float
    gt_cell: tuple[int, int]
    oob_count: int


def likelihood_map(
    world: WorldModel,
    gt_pose: Pose,
    season: int,
    orientation_prior: float,
    matcher: Callable[[np.ndarray], np.ndarray],
    grid_size: int = 30,
    map_side_m: float = 150.0,
    patch_side_m: float = 20.0,
    patch_resolution: int = 32,
) -> LikelihoodMap:
    """Score a grid_size^2 pose grid laid over the query pose.

    Every cell center is rendered as an aerial patch at the orientation prior
    and scored by ``matcher`` (a callable mapping a (K, R, R) pixel stack to K
    scores).  Out-of-bounds cells score 0 and are counted.  Raw scores decide
    the ground-truth rank; the stored grid is min-max normalized (flat scores
    normalize to 0.5 everywhere).

    The grid origin is offset by half a cell so the query position falls
    exactly on a cell center.  With an even grid count, naive centering would
    instead pin the query to a four-cell corner -- the worst-case quantization
    offset for the very cell whose rank is being measured.
    """
    g = int(grid_size)
    if g < 2:
        raise ConfigError(f"grid_size must be >= 2, got {grid_size}")
    if map_side_m <= 0.0:
        raise ConfigError("map_side_m must be positive")
    cell = map_side_m / g
    ox = gt_pose.x - map_side_m / 2.0 + 0.5 * cell * ((g + 1) % 2)
    oy = gt_pose.y - map_side_m / 2.0 + 0.5 * cell * ((g + 1) % 2)
    centers_x = ox + (np.arange(g) + 0.5) * cell
    centers_y = oy + (np.arange(g) + 0.5) * cell
    xx, yy = np.meshgrid(centers_x, centers_y)  # [iy, ix], y increasing with iy
    xs = xx.ravel()
    ys = yy.ravel()
    thetas = np.full(xs.size, float(orientation_prior))
    pixels, valid = render_aerial_patches(
        world, xs, ys, thetas, season, patch_side_m, patch_resolution
    )
    scores = np.zeros(xs.size)
    if np.any(valid):
        out = np.asarray(matcher(pixels[valid]), dtype=float)
        if out.shape != (int(valid.sum()),):
            raise ShapeError(f"matcher returned {out.shape}, expected ({int(valid.sum())},)")
        scores[valid] = out

    ix = min(max(int((gt_pose.x - ox) / cell), 0), g - 1)
    iy = min(max(int((gt_pose.y - oy) / cell), 0), g - 1)
    s_gt = scores[iy * g + ix]
    rank = float(np.sum(scores > s_gt)) + (float(np.sum(scores == s_gt)) + 1.0) / 2.0
    percentile = 100.0 * rank / scores.size

    lo, hi = scores.min(), scores.max()
    if hi - lo < 1e-300:
        norm = np.full_like(scores, 0.5)
    else:
        norm = (scores - lo) / (hi - lo)
    grid = norm.reshape(g, g)[::-1, :]  # flip so row 0 is north
    return LikelihoodMap(
        grid=grid,
        cell_size_m=cell,
        center=gt_pose,
        orientation_prior=float(orientation_prior),
        gt_rank_percentile=float(percentile),
        gt_cell=(g - 1 - iy, ix),
        oob_count=int(np.sum(~valid)),
    )
