"""Motion-informed selection of clip frames from a pose/frame history.

Frames are chosen so they spread uniformly over *distance traveled*, not
time: a vehicle idling at a junction should not fill its clip with near
duplicates.  Targets are arc-length positions over the recent window; each
target maps to the frame whose cumulative traveled distance is nearest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

__all__ = ["SamplerConfig", "select_clip_frames"]

_ZERO_ARC = 1e-9


@dataclass
class SamplerConfig:
    num_frames: int = 4
    t_max: float = 10.0  # lookback window, seconds
    l_min: float = 5.0  # minimum arc length before the window is considered rich enough
    max_spacing: float = 5.0  # cap on arc-length gap between consecutive selected frames

    def __post_init__(self):
        if int(self.num_frames) < 1:
            raise ConfigError(f"num_frames must be >= 1, got {self.num_frames}")
        self.num_frames = int(self.num_frames)
        for name in ("t_max", "l_min", "max_spacing"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"SamplerConfig.{name} must be positive")


def _window_indices(frame_times: np.ndarray, now: float, lookback: float) -> np.ndarray:
    mask = (frame_times >= now - lookback) & (frame_times <= now)
    return np.nonzero(mask)[0]


def select_clip_frames(
    pose_times,
    pose_xy,
    frame_times,
    now: float,
    cfg: SamplerConfig,
) -> list[int]:
    """Pick ``cfg.num_frames`` frame indices spread uniformly in arc length.

    Parameters
    ----------
    pose_times, pose_xy : the odometry track ((P,) and (P, 2)); frame
        positions are linearly interpolated on it.
    frame_times : (F,) timestamps of available frames, non-decreasing.
    now : query time; the window is [now - t_max, now].

    Rules
    -----
    * Targets are (i-1)/(N-1) * L for i = 1..N over the window arc length L;
      when L exceeds (N-1) * max_spacing only the trailing arc of that length
      is covered, keeping consecutive gaps at most ``max_spacing``.
    * Each target takes the frame with the nearest cumulative distance
      (ties break to the earlier index); the final selection is pinned to the
      most recent frame in the window.
    * Window arc below ``l_min``: the lookback is extended once to 2 * t_max
      and the (possibly still short) result is accepted.
    * Near-zero displacement: the most recent frame is repeated N times.
    """
    pose_times = np.asarray(pose_times, dtype=float)
    pose_xy = np.asarray(pose_xy, dtype=float)
    frame_times = np.asarray(frame_times, dtype=float)
    if pose_times.ndim != 1 or pose_xy.shape != (pose_times.size, 2):
        raise ShapeError(f"pose track shapes mismatch: {pose_times.shape} vs {pose_xy.shape}")
    if pose_times.size < 1 or frame_times.size < 1:
        raise ShapeError("pose track and frame stream must be non-empty")
    if np.any(np.diff(frame_times) < 0.0):
        raise DomainError("frame_times must be non-decreasing")

    n = cfg.num_frames
    window = _window_indices(frame_times, now, cfg.t_max)
    if window.size == 0:
        window = _window_indices(frame_times, now, 2.0 * cfg.t_max)
        if window.size == 0:
            raise DomainError(f"no frames within 2*t_max of now={now}")

    def cumdist(idx: np.ndarray) -> np.ndarray:
        t = frame_times[idx]
        x = np.interp(t, pose_times, pose_xy[:, 0])
        y = np.interp(t, pose_times, pose_xy[:, 1])
        seg = np.hypot(np.diff(x), np.diff(y))
        return np.concatenate([[0.0], np.cumsum(seg)])

    c = cumdist(window)
    if c[-1] < cfg.l_min:
        wider = _window_indices(frame_times, now, 2.0 * cfg.t_max)
        if wider.size > window.size:
            window = wider
            c = cumdist(window)

    latest = int(window[-1])
    if n == 1:
        return [latest]
    total = float(c[-1])
    if total < _ZERO_ARC:
        return [latest] * n

    span = min(total, (n - 1) * cfg.max_spacing)
    start = total - span
    targets = start + np.arange(n) / (n - 1) * span
    picks = [int(window[np.argmin(np.abs(c - target))]) for target in targets]
    picks[-1] = latest
    return picks
