"""Planar pose types, angle arithmetic, and trajectory containers.

Angles are radians wrapped to the half-open interval (-pi, pi]; poses live in
a fixed world frame with x east, y north, and theta measured counter-clockwise
from the +x axis.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError

__all__ = [
    "Pose",
    "StampedPose",
    "Trajectory",
    "wrap_angle",
    "ang_diff",
    "weighted_circular_mean",
    "load_trajectory_csv",
    "save_trajectory_csv",
]

TRAJECTORY_CSV_HEADER = ("t", "x", "y", "theta")


def wrap_angle(angle):
    """Wrap an angle (scalar or array, radians) to (-pi, pi].

    The boundary maps to +pi: ``wrap_angle(-pi) == pi``.  Adding any integer
    multiple of 2*pi leaves the result unchanged.
    """
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)
    if np.ndim(angle) == 0:
        return float(wrapped)
    return wrapped


def ang_diff(a, b):
    """Smallest signed angle taking ``b`` to ``a``, in (-pi, pi].

    ``ang_diff(a, b) == -ang_diff(b, a)`` except when the difference lands on
    the +pi boundary, which is its own representative.
    """
    return wrap_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def weighted_circular_mean(angles, weights):
    """Weighted circular mean of ``angles`` under normalized ``weights``.

    Computes atan2(sum_i w_i sin a_i, sum_i w_i cos a_i).  This is the correct
    average for headings: {179 deg, -179 deg} with equal weights averages to
    180 deg, not 0.

    Parameters
    ----------
    angles : array_like, shape (N,)
    weights : array_like, shape (N,)
        Non-negative, summing to 1 within 1e-6.

    Raises
    ------
    ShapeError
        If shapes differ or the inputs are empty.
    DomainError
        If weights are invalid, or the resultant vector length falls below
        1e-12 (e.g. two equal-weight opposite headings), in which case the
        mean heading is undefined.
    """
    a = np.asarray(angles, dtype=float)
    w = np.asarray(weights, dtype=float)
    if a.ndim != 1 or w.shape != a.shape:
        raise ShapeError(f"angles and weights must be 1-D with equal length, got {a.shape} and {w.shape}")
    if a.size == 0:
        raise ShapeError("cannot average an empty set of angles")
    if np.any(w < 0.0):
        raise DomainError("weights must be non-negative")
    if abs(w.sum() - 1.0) > 1e-6:
        raise DomainError(f"weights must sum to 1 (got {w.sum()!r})")
    c = float(np.dot(w, np.cos(a)))
    s = float(np.dot(w, np.sin(a)))
    if np.hypot(c, s) < 1e-12:
        raise DomainError("circular mean undefined: resultant length below 1e-12")
    return wrap_angle(np.arctan2(s, c))


@dataclass(frozen=True)
class Pose:
    """A planar pose (x, y, theta); theta is wrapped to (-pi, pi] on construction."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        for name in ("x", "y", "theta"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise DomainError(f"Pose.{name} must be finite, got {v!r}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class StampedPose:
    """A pose with a timestamp in seconds."""

    t: float
    pose: Pose

    def __post_init__(self):
        if not np.isfinite(self.t):
            raise DomainError(f"StampedPose.t must be finite, got {self.t!r}")
        object.__setattr__(self, "t", float(self.t))

    @property
    def x(self) -> float:
        return self.pose.x

    @property
    def y(self) -> float:
        return self.pose.y

    @property
    def theta(self) -> float:
        return self.pose.theta


@dataclass
class Trajectory:
    """An ordered, strictly increasing-in-time sequence of stamped poses."""

    poses: list[StampedPose] = field(default_factory=list)

    def __post_init__(self):
        if len(self.poses) == 0:
            raise ShapeError("Trajectory requires at least one pose")
        t = self.times()
        if np.any(np.diff(t) <= 0.0):
            raise DomainError("Trajectory timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, i) -> StampedPose:
        return self.poses[i]

    def times(self) -> np.ndarray:
        return np.array([p.t for p in self.poses])

    def positions(self) -> np.ndarray:
        """(N, 2) array of x, y."""
        return np.array([[p.x, p.y] for p in self.poses])

    def headings(self) -> np.ndarray:
        return np.array([p.theta for p in self.poses])

    def arc_length(self) -> float:
        """Total path length: sum of consecutive Euclidean segment lengths."""
        if len(self.poses) < 2:
            return 0.0
        xy = self.positions()
        return float(np.sum(np.hypot(*np.diff(xy, axis=0).T)))


def save_trajectory_csv(trajectory: Trajectory, path) -> None:
    """Write a trajectory as CSV with header ``t,x,y,theta`` (radians).

    Floats are written with full round-trip precision so identical
    trajectories serialize byte-identically.
    """
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRAJECTORY_CSV_HEADER)
        for p in trajectory.poses:
            writer.writerow([repr(p.t), repr(p.x), repr(p.y), repr(p.theta)])


def load_trajectory_csv(path) -> Trajectory:
    """Read a ``t,x,y,theta`` CSV written by :func:`save_trajectory_csv`."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRAJECTORY_CSV_HEADER:
            raise DomainError(f"expected header {','.join(TRAJECTORY_CSV_HEADER)!r} in {path}")
        poses = []
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise ShapeError(f"expected 4 columns per row in {path}, got {len(row)}")
            t, x, y, theta = (float(v) for v in row)
            poses.append(StampedPose(t, Pose(x, y, theta)))
    return Trajectory(poses)
