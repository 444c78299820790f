"""Seeded synthetic world: a multi-season scalar appearance field with renderers.

The world is a deterministic function of its seed.  A single band-limited
structure field S(x, y) in [0, 1] (smooth noise plus a thin connected trail
network) carries the geometry; each season views it through a monotone tone
curve plus additive band-limited seasonal noise, so structure ordering
persists across seasons while absolute appearance drifts.

Renderers sample the continuous field bilinearly and never clamp coordinates:
a footprint that leaves [0, extent]^2 raises ``OutOfBoundsError``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import Pose, StampedPose, Trajectory, ang_diff, wrap_angle
from .errors import ConfigError, DomainError, OutOfBoundsError, ShapeError

__all__ = [
    "ImagePatch",
    "GroundClip",
    "AugmentationParams",
    "RenderConfig",
    "WorldModel",
    "build_world",
    "render_aerial_patch",
    "render_aerial_patches",
    "render_ground_clip",
    "generate_trajectory",
    "apply_augmentation",
    "sample_augmentation_params",
]

# Grid resolutions (meters per cell) for the stored fields.
_STRUCTURE_CELL = 0.5
_SEASON_NOISE_CELL = 2.0
# Smoothing length scales (meters) and mix weights for the base noise octaves.
_OCTAVE_SIGMA_M = (4.0, 10.0, 24.0)
_OCTAVE_WEIGHT = (0.45, 0.35, 0.20)
# Trail rendering.
_NUM_TRAILS = 3
_TRAIL_WIDTH_M = 1.2
_TRAIL_LEVEL = 0.97
_TRAIL_BLEND = 0.85
_TRAIL_STEP_M = 0.25
# RNG stream tags.
_S_STRUCT, _S_TRAIL, _S_SEASON, _S_TRAJ, _S_GROUND = 1, 2, 3, 4, 5


def _bilinear(grid: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Bilinear lookup at fractional index coordinates (assumed in range)."""
    n_r, n_c = grid.shape
    r0 = np.clip(np.floor(rows).astype(np.int64), 0, n_r - 2)
    c0 = np.clip(np.floor(cols).astype(np.int64), 0, n_c - 2)
    fr = rows - r0
    fc = cols - c0
    g00 = grid[r0, c0]
    g01 = grid[r0, c0 + 1]
    g10 = grid[r0 + 1, c0]
    g11 = grid[r0 + 1, c0 + 1]
    top = g00 * (1.0 - fc) + g01 * fc
    bot = g10 * (1.0 - fc) + g11 * fc
    return top * (1.0 - fr) + bot * fr


@dataclass
class RenderConfig:
    """Shared renderer settings: aerial patches and ground frames use one size.

    The ground footprint length equals the aerial patch side, so both views
    cover comparable terrain and can share encoder weights.
    """

    patch_side_m: float = 20.0
    resolution: int = 32
    ground_noise_sigma: float = 0.02
    fov_half_angle_deg: float = 30.0

    def __post_init__(self):
        if self.patch_side_m <= 0.0:
            raise ConfigError("patch_side_m must be positive")
        if int(self.resolution) < 4:
            raise ConfigError(f"resolution must be >= 4, got {self.resolution}")
        self.resolution = int(self.resolution)
        if self.ground_noise_sigma < 0.0:
            raise ConfigError("ground_noise_sigma must be non-negative")
        if not (0.0 < self.fov_half_angle_deg < 90.0):
            raise ConfigError("fov_half_angle_deg must be in (0, 90)")


@dataclass(frozen=True)
class ImagePatch:
    """A single-channel image with a nominal ground resolution.

    ``pixels`` is (H, W) float64 in [0, 1]; H, W >= 4.
    """

    pixels: np.ndarray
    meters_per_pixel: float

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim != 2 or px.shape[0] < 4 or px.shape[1] < 4:
            raise ShapeError(f"ImagePatch.pixels must be (H>=4, W>=4), got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise DomainError("ImagePatch.pixels must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise DomainError("ImagePatch.pixels must lie in [0, 1]")
        if not (self.meters_per_pixel > 0.0):
            raise DomainError("meters_per_pixel must be positive")
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class GroundClip:
    """An ordered set of forward-view frames with the poses they were taken from."""

    frames: list[ImagePatch]
    frame_poses: list[StampedPose]

    def __post_init__(self):
        if len(self.frames) == 0:
            raise ShapeError("GroundClip requires at least one frame")
        if len(self.frames) != len(self.frame_poses):
            raise ShapeError(
                f"frames ({len(self.frames)}) and frame_poses ({len(self.frame_poses)}) must align"
            )

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class AugmentationParams:
    """Photometric + crop jitter applied identically to every frame of a clip.

    ``brightness=1, contrast=1, crop_fraction=1, crop_offset=(0, 0)`` is the
    identity.  ``crop_fraction`` must stay in (0.8, 1] so augmented views keep
    most of their footprint.
    """

    brightness: float = 1.0
    contrast: float = 1.0
    crop_fraction: float = 1.0
    crop_offset: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if not (self.brightness > 0.0 and np.isfinite(self.brightness)):
            raise DomainError(f"brightness must be positive, got {self.brightness!r}")
        if not (self.contrast > 0.0 and np.isfinite(self.contrast)):
            raise DomainError(f"contrast must be positive, got {self.contrast!r}")
        if not (0.8 < self.crop_fraction <= 1.0):
            raise DomainError(f"crop_fraction must lie in (0.8, 1], got {self.crop_fraction!r}")
        r0, c0 = self.crop_offset
        if r0 < 0 or c0 < 0:
            raise DomainError("crop_offset entries must be non-negative")


def sample_augmentation_params(
    rng: np.random.Generator,
    height: int,
    width: int,
    brightness_range: tuple[float, float] = (0.9, 1.1),
    contrast_range: tuple[float, float] = (0.9, 1.1),
    crop_fraction_range: tuple[float, float] = (0.85, 1.0),
) -> AugmentationParams:
    """Draw one AugmentationParams; offsets are uniform over valid crop placements."""
    brightness = float(rng.uniform(*brightness_range))
    contrast = float(rng.uniform(*contrast_range))
    frac = float(rng.uniform(*crop_fraction_range))
    ch = max(1, math.floor(height * frac))
    cw = max(1, math.floor(width * frac))
    r0 = int(rng.integers(0, height - ch + 1))
    c0 = int(rng.integers(0, width - cw + 1))
    return AugmentationParams(brightness, contrast, frac, (r0, c0))


def _resize_bilinear(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize with corner alignment."""
    in_h, in_w = pixels.shape
    if (in_h, in_w) == (out_h, out_w):
        return pixels.copy()
    rows = np.linspace(0.0, in_h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    cols = np.linspace(0.0, in_w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return _bilinear(pixels, rr, cc)


def apply_augmentation(patch: ImagePatch, params: AugmentationParams) -> ImagePatch:
    """Crop/resize then contrast (about 0.5) then brightness, clamped to [0, 1].

    Identity parameters return a bit-identical copy (no resampling pass).
    """
    px = patch.pixels
    h, w = px.shape
    ch = max(1, math.floor(h * params.crop_fraction))
    cw = max(1, math.floor(w * params.crop_fraction))
    r0, c0 = params.crop_offset
    if r0 + ch > h or c0 + cw > w:
        raise DomainError(
            f"crop window {ch}x{cw} at offset {params.crop_offset} exceeds {h}x{w} patch"
        )
    if (ch, cw) != (h, w):
        px = _resize_bilinear(px[r0 : r0 + ch, c0 : c0 + cw], h, w)
    elif (r0, c0) != (0, 0):
        raise DomainError("crop_offset must be (0, 0) when crop_fraction keeps the full patch")
    out = (px - 0.5) * params.contrast + 0.5
    out = out * params.brightness
    return ImagePatch(np.clip(out, 0.0, 1.0), patch.meters_per_pixel)


class WorldModel:
    """Deterministic multi-season world over [0, extent]^2, generated from a seed."""

    def __init__(self, seed: int, extent_m: float, num_seasons: int, sigma_season: float = 0.08):
        if num_seasons < 1:
            raise ConfigError(f"num_seasons must be >= 1, got {num_seasons}")
        if extent_m < 100.0:
            raise ConfigError(f"extent_m must be >= 100, got {extent_m}")
        if sigma_season < 0.0:
            raise ConfigError("sigma_season must be non-negative")
        self.seed = int(seed)
        self.extent_m = float(extent_m)
        self.num_seasons = int(num_seasons)
        self.sigma_season = float(sigma_season)
        self._structure_cell = _STRUCTURE_CELL
        self._structure = self._build_structure()
        self._season_tone, self._season_noise = self._build_seasons()

    # ------------------------------------------------------------------ build

    def _grid_shape(self, cell: float) -> int:
        return int(round(self.extent_m / cell)) + 1

    def _build_structure(self) -> np.ndarray:
        n = self._grid_shape(self._structure_cell)
        rng = np.random.default_rng([self.seed, _S_STRUCT])
        field = np.zeros((n, n))
        for sigma_m, weight in zip(_OCTAVE_SIGMA_M, _OCTAVE_WEIGHT):
            white = rng.standard_normal((n, n))
            smooth = gaussian_filter(white, sigma=sigma_m / self._structure_cell, mode="reflect")
            smooth /= max(smooth.std(), 1e-12)
            field += weight * smooth
        lo, hi = field.min(), field.max()
        field = (field - lo) / max(hi - lo, 1e-12)
        trails = self._rasterize_trails(n)
        blend = _TRAIL_BLEND * trails
        field = field * (1.0 - blend) + _TRAIL_LEVEL * blend
        return np.clip(field, 0.0, 1.0)

    def _rasterize_trails(self, n: int) -> np.ndarray:
        """Thin bright paths; all pass through one hub so the network is connected."""
        rng = np.random.default_rng([self.seed, _S_TRAIL])
        ext = self.extent_m
        hub = np.array([ext * rng.uniform(0.4, 0.6), ext * rng.uniform(0.4, 0.6)])
        mask = np.zeros((n, n))
        cell = self._structure_cell
        radius_cells = int(math.ceil(3.0 * _TRAIL_WIDTH_M / cell))
        offs = np.arange(-radius_cells, radius_cells + 1)
        dr, dc = np.meshgrid(offs, offs, indexing="ij")
        stamp_dist2 = (dr * cell) ** 2 + (dc * cell) ** 2
        stamp = np.exp(-stamp_dist2 / (2.0 * _TRAIL_WIDTH_M**2))
        for _ in range(_NUM_TRAILS):
            # Two quadratic Bezier halves meeting at the hub with a shared tangent.
            edge_pts = []
            for _ in range(2):
                side = rng.integers(0, 4)
                along = ext * rng.uniform(0.1, 0.9)
                edge_pts.append(
                    {0: (along, 0.0), 1: (along, ext), 2: (0.0, along), 3: (ext, along)}[side]
                )
            p0 = np.array(edge_pts[0])
            p1 = np.array(edge_pts[1])
            tangent = p1 - p0
            tangent /= max(np.linalg.norm(tangent), 1e-9)
            pull = ext * 0.18
            for a, b in ((p0, hub), (hub, p1)):
                ctrl = hub - tangent * pull if a is p0 else hub + tangent * pull
                seg_len = np.linalg.norm(b - a)
                n_pts = max(8, int(seg_len / _TRAIL_STEP_M))
                t = np.linspace(0.0, 1.0, n_pts)[:, None]
                pts = (1 - t) ** 2 * a + 2 * (1 - t) * t * ctrl + t**2 * b
                for x, y in pts:
                    r = int(round(y / cell))
                    c = int(round(x / cell))
                    r_lo, r_hi = max(0, r - radius_cells), min(n, r + radius_cells + 1)
                    c_lo, c_hi = max(0, c - radius_cells), min(n, c + radius_cells + 1)
                    if r_lo >= r_hi or c_lo >= c_hi:
                        continue
                    sub = stamp[
                        r_lo - (r - radius_cells) : stamp.shape[0] - ((r + radius_cells + 1) - r_hi),
                        c_lo - (c - radius_cells) : stamp.shape[1] - ((c + radius_cells + 1) - c_hi),
                    ]
                    np.maximum(mask[r_lo:r_hi, c_lo:c_hi], sub, out=mask[r_lo:r_hi, c_lo:c_hi])
        return mask

    def _build_seasons(self):
        tones = []
        noises = []
        n = self._grid_shape(_SEASON_NOISE_CELL)
        for s in range(self.num_seasons):
            rng = np.random.default_rng([self.seed, _S_SEASON, s])
            gamma = float(np.exp(rng.uniform(np.log(0.55), np.log(1.8))))
            gain = float(rng.uniform(0.75, 0.95))
            offset = float(rng.uniform(0.0, 1.0 - gain))
            tones.append((gain, gamma, offset))
            white = rng.standard_normal((n, n))
            smooth = gaussian_filter(white, sigma=8.0 / _SEASON_NOISE_CELL, mode="reflect")
            smooth /= max(smooth.std(), 1e-12)
            noises.append(smooth * self.sigma_season)
        return tones, noises

    # --------------------------------------------------------------- sampling

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Boolean mask over points (..., 2): inside [margin, extent - margin]^2."""
        pts = np.asarray(points, dtype=float)
        ok = (pts >= margin) & (pts <= self.extent_m - margin)
        return np.all(ok, axis=-1)

    def _check_season(self, season: int) -> int:
        if not (0 <= int(season) < self.num_seasons):
            raise ConfigError(f"unknown season {season}; world has {self.num_seasons}")
        return int(season)

    def sample_structure(self, points: np.ndarray) -> np.ndarray:
        """Bilinear structure values at world points (..., 2); caller checks bounds."""
        pts = np.asarray(points, dtype=float)
        cols = pts[..., 0] / self._structure_cell
        rows = pts[..., 1] / self._structure_cell
        return _bilinear(self._structure, rows, cols)

    def tone_curve(self, season: int, values: np.ndarray) -> np.ndarray:
        gain, gamma, offset = self._season_tone[self._check_season(season)]
        return gain * np.power(np.clip(values, 0.0, 1.0), gamma) + offset

    def invert_tone(self, season: int, values: np.ndarray) -> np.ndarray:
        """Invert the monotone tone curve (additive seasonal noise is not removable)."""
        gain, gamma, offset = self._season_tone[self._check_season(season)]
        base = np.clip((np.asarray(values, dtype=float) - offset) / gain, 1e-9, 1.0)
        return np.power(base, 1.0 / gamma)

    def sample_appearance(self, points: np.ndarray, season: int) -> np.ndarray:
        """Seasonal appearance at world points: tone(S) + seasonal noise, in [0, 1]."""
        season = self._check_season(season)
        s = self.sample_structure(points)
        pts = np.asarray(points, dtype=float)
        cols = pts[..., 0] / _SEASON_NOISE_CELL
        rows = pts[..., 1] / _SEASON_NOISE_CELL
        noise = _bilinear(self._season_noise[season], rows, cols)
        return np.clip(self.tone_curve(season, s) + noise, 0.0, 1.0)

    def appearance_grid(self, season: int, resolution: int = 256) -> np.ndarray:
        """Full-extent appearance raster (row 0 = north edge), for previews/figures."""
        xs = np.linspace(0.0, self.extent_m, resolution)
        ys = np.linspace(self.extent_m, 0.0, resolution)
        xx, yy = np.meshgrid(xs, ys)
        return self.sample_appearance(np.stack([xx, yy], axis=-1), season)

    def spec_dict(self) -> dict:
        return {
            "seed": self.seed,
            "extent_m": self.extent_m,
            "num_seasons": self.num_seasons,
            "sigma_season": self.sigma_season,
        }


def build_world(seed: int, extent_m: float, num_seasons: int, sigma_season: float = 0.08) -> WorldModel:
    """Construct the deterministic world for a seed.  See :class:`WorldModel`."""
    return WorldModel(seed, extent_m, num_seasons, sigma_season)


# ------------------------------------------------------------------ renderers


def _patch_offsets(side_m: float, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel forward (v) and rightward (u) offsets for a heading-up patch."""
    mpp = side_m / resolution
    idx = np.arange(resolution)
    u = (idx + 0.5) * mpp - side_m / 2.0  # columns, + to the right of heading
    v = side_m / 2.0 - (idx + 0.5) * mpp  # rows, + ahead of the pose (row 0 = far)
    return v, u


def _patch_points(xs, ys, thetas, side_m: float, resolution: int) -> np.ndarray:
    """World sample points, shape (M, R, R, 2), for heading-up square patches."""
    v, u = _patch_offsets(side_m, resolution)
    cos_t = np.cos(thetas)[:, None, None]
    sin_t = np.sin(thetas)[:, None, None]
    vv = v[None, :, None]
    uu = u[None, None, :]
    # forward axis (cos, sin); rightward axis (sin, -cos)
    px = xs[:, None, None] + vv * cos_t + uu * sin_t
    py = ys[:, None, None] + vv * sin_t - uu * cos_t
    return np.stack([px, py], axis=-1)


def render_aerial_patch(
    world: WorldModel, pose: Pose, season: int, side_m: float = 20.0, resolution: int = 32
) -> ImagePatch:
    """Top-down square patch centered on the pose, rotated heading-up.

    Row 0 looks ahead of the pose; columns increase to its right.  Pixel
    centers sit at half-pixel offsets, so ``meters_per_pixel = side_m /
    resolution``.  Raises ``OutOfBoundsError`` if any sample point leaves the
    world; footprints are never clamped.
    """
    if resolution < 4:
        raise ConfigError(f"patch resolution must be >= 4, got {resolution}")
    pts = _patch_points(
        np.array([pose.x]), np.array([pose.y]), np.array([pose.theta]), side_m, resolution
    )[0]
    if not bool(np.all(world.contains(pts))):
        raise OutOfBoundsError(
            f"patch footprint at ({pose.x:.1f}, {pose.y:.1f}) theta={pose.theta:.2f} "
            f"leaves the [0, {world.extent_m:.0f}]^2 world"
        )
    return ImagePatch(world.sample_appearance(pts, season), side_m / resolution)


def render_aerial_patches(
    world: WorldModel,
    xs: np.ndarray,
    ys: np.ndarray,
    thetas: np.ndarray,
    season: int,
    side_m: float = 20.0,
    resolution: int = 32,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched heading-up patches for M poses.

    Returns ``(pixels, valid)`` where pixels is (M, R, R) and ``valid`` marks
    poses whose footprint stayed inside the world; invalid rows are zeroed
    instead of raising, so filter-style callers can score them as mismatches.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    pts = _patch_points(xs, ys, thetas, side_m, resolution)
    valid = np.all(world.contains(pts).reshape(xs.size, -1), axis=1)
    safe = np.clip(pts, 0.0, world.extent_m)
    pixels = world.sample_appearance(safe, season)
    pixels[~valid] = 0.0
    return pixels, valid


_GROUND_NEAR_STANDOFF = 0.05  # closest sampled row, as a fraction of footprint length
_GROUND_NEAR_WIDTH = 0.0  # near-edge width fraction: zero gives a pinhole-style wedge


def render_ground_clip(
    world: WorldModel,
    poses: list[StampedPose],
    season: int,
    noise_sigma: float = 0.02,
    rng_seed: int | tuple[int, ...] = 0,
    resolution: int = 32,
    footprint_m: float = 20.0,
    fov_half_angle_deg: float = 30.0,
) -> GroundClip:
    """Forward-view frames: a trapezoidal ground footprint resampled to a square.

    Each frame samples the seasonal field over the trapezoid ahead of its
    pose — rows run far (row 0) to near, row width opens from the near-edge
    width at the configured half-angle — then adds clamped Gaussian pixel
    noise.  Deterministic for a given ``rng_seed``; ``noise_sigma=0`` renders
    are bit-identical pure functions of (world, poses, season).
    """
    if len(poses) == 0:
        raise ShapeError("render_ground_clip requires at least one pose")
    if not (0.0 < fov_half_angle_deg < 90.0):
        raise ConfigError(f"fov_half_angle_deg must be in (0, 90), got {fov_half_angle_deg}")
    if noise_sigma < 0.0:
        raise ConfigError("noise_sigma must be non-negative")
    h = w = int(resolution)
    near = _GROUND_NEAR_STANDOFF * footprint_m
    rows = np.arange(h)
    v = near + (footprint_m - near) * (h - 1 - rows) / (h - 1)  # (H,) forward distance
    half_width = 0.5 * _GROUND_NEAR_WIDTH * footprint_m + (v - near) * math.tan(
        math.radians(fov_half_angle_deg)
    )
    cols = (np.arange(w) + 0.5) / w  # (W,) in (0, 1)
    u = (2.0 * cols[None, :] - 1.0) * half_width[:, None]  # (H, W) rightward offset
    vv = np.broadcast_to(v[:, None], (h, w))
    seed_key = [int(k) for k in np.atleast_1d(rng_seed)]
    rng = np.random.default_rng([_S_GROUND, *seed_key])
    frames = []
    for sp in poses:
        cos_t, sin_t = math.cos(sp.theta), math.sin(sp.theta)
        px = sp.x + vv * cos_t + u * sin_t
        py = sp.y + vv * sin_t - u * cos_t
        pts = np.stack([px, py], axis=-1)
        if not bool(np.all(world.contains(pts))):
            raise OutOfBoundsError(
                f"ground footprint at ({sp.x:.1f}, {sp.y:.1f}) leaves the world extent"
            )
        pixels = world.sample_appearance(pts, season)
        if noise_sigma > 0.0:
            pixels = pixels + rng.normal(0.0, noise_sigma, size=pixels.shape)
        frames.append(ImagePatch(np.clip(pixels, 0.0, 1.0), footprint_m / resolution))
    return GroundClip(frames, list(poses))


# ----------------------------------------------------------------- trajectory


def generate_trajectory(
    world: WorldModel,
    seed: int,
    length_m: float = 500.0,
    speed_range: tuple[float, float] = (1.5, 2.5),
    dt: float = 0.5,
    margin_m: float = 40.0,
) -> Trajectory:
    """Smooth bounded-curvature path of the requested arc length inside the world.

    Speed performs a clipped random walk within ``speed_range`` (a degenerate
    range gives constant speed); curvature is a smooth random walk capped at
    0.15 rad/m, with a steering term that bends the path back toward the world
    center whenever it nears the margin.  Stops at the first step where the
    cumulative arc reaches ``length_m``; ``v_max * dt <= 0.01 * length_m`` is
    required so the overshoot stays within 1%.
    """
    v_min, v_max = float(speed_range[0]), float(speed_range[1])
    if not (0.0 < v_min <= v_max):
        raise ConfigError(f"speed_range must satisfy 0 < v_min <= v_max, got {speed_range}")
    if dt <= 0.0:
        raise ConfigError("dt must be positive")
    if length_m <= 0.0:
        raise ConfigError("length_m must be positive")
    if v_max * dt > 0.01 * length_m:
        raise ConfigError(
            f"dt={dt} too coarse: one step may overshoot the 1% arc-length tolerance "
            f"(v_max*dt={v_max * dt:.3f} > {0.01 * length_m:.3f})"
        )
    if margin_m < 0.0 or 2.0 * margin_m >= world.extent_m:
        raise ConfigError(f"margin_m={margin_m} leaves no interior in extent {world.extent_m}")

    rng = np.random.default_rng([world.seed, _S_TRAJ, int(seed)])
    ext = world.extent_m
    center = np.array([ext / 2.0, ext / 2.0])
    lo = margin_m + 0.1 * (ext / 2.0 - margin_m)
    hi = ext - lo
    x, y = rng.uniform(lo, hi, size=2)
    theta = float(rng.uniform(-np.pi, np.pi))
    v = 0.5 * (v_min + v_max)
    kappa = 0.0
    kappa_max = 0.15
    steer_zone = max(10.0, 0.25 * (ext / 2.0 - margin_m))

    poses = [StampedPose(0.0, Pose(x, y, theta))]
    arc = 0.0
    t = 0.0
    step = 0
    max_steps = int(math.ceil(length_m / (v_min * dt))) + 10
    while arc < length_m:
        step += 1
        if step > max_steps:
            raise DomainError("trajectory generation failed to reach the requested length")
        v = float(np.clip(v + 0.3 * math.sqrt(dt) * rng.standard_normal(), v_min, v_max))
        kappa = float(np.clip(0.95 * kappa + 0.03 * rng.standard_normal(), -kappa_max, kappa_max))
        wall_dist = min(x, y, ext - x, ext - y) - margin_m
        kappa_eff = kappa
        if wall_dist < steer_zone:
            bearing = math.atan2(center[1] - y, center[0] - x)
            urgency = np.clip(1.0 - wall_dist / steer_zone, 0.0, 1.0)
            steer = np.clip(ang_diff(bearing, theta), -1.0, 1.0)
            kappa_eff = (1.0 - urgency) * kappa + urgency * 0.4 * steer
        ds = v * dt
        theta = wrap_angle(theta + kappa_eff * ds)
        x += ds * math.cos(theta)
        y += ds * math.sin(theta)
        arc += ds
        t += dt
        if not (margin_m <= x <= ext - margin_m and margin_m <= y <= ext - margin_m):
            raise DomainError(
                f"trajectory left the margin at step {step}; retune margin/curvature"
            )
        poses.append(StampedPose(t, Pose(x, y, theta)))
    return Trajectory(poses)
