"""Monte Carlo localization with an entropy-adaptive measurement temperature.

The belief is a weighted particle set over (x, y, theta).  Each cycle:
predict through the odometry motion model, estimate the spatial entropy of
the *predicted* belief by kernel density estimation on a grid, map it to a
measurement temperature lambda_t = lambda_base * exp(-gamma * H_t), reweight
particles by exp(lambda_t * s) with s the [0, 1] embedding similarity of each
particle's aerial patch against the aggregated clip embedding, then resample
systematically when the effective sample size degenerates.

A spread-out belief (high entropy) therefore tempers the measurement so no
single glimpse teleports the filter; a confident belief trusts measurements
more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregationConfig, QualityMlpParams, aggregate_clip
from .core import Pose, weighted_circular_mean, wrap_angle
from .encoder import EncoderParams, encode_batch
from .errors import ConfigError, DomainError, OutOfBoundsError, ShapeError
from .world import GroundClip, WorldModel, render_aerial_patch, render_aerial_patches

__all__ = [
    "MotionNoiseConfig",
    "FilterConfig",
    "Control",
    "Particle",
    "BeliefState",
    "init_particles",
    "predict",
    "kde_bandwidth",
    "kde_density_grid",
    "kde_spatial_entropy",
    "adaptive_lambda",
    "measurement_update",
    "systematic_resample_indices",
    "resample",
    "estimate_pose",
    "step",
]


@dataclass
class MotionNoiseConfig:
    """Odometry noise: scale terms grow with motion magnitude, floors keep
    a minimum jitter so a stationary vehicle still diffuses slightly."""

    sigma_trans_per_m: float = 0.1
    trans_floor_m: float = 0.02
    sigma_rot_per_rad: float = 0.1
    rot_floor_rad: float = 0.005

    def __post_init__(self):
        for name in ("sigma_trans_per_m", "trans_floor_m", "sigma_rot_per_rad", "rot_floor_rad"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"MotionNoiseConfig.{name} must be non-negative")


@dataclass
class FilterConfig:
    num_particles: int = 300
    init_sigma_xy: float = 3.0
    init_sigma_theta: float = 0.15
    motion_noise: MotionNoiseConfig = field(default_factory=MotionNoiseConfig)
    lambda_base: float = 20.0
    gamma: float = 0.05
    kde_fixed_bandwidth: float | None = None  # None -> Scott's rule on the weighted scatter
    kde_bandwidth_floor: float = 0.5
    kde_grid_resolution: float = 1.0
    kde_pad_factor: float = 3.0  # grid extends this many bandwidths beyond the particles
    kde_max_cells: int = 40000
    resample_threshold: float = 0.5  # resample when ESS < threshold * M
    patch_side_m: float = 20.0
    patch_resolution: int = 32

    def __post_init__(self):
        if int(self.num_particles) < 2:
            raise ConfigError(f"num_particles must be >= 2, got {self.num_particles}")
        self.num_particles = int(self.num_particles)
        if self.init_sigma_xy < 0.0 or self.init_sigma_theta < 0.0:
            raise ConfigError("init sigmas must be non-negative")
        if not (self.lambda_base > 0.0):
            raise ConfigError("lambda_base must be positive")
        if self.gamma < 0.0:
            raise ConfigError("gamma must be non-negative")
        if self.kde_fixed_bandwidth is not None and self.kde_fixed_bandwidth <= 0.0:
            raise ConfigError("kde_fixed_bandwidth must be positive when set")
        if self.kde_bandwidth_floor <= 0.0:
            raise ConfigError("kde_bandwidth_floor must be positive")
        if self.kde_grid_resolution <= 0.0:
            raise ConfigError("kde_grid_resolution must be positive")
        if self.kde_pad_factor <= 0.0:
            raise ConfigError("kde_pad_factor must be positive")
        if not (0.0 < self.resample_threshold <= 1.0):
            raise ConfigError("resample_threshold must be in (0, 1]")
        if isinstance(self.motion_noise, dict):
            self.motion_noise = MotionNoiseConfig(**self.motion_noise)


@dataclass(frozen=True)
class Control:
    """Odometry increment: forward distance (m) and heading change (rad)."""

    delta_d: float
    delta_theta: float


@dataclass(frozen=True)
class Particle:
    pose: Pose
    weight: float


@dataclass
class BeliefState:
    """Particle cloud as arrays: poses (M, 3) and normalized weights (M,)."""

    poses: np.ndarray
    weights: np.ndarray
    last_theta_hat: float | None = None

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.poses.ndim != 2 or self.poses.shape[1] != 3:
            raise ShapeError(f"poses must be (M, 3), got {self.poses.shape}")
        m = self.poses.shape[0]
        if m < 2:
            raise ConfigError("belief needs at least 2 particles")
        if self.weights.shape != (m,):
            raise ShapeError(f"weights must be ({m},), got {self.weights.shape}")
        if np.any(self.weights < 0.0) or not np.all(np.isfinite(self.weights)):
            raise DomainError("weights must be finite and non-negative")
        total = self.weights.sum()
        if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-6):
            raise DomainError(f"weights must sum to 1 within 1e-6, got {total!r}")
        self.weights = self.weights / total
        self.poses[:, 2] = wrap_angle(self.poses[:, 2])

    @property
    def num_particles(self) -> int:
        return self.poses.shape[0]

    def ess(self) -> float:
        """Effective sample size 1 / sum(w^2); equals M for uniform weights."""
        return float(1.0 / np.sum(self.weights**2))

    @property
    def particles(self) -> list[Particle]:
        return [
            Particle(Pose(x, y, th), float(w))
            for (x, y, th), w in zip(self.poses, self.weights)
        ]


def init_particles(prior: Pose, cfg: FilterConfig, rng: np.random.Generator) -> BeliefState:
    """Gaussian cloud around the prior pose with uniform weights."""
    m = cfg.num_particles
    poses = np.empty((m, 3))
    poses[:, 0] = prior.x + rng.normal(0.0, cfg.init_sigma_xy, m)
    poses[:, 1] = prior.y + rng.normal(0.0, cfg.init_sigma_xy, m)
    poses[:, 2] = wrap_angle(prior.theta + rng.normal(0.0, cfg.init_sigma_theta, m))
    return BeliefState(poses, np.full(m, 1.0 / m))


def predict(belief: BeliefState, control: Control, cfg: FilterConfig, rng: np.random.Generator) -> BeliefState:
    """Motion update: rotate then translate along the *new* heading.

    theta' = wrap(theta + dtheta + eps_rot); (x', y') advance by
    (dd + eps_trans) along theta'.  Noise sigmas scale with |dd| and |dtheta|
    plus configured floors.  Weights are untouched.
    """
    noise = cfg.motion_noise
    m = belief.num_particles
    sig_rot = noise.sigma_rot_per_rad * abs(control.delta_theta) + noise.rot_floor_rad
    sig_trans = noise.sigma_trans_per_m * abs(control.delta_d) + noise.trans_floor_m
    eps_rot = rng.normal(0.0, sig_rot, m) if sig_rot > 0.0 else np.zeros(m)
    eps_trans = rng.normal(0.0, sig_trans, m) if sig_trans > 0.0 else np.zeros(m)
    theta = wrap_angle(belief.poses[:, 2] + control.delta_theta + eps_rot)
    d_eff = control.delta_d + eps_trans
    poses = np.empty_like(belief.poses)
    poses[:, 0] = belief.poses[:, 0] + d_eff * np.cos(theta)
    poses[:, 1] = belief.poses[:, 1] + d_eff * np.sin(theta)
    poses[:, 2] = theta
    return BeliefState(poses, belief.weights.copy(), belief.last_theta_hat)


# ------------------------------------------------------------------- entropy


def kde_bandwidth(belief: BeliefState, cfg: FilterConfig) -> float:
    """Scott's-rule bandwidth on the weighted 2-D scatter, floored.

    h = sqrt((var_x + var_y) / 2) * n_eff^(-1/6) with n_eff = 1 / sum(w^2);
    a fixed bandwidth in the config short-circuits the rule.
    """
    if cfg.kde_fixed_bandwidth is not None:
        return float(cfg.kde_fixed_bandwidth)
    w = belief.weights
    xy = belief.poses[:, :2]
    mean = w @ xy
    var = w @ (xy - mean) ** 2
    sigma = math.sqrt(max(0.5 * float(var.sum()), 0.0))
    n_eff = belief.ess()
    h = sigma * n_eff ** (-1.0 / 6.0)
    return float(max(h, cfg.kde_bandwidth_floor))


def kde_density_grid(belief: BeliefState, cfg: FilterConfig) -> tuple[np.ndarray, dict]:
    """Weighted Gaussian-KDE density on a regular grid over the particle bbox.

    The grid covers the particle bounding box padded by ``kde_pad_factor``
    bandwidths at ``kde_grid_resolution`` meters per cell (coarsened if the
    cell count would exceed ``kde_max_cells``).  Returns (density, meta) where
    density[iy, ix] is the kernel density at the cell center (y increases with
    iy) and meta records x0, y0, cell, and h.
    """
    h = kde_bandwidth(belief, cfg)
    xs = belief.poses[:, 0]
    ys = belief.poses[:, 1]
    w = belief.weights
    pad = cfg.kde_pad_factor * h
    x0, x1 = xs.min() - pad, xs.max() + pad
    y0, y1 = ys.min() - pad, ys.max() + pad
    cell = cfg.kde_grid_resolution
    nx = max(2, int(math.ceil((x1 - x0) / cell)))
    ny = max(2, int(math.ceil((y1 - y0) / cell)))
    if nx * ny > cfg.kde_max_cells:
        scale = math.sqrt(nx * ny / cfg.kde_max_cells)
        cell = cell * scale
        nx = max(2, int(math.ceil((x1 - x0) / cell)))
        ny = max(2, int(math.ceil((y1 - y0) / cell)))
    cx = x0 + (np.arange(nx) + 0.5) * cell
    cy = y0 + (np.arange(ny) + 0.5) * cell
    inv = 1.0 / (2.0 * h * h)
    gx = np.exp(-((cx[:, None] - xs[None, :]) ** 2) * inv)  # (nx, M)
    gy = np.exp(-((cy[:, None] - ys[None, :]) ** 2) * inv)  # (ny, M)
    density = (gy * w[None, :]) @ gx.T / (2.0 * math.pi * h * h)  # (ny, nx)
    return density, {"x0": x0, "y0": y0, "cell": cell, "nx": nx, "ny": ny, "h": h}


def kde_spatial_entropy(belief: BeliefState, cfg: FilterConfig) -> float:
    """Discrete Shannon entropy (nats) of the normalized KDE grid mass.

    Always >= 0 (discrete distribution), so the adaptive temperature below
    stays within (0, lambda_base].
    """
    density, _ = kde_density_grid(belief, cfg)
    total = density.sum()
    if total <= 0.0 or not np.isfinite(total):
        raise DomainError("KDE grid mass vanished; cannot normalize")
    q = density / total
    nz = q[q > 0.0]
    return float(-np.sum(nz * np.log(nz)))


def adaptive_lambda(entropy: float, cfg: FilterConfig) -> float:
    """Measurement temperature lambda_t = lambda_base * exp(-gamma * H_t)."""
    if not np.isfinite(entropy) or entropy < 0.0:
        raise DomainError(f"entropy must be finite and non-negative, got {entropy!r}")
    return float(cfg.lambda_base * math.exp(-cfg.gamma * entropy))


# --------------------------------------------------------------- measurement


def _reference_aerial_embedding(
    belief: BeliefState,
    world: WorldModel,
    season: int,
    encoder: EncoderParams,
    cfg: FilterConfig,
) -> np.ndarray | None:
    """Embedding of the patch at the predicted-belief mean pose (None if out of bounds)."""
    try:
        ref = estimate_pose(belief, fallback_theta=belief.last_theta_hat)
    except DomainError:
        return None
    try:
        patch = render_aerial_patch(world, ref, season, cfg.patch_side_m, cfg.patch_resolution)
    except OutOfBoundsError:
        return None
    return encode_batch(encoder, patch.pixels)[0]


def measurement_update(
    belief: BeliefState,
    clip: GroundClip,
    world: WorldModel,
    season: int,
    encoder: EncoderParams,
    mlp: QualityMlpParams,
    agg_cfg: AggregationConfig,
    cfg: FilterConfig,
) -> tuple[BeliefState, dict]:
    """Reweight particles by the aggregated clip's similarity to their patches.

    Entropy and temperature are computed from the incoming (pre-update)
    belief.  The clip is aggregated once; each particle's aerial patch is
    rendered at its pose and scored s = (1 + cos) / 2 in [0, 1], with
    out-of-bounds particles scoring 0.  New weights are w * exp(lambda_t * s),
    renormalized.  Weight ordering follows similarity ordering under a uniform
    prior because exp is monotone.
    """
    entropy = kde_spatial_entropy(belief, cfg)
    lam = adaptive_lambda(entropy, cfg)

    frame_embs = encode_batch(encoder, np.stack([f.pixels for f in clip.frames]))
    ref_emb = _reference_aerial_embedding(belief, world, season, encoder, cfg)
    if ref_emb is not None:
        agg = aggregate_clip(frame_embs, ref_emb, mlp, agg_cfg)
        e_agg = agg.embedding
        agg_weights = agg.weights
    else:
        # No usable reference patch: fall back to uniform attention.
        e_agg = frame_embs.mean(axis=0)
        agg_weights = np.full(len(clip.frames), 1.0 / len(clip.frames))
    norm = np.linalg.norm(e_agg)
    if norm < 1e-12:
        raise DomainError("aggregated clip embedding has zero norm")
    e_hat = e_agg / norm

    pixels, valid = render_aerial_patches(
        world,
        belief.poses[:, 0],
        belief.poses[:, 1],
        belief.poses[:, 2],
        season,
        cfg.patch_side_m,
        cfg.patch_resolution,
    )
    sims = np.zeros(belief.num_particles)
    if np.any(valid):
        embs = encode_batch(encoder, pixels[valid])
        sims[valid] = np.clip((1.0 + embs @ e_hat) / 2.0, 0.0, 1.0)

    new_w = belief.weights * np.exp(lam * sims)
    total = new_w.sum()
    if total <= 0.0 or not np.isfinite(total):
        raise DomainError("measurement update produced a degenerate weight vector")
    updated = BeliefState(belief.poses.copy(), new_w / total, belief.last_theta_hat)
    diag = {
        "entropy": entropy,
        "lambda": lam,
        "ess": updated.ess(),
        "oob": int(np.sum(~valid)),
        "agg_weights": [float(v) for v in agg_weights],
        "sim_mean": float(sims.mean()),
        "sim_max": float(sims.max()),
    }
    return updated, diag


# ----------------------------------------------------------------- resampling


def systematic_resample_indices(weights: np.ndarray, m: int, u: float) -> np.ndarray:
    """Low-variance systematic resampling: one uniform draw strides the CDF.

    Positions are u + i/m for i = 0..m-1 against the cumulative weights;
    expected copy counts equal m * w_i exactly up to the single draw.
    """
    w = np.asarray(weights, dtype=float)
    if not (0.0 <= u < 1.0 / m):
        raise DomainError(f"u must lie in [0, 1/m), got {u!r}")
    positions = u + np.arange(m) / m
    cumulative = np.cumsum(w)
    cumulative[-1] = max(cumulative[-1], 1.0)  # guard the final edge against rounding
    return np.minimum(np.searchsorted(cumulative, positions, side="left"), w.size - 1)


def resample(belief: BeliefState, rng: np.random.Generator) -> BeliefState:
    """Systematic resampling back to uniform weights (M preserved)."""
    m = belief.num_particles
    u = float(rng.uniform(0.0, 1.0 / m))
    idx = systematic_resample_indices(belief.weights, m, u)
    return BeliefState(belief.poses[idx].copy(), np.full(m, 1.0 / m), belief.last_theta_hat)


def estimate_pose(belief: BeliefState, fallback_theta: float | None = None) -> Pose:
    """Weighted mean position with a weighted *circular* mean heading.

    When the heading resultant degenerates (opposing headings cancel), the
    previous estimate's heading is reused if provided, else the error
    propagates.
    """
    x = float(belief.weights @ belief.poses[:, 0])
    y = float(belief.weights @ belief.poses[:, 1])
    try:
        theta = weighted_circular_mean(belief.poses[:, 2], belief.weights)
    except DomainError:
        if fallback_theta is None:
            raise
        theta = float(fallback_theta)
    return Pose(x, y, theta)


def step(
    belief: BeliefState,
    control: Control,
    clip: GroundClip | None,
    world: WorldModel,
    season: int,
    encoder: EncoderParams,
    mlp: QualityMlpParams,
    agg_cfg: AggregationConfig,
    cfg: FilterConfig,
    rng: np.random.Generator,
) -> tuple[BeliefState, Pose, dict]:
    """One filter cycle: predict, optionally measure, resample on ESS collapse.

    Without a clip this is a pure prediction step (weights unchanged).
    Returns (belief, estimate, diagnostics).
    """
    belief = predict(belief, control, cfg, rng)
    diag: dict = {"entropy": None, "lambda": None, "oob": 0, "agg_weights": None, "resampled": False}
    if clip is not None:
        belief, mdiag = measurement_update(belief, clip, world, season, encoder, mlp, agg_cfg, cfg)
        diag.update(mdiag)
        if belief.ess() < cfg.resample_threshold * belief.num_particles:
            belief = resample(belief, rng)
            diag["resampled"] = True
    diag["ess"] = belief.ess()
    estimate = estimate_pose(belief, fallback_theta=belief.last_theta_hat)
    belief.last_theta_hat = estimate.theta
    return belief, estimate, diag
