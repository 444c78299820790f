"""Hard triplet mining across seasons for ground-to-aerial metric learning.

Anchors are ground clips taken along a trajectory.  For each anchor, the
positive is the *hardest* same-pose aerial patch across the candidate seasons
(largest embedding distance), and negatives are drawn from poses that are
provably wrong — displaced by 5-40 m and misoriented by more than a threshold
— keeping the k nearest in embedding space.  One photometric augmentation is
shared by the positive and all its negatives; anchor frames share a separate
clip-level augmentation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Pose, StampedPose, Trajectory, ang_diff, wrap_angle
from .encoder import EncoderParams, encode_batch
from .errors import ConfigError, DomainError, ShapeError
from .frame_sampler import SamplerConfig, select_clip_frames
from .world import (
    AugmentationParams,
    GroundClip,
    ImagePatch,
    RenderConfig,
    WorldModel,
    apply_augmentation,
    render_aerial_patch,
    render_ground_clip,
    sample_augmentation_params,
)

__all__ = [
    "MiningConfig",
    "Triplet",
    "select_hard_positive",
    "select_hard_negatives",
    "TripletMiner",
    "build_triplet_batch",
]

log = logging.getLogger(__name__)

# RNG stream tags (composed with the miner's rng_seed).
_S_POOL, _S_EPOCH, _S_AUG, _S_CLIP, _S_SPLIT = 43, 42, 44, 46, 45
_MAX_POSE_DRAWS = 200


@dataclass
class MiningConfig:
    d_min: float = 5.0  # negative displacement band, meters
    d_max: float = 40.0
    delta_theta_deg: float = 30.0  # negatives must be misoriented by more than this
    neg_heading_band_deg: float = 30.0  # sample |heading offset| within this band above the minimum
    num_negatives: int = 4  # k hardest negatives kept per anchor
    pool_size: int = 32  # candidate negatives sampled per anchor
    brightness_range: tuple[float, float] = (0.9, 1.1)
    contrast_range: tuple[float, float] = (0.9, 1.1)
    crop_fraction_range: tuple[float, float] = (0.85, 1.0)

    def __post_init__(self):
        if not (0.0 < self.d_min <= self.d_max):
            raise ConfigError(f"require 0 < d_min <= d_max, got [{self.d_min}, {self.d_max}]")
        if not (0.0 < self.delta_theta_deg < 180.0):
            raise ConfigError(
                f"delta_theta_deg must be in (0, 180) so negatives exist, got {self.delta_theta_deg}"
            )
        if self.neg_heading_band_deg <= 0.0:
            raise ConfigError(
                f"neg_heading_band_deg must be positive, got {self.neg_heading_band_deg}"
            )
        if int(self.num_negatives) < 1 or int(self.pool_size) < int(self.num_negatives):
            raise ConfigError("need pool_size >= num_negatives >= 1")
        self.num_negatives = int(self.num_negatives)
        self.pool_size = int(self.pool_size)
        for name in ("brightness_range", "contrast_range", "crop_fraction_range"):
            pair = tuple(float(v) for v in getattr(self, name))
            if len(pair) != 2 or not pair[0] <= pair[1]:
                raise ConfigError(f"MiningConfig.{name} must be an ordered (lo, hi) pair, got {pair}")
            setattr(self, name, pair)


@dataclass
class Triplet:
    """One training example: anchor clip, hardest positive, hard negatives.

    Patches are stored post-augmentation.  Poses are the true render poses so
    constraints can be re-verified from the stored data alone.
    """

    anchor_clip: GroundClip
    anchor_pose: Pose
    positive: ImagePatch
    season: int  # season of the positive AND of every negative
    negatives: list[ImagePatch]
    negative_poses: list[Pose]
    augmentation: AugmentationParams
    clip_augmentation: AugmentationParams
    corrupted_frames: tuple[int, ...] = ()
    anchor_index: int = -1

    def __post_init__(self):
        if len(self.negatives) != len(self.negative_poses):
            raise ShapeError("negatives and negative_poses must align")


def select_hard_positive(anchor_emb: np.ndarray, candidate_embs: np.ndarray, season_ids) -> int:
    """Index of the candidate farthest from the anchor in embedding space.

    Exact distance ties resolve to the lowest season id, so the choice is
    reproducible regardless of candidate ordering.
    """
    a = np.asarray(anchor_emb, dtype=float)
    c = np.atleast_2d(np.asarray(candidate_embs, dtype=float))
    seasons = np.asarray(season_ids)
    if c.shape[0] == 0:
        raise ShapeError("need at least one positive candidate")
    if c.shape[0] != seasons.shape[0] or c.shape[1] != a.shape[0]:
        raise ShapeError(f"candidate shapes mismatch: {c.shape} vs {seasons.shape} vs {a.shape}")
    dists = np.linalg.norm(c - a, axis=1)
    order = np.lexsort((seasons, -dists))  # primary: largest distance; tie: lowest season
    return int(order[0])


def select_hard_negatives(
    anchor_emb: np.ndarray,
    negative_embs: np.ndarray,
    negative_poses: list[Pose],
    anchor_pose: Pose,
    cfg: MiningConfig,
) -> list[int]:
    """Indices of the k nearest-in-embedding negatives that satisfy both constraints.

    A pool entry survives only if its displacement from the anchor lies in
    [d_min, d_max] AND its heading differs by strictly more than
    delta_theta_deg.  Among survivors the ``num_negatives`` smallest embedding
    distances win (ties to the lower index).  Zero survivors is not an error:
    an empty list is returned and a warning logged.
    """
    a = np.asarray(anchor_emb, dtype=float)
    e = np.atleast_2d(np.asarray(negative_embs, dtype=float))
    if e.shape[0] != len(negative_poses):
        raise ShapeError(f"{e.shape[0]} embeddings vs {len(negative_poses)} poses")
    xy = np.array([[p.x, p.y] for p in negative_poses])
    d = np.hypot(xy[:, 0] - anchor_pose.x, xy[:, 1] - anchor_pose.y)
    dth = np.abs(ang_diff([p.theta for p in negative_poses], anchor_pose.theta))
    ok = (d >= cfg.d_min) & (d <= cfg.d_max) & (dth > math.radians(cfg.delta_theta_deg))
    survivors = np.nonzero(ok)[0]
    if survivors.size == 0:
        log.warning("no negatives satisfied the displacement/orientation constraints")
        return []
    dists = np.linalg.norm(e[survivors] - a, axis=1)
    order = np.argsort(dists, kind="stable")  # stable: equal distances keep pool order
    return [int(survivors[i]) for i in order[: cfg.num_negatives]]


class TripletMiner:
    """Renders-and-caches anchor material so per-epoch re-mining is cheap.

    Pose draws, pool placement, and clip pixel noise are keyed only by
    (rng_seed, anchor index), so they are stable across epochs and independent
    of batch composition; augmentation and corruption are keyed by
    (rng_seed, draw_key, anchor index) and refresh every epoch.
    """

    def __init__(
        self,
        world: WorldModel,
        trajectory: Trajectory,
        rng_seed: int,
        seasons: list[int] | None = None,
        ground_season: int = 0,
        mining_cfg: MiningConfig | None = None,
        sampler_cfg: SamplerConfig | None = None,
        render_cfg: RenderConfig | None = None,
        clip_mode: bool = False,
        anchor_pool_size: int = 96,
        val_fraction: float = 0.25,
        corrupt_prob: float = 0.0,
        corrupt_sigma: float = 0.5,
    ):
        self.world = world
        self.trajectory = trajectory
        self.rng_seed = int(rng_seed)
        self.seasons = sorted(seasons) if seasons is not None else list(range(world.num_seasons))
        for s in self.seasons:
            if not (0 <= s < world.num_seasons):
                raise ConfigError(f"season {s} outside world's {world.num_seasons} seasons")
        self.ground_season = int(ground_season)
        self.cfg = mining_cfg or MiningConfig()
        self.sampler_cfg = sampler_cfg or SamplerConfig()
        self.render_cfg = render_cfg or RenderConfig()
        self.clip_mode = bool(clip_mode)
        self.corrupt_prob = float(corrupt_prob)
        self.corrupt_sigma = float(corrupt_sigma)

        half_diag = self.render_cfg.patch_side_m * math.sqrt(0.5)
        ground_reach = self.render_cfg.patch_side_m  # forward footprint of ground frames
        margin = max(half_diag, ground_reach) + 1.0
        xy = trajectory.positions()
        inside = (
            (xy[:, 0] >= margin)
            & (xy[:, 0] <= world.extent_m - margin)
            & (xy[:, 1] >= margin)
            & (xy[:, 1] <= world.extent_m - margin)
        )
        universe = np.nonzero(inside)[0]
        if universe.size == 0:
            raise DomainError("no trajectory pose can anchor a triplet inside the world margin")
        rng = np.random.default_rng([self.rng_seed, _S_SPLIT])
        take = min(int(anchor_pool_size), universe.size)
        chosen = np.sort(rng.choice(universe, size=take, replace=False))
        n_val = max(1, int(round(val_fraction * take))) if take > 1 else 0
        shuffled = rng.permutation(chosen)
        self.val_ids = np.sort(shuffled[:n_val])
        self.train_ids = np.sort(shuffled[n_val:])
        self._cache: dict[int, dict] = {}

    # ------------------------------------------------------------- anchor data

    def _clip_pose_indices(self, anchor_id: int) -> list[int]:
        if not self.clip_mode:
            return [anchor_id]
        t = self.trajectory.times()[: anchor_id + 1]
        xy = self.trajectory.positions()[: anchor_id + 1]
        return select_clip_frames(t, xy, t, float(t[-1]), self.sampler_cfg)

    def _ensure_anchor(self, anchor_id: int) -> dict:
        data = self._cache.get(anchor_id)
        if data is not None:
            return data
        rc = self.render_cfg
        sp = self.trajectory[int(anchor_id)]
        clip_ids = self._clip_pose_indices(int(anchor_id))
        clip = render_ground_clip(
            self.world,
            [self.trajectory[i] for i in clip_ids],
            self.ground_season,
            noise_sigma=rc.ground_noise_sigma,
            rng_seed=(self.rng_seed, _S_CLIP, int(anchor_id)),
            resolution=rc.resolution,
            footprint_m=rc.patch_side_m,
            fov_half_angle_deg=rc.fov_half_angle_deg,
        )
        cand_pixels = np.stack(
            [
                render_aerial_patch(self.world, sp.pose, s, rc.patch_side_m, rc.resolution).pixels
                for s in self.seasons
            ]
        )
        neg_poses = self._draw_negative_poses(int(anchor_id), sp.pose)
        data = {
            "pose": sp,
            "clip_raw": np.stack([f.pixels for f in clip.frames]),
            "clip_poses": clip.frame_poses,
            "cand_pixels": cand_pixels,
            "neg_poses": neg_poses,
            "neg_pixels": {},
        }
        self._cache[int(anchor_id)] = data
        return data

    def _draw_negative_poses(self, anchor_id: int, anchor: Pose) -> list[Pose]:
        """Annulus placement with headings built to violate orientation agreement."""
        cfg = self.cfg
        rc = self.render_cfg
        rng = np.random.default_rng([self.rng_seed, _S_POOL, anchor_id])
        half_diag = rc.patch_side_m * math.sqrt(0.5) + 1e-6
        lo, hi = half_diag, self.world.extent_m - half_diag
        poses: list[Pose] = []
        attempts = 0
        dth_min = math.radians(cfg.delta_theta_deg)
        dth_max = min(math.pi, dth_min + math.radians(cfg.neg_heading_band_deg))
        while len(poses) < cfg.pool_size and attempts < _MAX_POSE_DRAWS * cfg.pool_size:
            attempts += 1
            r = math.sqrt(rng.uniform(cfg.d_min**2, cfg.d_max**2))
            phi = rng.uniform(-math.pi, math.pi)
            x = anchor.x + r * math.cos(phi)
            y = anchor.y + r * math.sin(phi)
            if not (lo <= x <= hi and lo <= y <= hi):
                continue
            sign = 1.0 if rng.uniform() < 0.5 else -1.0
            offset = rng.uniform(dth_min + 1e-6, dth_max)
            poses.append(Pose(x, y, wrap_angle(anchor.theta + sign * offset)))
        if len(poses) < cfg.pool_size:
            log.warning(
                "anchor %d: only %d/%d negative poses fit the world", anchor_id, len(poses), cfg.pool_size
            )
        return poses

    def _season_pool_pixels(self, anchor_id: int, season: int) -> np.ndarray:
        data = self._ensure_anchor(anchor_id)
        pixels = data["neg_pixels"].get(season)
        if pixels is None:
            rc = self.render_cfg
            pixels = np.stack(
                [
                    render_aerial_patch(self.world, p, season, rc.patch_side_m, rc.resolution).pixels
                    for p in data["neg_poses"]
                ]
            )
            data["neg_pixels"][season] = pixels
        return pixels

    # ------------------------------------------------------------------ batches

    def sample_batch(
        self, encoder: EncoderParams, batch_size: int, draw_key: int, subset: str = "train"
    ) -> list[Triplet]:
        """Mine one batch with the *current* encoder; draw_key varies per epoch."""
        ids = {"train": self.train_ids, "val": self.val_ids}[subset]
        if ids.size == 0:
            raise DomainError(f"anchor subset {subset!r} is empty")
        rng = np.random.default_rng([self.rng_seed, _S_EPOCH, int(draw_key)])
        take = min(int(batch_size), ids.size)
        chosen = rng.choice(ids, size=take, replace=False)
        batch = []
        for anchor_id in chosen:
            triplet = self._make_triplet(int(anchor_id), int(draw_key), encoder)
            if triplet is not None:
                batch.append(triplet)
        return batch

    def _make_triplet(self, anchor_id: int, draw_key: int, encoder: EncoderParams) -> Triplet | None:
        data = self._ensure_anchor(anchor_id)
        if len(data["neg_poses"]) < self.cfg.num_negatives:
            return None
        sp: StampedPose = data["pose"]
        frame_embs = encode_batch(encoder, data["clip_raw"])
        anchor_emb = frame_embs.mean(axis=0)
        norm = np.linalg.norm(anchor_emb)
        anchor_emb = frame_embs[0] if norm < 1e-12 else anchor_emb / norm

        cand_embs = encode_batch(encoder, data["cand_pixels"])
        pos_idx = select_hard_positive(anchor_emb, cand_embs, self.seasons)
        season = self.seasons[pos_idx]

        pool_pixels = self._season_pool_pixels(anchor_id, season)
        pool_embs = encode_batch(encoder, pool_pixels)
        neg_sel = select_hard_negatives(anchor_emb, pool_embs, data["neg_poses"], sp.pose, self.cfg)
        if len(neg_sel) < self.cfg.num_negatives:
            log.warning("anchor %d: %d hard negatives available, skipping", anchor_id, len(neg_sel))
            return None

        rc = self.render_cfg
        rng_aug = np.random.default_rng([self.rng_seed, _S_AUG, int(draw_key), anchor_id])
        aug = sample_augmentation_params(
            rng_aug, rc.resolution, rc.resolution,
            self.cfg.brightness_range, self.cfg.contrast_range, self.cfg.crop_fraction_range,
        )
        clip_aug = sample_augmentation_params(
            rng_aug, rc.resolution, rc.resolution,
            self.cfg.brightness_range, self.cfg.contrast_range, self.cfg.crop_fraction_range,
        )
        mpp = rc.patch_side_m / rc.resolution
        positive = apply_augmentation(ImagePatch(data["cand_pixels"][pos_idx], mpp), aug)
        negatives = [
            apply_augmentation(ImagePatch(pool_pixels[i], mpp), aug) for i in neg_sel
        ]
        corrupted: list[int] = []
        frames = []
        for j in range(data["clip_raw"].shape[0]):
            frame = apply_augmentation(ImagePatch(data["clip_raw"][j], mpp), clip_aug)
            if self.corrupt_prob > 0.0 and rng_aug.uniform() < self.corrupt_prob:
                noisy = frame.pixels + rng_aug.normal(0.0, self.corrupt_sigma, frame.pixels.shape)
                frame = ImagePatch(np.clip(noisy, 0.0, 1.0), frame.meters_per_pixel)
                corrupted.append(j)
            frames.append(frame)
        clip = GroundClip(frames, data["clip_poses"])
        return Triplet(
            anchor_clip=clip,
            anchor_pose=sp.pose,
            positive=positive,
            season=season,
            negatives=negatives,
            negative_poses=[data["neg_poses"][i] for i in neg_sel],
            augmentation=aug,
            clip_augmentation=clip_aug,
            corrupted_frames=tuple(corrupted),
            anchor_index=anchor_id,
        )


def build_triplet_batch(
    world: WorldModel,
    trajectory: Trajectory,
    encoder: EncoderParams,
    batch_size: int,
    rng_seed: int,
    seasons: list[int] | None = None,
    ground_season: int = 0,
    mining_cfg: MiningConfig | None = None,
    sampler_cfg: SamplerConfig | None = None,
    render_cfg: RenderConfig | None = None,
    clip_mode: bool = False,
) -> list[Triplet]:
    """One-shot batch construction (fresh miner, draw_key 0); deterministic in rng_seed."""
    miner = TripletMiner(
        world,
        trajectory,
        rng_seed,
        seasons=seasons,
        ground_season=ground_season,
        mining_cfg=mining_cfg,
        sampler_cfg=sampler_cfg,
        render_cfg=render_cfg,
        clip_mode=clip_mode,
        anchor_pool_size=max(2 * int(batch_size), 8),
        val_fraction=0.0,
    )
    return miner.sample_batch(encoder, batch_size, draw_key=0, subset="train")
