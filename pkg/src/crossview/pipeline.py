"""End-to-end orchestration: odometry derivation, the online localization
loop, and the clip-vs-grid matcher used for frame-level localization.

The dead-reckoning baseline is the same filter with measurement updates
disabled, fed the identical noisy control sequence, so comparisons isolate
the contribution of the visual updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregationConfig, QualityMlpParams, aggregate_clip
from .config import RunConfig
from .core import Pose, StampedPose, Trajectory, ang_diff
from .encoder import EncoderParams, encode_batch
from .errors import ConfigError
from .frame_sampler import select_clip_frames
from .mcl import BeliefState, Control, init_particles, step
from .world import GroundClip, WorldModel, render_ground_clip

__all__ = [
    "LocalizationResult",
    "derive_controls",
    "apply_control",
    "integrate_controls",
    "run_localization",
    "make_clip_matcher",
]

_S_ODOM = 71  # rng stream: odometry measurement noise
_S_FILTER = 72  # rng stream: particle filter noise
_S_OBS = 73  # rng stream: ground-frame pixel noise


@dataclass
class LocalizationResult:
    """Artifacts of one localization run."""

    estimates: Trajectory
    rows: list[dict]  # per-step CSV rows: t, x, y, theta, entropy, lambda, ess
    diagnostics: dict = field(default_factory=dict)


def derive_controls(
    trajectory: Trajectory,
    noise_trans: float,
    noise_rot: float,
    rng: np.random.Generator,
) -> list[Control]:
    """Noisy odometry increments between consecutive trajectory poses.

    Per step: delta_d = Euclidean displacement, delta_theta = wrapped heading
    change, each corrupted by zero-mean Gaussian noise whose scale grows with
    the step magnitude (sigma_d = noise_trans * d, sigma_th = noise_rot *
    (|dtheta| + 0.1 * d)).  The distance-coupled heading term makes straight
    segments drift too, as integrated odometry does.
    """
    if noise_trans < 0.0 or noise_rot < 0.0:
        raise ConfigError("odometry noise scales must be non-negative")
    xy = trajectory.positions()
    headings = trajectory.headings()
    controls = []
    for k in range(1, len(trajectory)):
        d = float(np.hypot(*(xy[k] - xy[k - 1])))
        dth = float(ang_diff(headings[k], headings[k - 1]))
        sig_d = noise_trans * d
        sig_th = noise_rot * (abs(dth) + 0.1 * d)
        nd = d + (rng.normal(0.0, sig_d) if sig_d > 0.0 else 0.0)
        nth = dth + (rng.normal(0.0, sig_th) if sig_th > 0.0 else 0.0)
        controls.append(Control(delta_d=max(nd, 0.0), delta_theta=nth))
    return controls


def apply_control(pose: Pose, control: Control) -> Pose:
    """Deterministic motion model: rotate, then advance along the new heading."""
    theta = pose.theta + control.delta_theta
    return Pose(
        pose.x + control.delta_d * np.cos(theta),
        pose.y + control.delta_d * np.sin(theta),
        theta,
    )


def integrate_controls(start: Pose, controls: list[Control], times) -> Trajectory:
    """Dead-reckoned track from a start pose and a control sequence."""
    t = np.asarray(times, dtype=float)
    if t.size != len(controls) + 1:
        raise ConfigError(f"need {len(controls) + 1} timestamps, got {t.size}")
    poses = [StampedPose(float(t[0]), start)]
    cur = start
    for k, c in enumerate(controls):
        cur = apply_control(cur, c)
        poses.append(StampedPose(float(t[k + 1]), cur))
    return Trajectory(poses)


def run_localization(
    world: WorldModel,
    trajectory: Trajectory,
    encoder: EncoderParams,
    mlp: QualityMlpParams,
    cfg: RunConfig,
    agg_cfg: AggregationConfig | None = None,
    controls: list[Control] | None = None,
    dead_reckoning: bool = False,
) -> LocalizationResult:
    """Run the particle filter along a trajectory with periodic clip updates.

    Ground clips are rendered from the *true* poses (the camera observes the
    world), while clip frame selection walks the *odometry* track the robot
    actually has.  With ``dead_reckoning=True`` no observation is ever passed,
    which reduces every cycle to the predict step.
    """
    if len(trajectory) < 2:
        raise ConfigError("trajectory must have at least 2 poses")
    agg_cfg = agg_cfg or AggregationConfig()
    loc = cfg.localize
    times = trajectory.times()
    xy = trajectory.positions()
    headings = trajectory.headings()

    if controls is None:
        odom_rng = np.random.default_rng([cfg.seed, _S_ODOM])
        controls = derive_controls(trajectory, loc.odom_noise_trans, loc.odom_noise_rot, odom_rng)
    if len(controls) != len(trajectory) - 1:
        raise ConfigError(f"need {len(trajectory) - 1} controls, got {len(controls)}")

    # The odometry-frame track: what frame selection gets to see.
    start = Pose(xy[0, 0], xy[0, 1], headings[0])
    odom_track = integrate_controls(start, controls, times)
    odom_xy = odom_track.positions()

    filter_rng = np.random.default_rng([cfg.seed, _S_FILTER])
    belief: BeliefState = init_particles(start, cfg.filter, filter_rng)

    frame_cache: dict[int, GroundClip] = {}

    def true_frame(idx: int) -> GroundClip:
        if idx not in frame_cache:
            frame_cache[idx] = render_ground_clip(
                world,
                [StampedPose(float(times[idx]), Pose(xy[idx, 0], xy[idx, 1], headings[idx]))],
                loc.obs_season,
                noise_sigma=cfg.render.ground_noise_sigma,
                rng_seed=(cfg.seed, _S_OBS, idx),
                resolution=cfg.render.resolution,
                footprint_m=cfg.render.patch_side_m,
                fov_half_angle_deg=cfg.render.fov_half_angle_deg,
            )
        return frame_cache[idx]

    rows = [
        {
            "t": float(times[0]),
            "x": start.x,
            "y": start.y,
            "theta": start.theta,
            "entropy": None,
            "lambda": None,
            "ess": belief.ess(),
        }
    ]
    stamped = [StampedPose(float(times[0]), start)]
    n_updates = 0
    n_resamples = 0
    total_oob = 0

    for k in range(1, len(trajectory)):
        clip = None
        if not dead_reckoning and (k % loc.observe_every == 0):
            picks = select_clip_frames(times[: k + 1], odom_xy[: k + 1], times[: k + 1], float(times[k]), cfg.sampler)
            frames = [true_frame(i).frames[0] for i in picks]
            frame_poses = [odom_track.poses[i] for i in picks]
            clip = GroundClip(frames=frames, frame_poses=frame_poses)
        belief, est, diag = step(
            belief, controls[k - 1], clip, world, loc.map_season, encoder, mlp, agg_cfg, cfg.filter, filter_rng
        )
        if clip is not None:
            n_updates += 1
            total_oob += diag.get("oob", 0)
        if diag.get("resampled"):
            n_resamples += 1
        rows.append(
            {
                "t": float(times[k]),
                "x": est.x,
                "y": est.y,
                "theta": est.theta,
                "entropy": diag.get("entropy"),
                "lambda": diag.get("lambda"),
                "ess": diag.get("ess"),
            }
        )
        stamped.append(StampedPose(float(times[k]), est))

    diagnostics = {
        "num_steps": len(trajectory) - 1,
        "num_measurement_updates": n_updates,
        "num_resamples": n_resamples,
        "oob_particle_scores": total_oob,
        "dead_reckoning": bool(dead_reckoning),
        "final_ess": rows[-1]["ess"],
    }
    return LocalizationResult(Trajectory(stamped), rows, diagnostics)


def make_clip_matcher(
    clip: GroundClip,
    encoder: EncoderParams,
    mlp: QualityMlpParams,
    agg_cfg: AggregationConfig | None = None,
):
    """Scorer for likelihood maps: each candidate patch is its own reference.

    For every candidate aerial patch the clip is aggregated against that
    patch's embedding and scored s = (1 + cos(e_agg, e_patch)) / 2 in [0, 1].
    """
    agg_cfg = agg_cfg or AggregationConfig()
    frame_embs = encode_batch(encoder, np.stack([f.pixels for f in clip.frames]))

    def matcher(pixels: np.ndarray) -> np.ndarray:
        cand = encode_batch(encoder, pixels)
        scores = np.empty(cand.shape[0])
        for i, ref in enumerate(cand):
            agg = aggregate_clip(frame_embs, ref, mlp, agg_cfg)
            e = agg.embedding
            norm = np.linalg.norm(e)
            cos = float(e @ ref) / norm if norm > 1e-12 else 0.0
            scores[i] = np.clip((1.0 + cos) / 2.0, 0.0, 1.0)
        return scores

    return matcher
