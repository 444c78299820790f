"""Two-stage metric-learning loop with hand-derived reverse-mode gradients.

Stage 1 trains the encoder's alignment head on single-frame triplets with a
squared-distance hinge loss.  Stage 2 freezes the encoder and trains the
quality MLP through the aggregation path: the objective is the aggregated
triplet loss minus rewards for clip/positive cosine alignment and attention
entropy.  All gradients are derived by hand (the hinge takes subgradient 0 at
its kink) and are meant to be validated against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .aggregation import (
    AggregationConfig,
    QualityMlpParams,
    init_quality_mlp,
    mlp_backward,
    mlp_forward,
    raw_cosine,
    softmax_weights,
    weight_entropy,
)
from .core import Trajectory
from .encoder import (
    EncoderConfig,
    EncoderParams,
    alignment_backward,
    alignment_forward,
    encode_batch,
    init_encoder,
)
from .errors import ConfigError, DomainError, ShapeError, TrainingError
from .frame_sampler import SamplerConfig
from .mining import MiningConfig, Triplet, TripletMiner
from .world import RenderConfig, WorldModel

__all__ = [
    "TrainingConfig",
    "triplet_loss",
    "combine_stage2_loss",
    "total_loss",
    "stage1_loss_and_grads",
    "stage2_loss_and_grads",
    "prepare_stage2_batch",
    "Adam",
    "clip_gradients",
    "ReduceLROnPlateau",
    "train_stage1",
    "train_stage2",
    "train_model",
]

_S_ENC_INIT, _S_MLP_INIT, _S_MINER1, _S_MINER2 = 51, 52, 53, 54


@dataclass
class TrainingConfig:
    alpha: float = 0.2  # triplet margin
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 1.0  # global gradient norm cap
    plateau_factor: float = 0.5
    plateau_patience: int = 3
    min_delta: float = 1e-6
    stage1_epochs: int = 40
    stage2_epochs: int = 30
    steps_per_epoch: int = 8
    batch_size: int = 24
    val_batch_size: int = 16
    val_fraction: float = 0.25
    anchor_pool_size: int = 96
    lambda_sim: float = 0.1
    lambda_entropy: float = 0.1
    negatives_reduction: str = "mean"  # "mean" averages the k hinge terms, "sum" adds them
    divergence_threshold: float = 1e6
    corrupt_prob: float = 0.25  # stage-2 clips: chance a frame is blasted with noise
    corrupt_sigma: float = 0.5
    train_seasons: tuple[int, ...] | None = None  # None = every season in the world
    ground_season: int = 0

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ConfigError("alpha must be non-negative")
        if self.learning_rate < 0.0:
            raise ConfigError("learning_rate must be non-negative")
        if not (0.0 < self.plateau_factor <= 1.0):
            raise ConfigError("plateau_factor must be in (0, 1]")
        if int(self.plateau_patience) < 1:
            raise ConfigError("plateau_patience must be >= 1")
        if self.negatives_reduction not in ("mean", "sum"):
            raise ConfigError(f"negatives_reduction must be 'mean' or 'sum', got {self.negatives_reduction!r}")
        if self.clip_norm <= 0.0:
            raise ConfigError("clip_norm must be positive")
        for name in ("stage1_epochs", "stage2_epochs", "steps_per_epoch", "batch_size", "val_batch_size", "anchor_pool_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"TrainingConfig.{name} must be >= 1")
            setattr(self, name, int(getattr(self, name)))
        if not (0.0 <= self.corrupt_prob <= 1.0):
            raise ConfigError("corrupt_prob must be in [0, 1]")
        if self.train_seasons is not None:
            self.train_seasons = tuple(int(s) for s in self.train_seasons)


# ---------------------------------------------------------------------- losses


def triplet_loss(anchor_emb, positive_emb, negative_embs, alpha: float = 0.2, reduction: str = "mean") -> float:
    """Hinge over squared distances: reduce_k [||a-p||^2 - ||a-n_k||^2 + alpha]_+.

    ``reduction`` chooses how the k negatives combine ("mean" by default).
    A positive no closer than every negative by at least the margin gives 0.
    """
    a = np.asarray(anchor_emb, dtype=float)
    p = np.asarray(positive_emb, dtype=float)
    n = np.atleast_2d(np.asarray(negative_embs, dtype=float))
    if a.shape != p.shape or n.shape[1] != a.shape[0] or n.shape[0] < 1:
        raise ShapeError(f"triplet shapes mismatch: a {a.shape}, p {p.shape}, n {n.shape}")
    if reduction not in ("mean", "sum"):
        raise ConfigError(f"unknown reduction {reduction!r}")
    d_ap = float(np.sum((a - p) ** 2))
    d_an = np.sum((n - a) ** 2, axis=1)
    hinge = np.maximum(d_ap - d_an + alpha, 0.0)
    return float(hinge.mean() if reduction == "mean" else hinge.sum())


def combine_stage2_loss(trip_loss: float, cos_sim: float, entropy: float, cfg: TrainingConfig) -> float:
    """Stage-2 objective: triplet term minus similarity and entropy rewards."""
    return float(trip_loss - cfg.lambda_sim * cos_sim - cfg.lambda_entropy * entropy)


def _stage2_forward_backward(
    mlp: QualityMlpParams,
    frame_embs: np.ndarray,
    a_pos: np.ndarray,
    a_negs: np.ndarray,
    cfg: TrainingConfig,
    agg_cfg: AggregationConfig,
    want_grads: bool,
):
    """Loss (and MLP gradients) of one clip triplet through the aggregation path."""
    e = np.atleast_2d(np.asarray(frame_embs, dtype=float))
    a_negs = np.atleast_2d(np.asarray(a_negs, dtype=float))
    k = a_negs.shape[0]
    denom = float(k) if cfg.negatives_reduction == "mean" else 1.0

    s = raw_cosine(e, a_pos)
    u = np.concatenate([e, s[:, None]], axis=1)
    o, cache = mlp_forward(mlp, u)
    w = softmax_weights(o, agg_cfg.beta)
    g = w @ e

    diff_pos = g - a_pos
    d_ap = float(diff_pos @ diff_pos)
    diff_neg = g[None, :] - a_negs
    d_an = np.sum(diff_neg**2, axis=1)
    margins = d_ap - d_an + cfg.alpha
    active = margins > 0.0
    trip = float(np.sum(margins[active]) / denom)

    g_norm = float(np.linalg.norm(g))
    if g_norm < 1e-12:
        raise DomainError("aggregated embedding collapsed to zero norm")
    a_norm = float(np.linalg.norm(a_pos))
    cos_ga = float(g @ a_pos) / (g_norm * a_norm)
    entropy = weight_entropy(w)
    loss = combine_stage2_loss(trip, cos_ga, entropy, cfg)
    extras = {"trip": trip, "cos": cos_ga, "entropy": entropy, "weights": w}
    if not want_grads:
        return loss, None, extras

    # dL/dg: hinge term 2(n_k - p) per active negative, minus the cosine reward.
    d_g = np.zeros_like(g)
    if np.any(active):
        d_g += 2.0 * np.sum(a_negs[active] - a_pos[None, :], axis=0) / denom
    d_cos = a_pos / (g_norm * a_norm) - cos_ga * g / (g_norm**2)
    d_g -= cfg.lambda_sim * d_cos
    # dL/dw_i: through g = sum w_i e_i, plus the entropy reward.
    d_w = e @ d_g + cfg.lambda_entropy * (np.log(np.clip(w, 1e-300, None)) + 1.0)
    # Softmax (with temperature) backward.
    d_o = w * (d_w - float(w @ d_w)) / agg_cfg.beta
    grads = mlp_backward(mlp, cache, d_o)
    return loss, grads, extras


def total_loss(
    mlp: QualityMlpParams,
    frame_embs: np.ndarray,
    positive_emb: np.ndarray,
    negative_embs: np.ndarray,
    cfg: TrainingConfig | None = None,
    agg_cfg: AggregationConfig | None = None,
):
    """Stage-2 objective for one clip: (loss, parts dict with trip/cos/entropy/weights)."""
    cfg = cfg or TrainingConfig()
    agg_cfg = agg_cfg or AggregationConfig()
    loss, _, extras = _stage2_forward_backward(
        mlp, frame_embs, positive_emb, negative_embs, cfg, agg_cfg, want_grads=False
    )
    return loss, extras


def stage1_loss_and_grads(
    encoder: EncoderParams, triplets: list[Triplet], cfg: TrainingConfig
) -> tuple[float, dict[str, np.ndarray]]:
    """Batch triplet loss and alignment-parameter gradients (single forward/backward).

    Anchor rows use the first clip frame (stage-1 anchors are single frames);
    gradients flow through the shared encoder from anchors, positives, and
    negatives alike.
    """
    if len(triplets) == 0:
        raise ShapeError("empty triplet batch")
    b = len(triplets)
    k = len(triplets[0].negatives)
    if any(len(t.negatives) != k for t in triplets):
        raise ShapeError("all triplets in a batch must carry the same number of negatives")
    denom = float(k) if cfg.negatives_reduction == "mean" else 1.0

    anchors = np.stack([t.anchor_clip.frames[0].pixels for t in triplets])
    positives = np.stack([t.positive.pixels for t in triplets])
    negatives = np.stack([n.pixels for t in triplets for n in t.negatives])
    res = encoder.config.input_resolution
    x = np.concatenate(
        [anchors.reshape(b, -1), positives.reshape(b, -1), negatives.reshape(b * k, -1)]
    )
    if x.shape[1] != res * res:
        raise ShapeError(f"patch pixels {x.shape[1]} incompatible with encoder input {res}x{res}")
    cache = alignment_forward(encoder, x)
    e = cache["e"]
    e_a, e_p, e_n = e[:b], e[b : 2 * b], e[2 * b :].reshape(b, k, -1)

    diff_ap = e_a - e_p  # (B, d)
    d_ap = np.sum(diff_ap**2, axis=1, keepdims=True)  # (B, 1)
    diff_an = e_a[:, None, :] - e_n  # (B, K, d)
    d_an = np.sum(diff_an**2, axis=2)  # (B, K)
    margins = d_ap - d_an + cfg.alpha
    active = margins > 0.0
    loss = float(np.sum(np.where(active, margins, 0.0)) / denom / b)

    act = active.astype(float)[..., None]  # (B, K, 1)
    scale = 1.0 / (denom * b)
    d_ea = scale * np.sum(act * 2.0 * (e_n - e_p[:, None, :]), axis=1)
    d_ep = scale * np.sum(act, axis=1) * (-2.0) * diff_ap
    d_en = scale * act * 2.0 * diff_an
    d_e = np.concatenate([d_ea, d_ep, d_en.reshape(b * k, -1)])
    grads = alignment_backward(encoder, cache, d_e)
    return loss, grads


def prepare_stage2_batch(encoder: EncoderParams, triplets: list[Triplet]) -> list[dict]:
    """Embed a clip-triplet batch once with the frozen encoder."""
    batch = []
    for t in triplets:
        frames = np.stack([f.pixels for f in t.anchor_clip.frames])
        batch.append(
            {
                "frames": encode_batch(encoder, frames),
                "positive": encode_batch(encoder, t.positive.pixels[None])[0],
                "negatives": encode_batch(encoder, np.stack([n.pixels for n in t.negatives])),
                "corrupted": t.corrupted_frames,
            }
        )
    return batch


def stage2_loss_and_grads(
    mlp: QualityMlpParams, batch: list[dict], cfg: TrainingConfig, agg_cfg: AggregationConfig
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean stage-2 loss over embedded triplets and MLP gradients."""
    if len(batch) == 0:
        raise ShapeError("empty stage-2 batch")
    total = 0.0
    acc: dict[str, np.ndarray] = {n: np.zeros_like(p) for n, p in mlp.parameters().items()}
    for item in batch:
        loss, grads, _ = _stage2_forward_backward(
            mlp, item["frames"], item["positive"], item["negatives"], cfg, agg_cfg, want_grads=True
        )
        total += loss
        for name in acc:
            acc[name] += grads[name]
    inv = 1.0 / len(batch)
    for name in acc:
        acc[name] *= inv
    return total * inv, acc


# ------------------------------------------------------------------- optimizer


class Adam:
    """Standard Adam with bias correction, operating in-place on named arrays."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {n: np.zeros_like(p) for n, p in params.items()}
        self._v = {n: np.zeros_like(p) for n, p in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is at most max_norm.

    Returns the pre-clip global norm.
    """
    if max_norm <= 0.0:
        raise ConfigError("max_norm must be positive")
    sq = sum(float(np.sum(g * g)) for g in grads.values())
    norm = math.sqrt(sq)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class ReduceLROnPlateau:
    """Halve-style LR schedule on stagnating validation loss, plus early stop.

    After ``patience`` consecutive epochs without improving the best seen loss
    by ``min_delta`` the LR is multiplied by ``factor`` (and the counter
    resets); after ``2 * patience`` consecutive stagnant epochs
    ``should_stop`` turns True.
    """

    def __init__(self, lr: float, factor: float = 0.5, patience: int = 3, min_delta: float = 1e-6):
        self.lr = float(lr)
        self.factor = float(factor)
        self.patience = int(patience)
        self.min_delta = float(min_delta)
        self.best = math.inf
        self.bad_epochs = 0
        self.stagnant_epochs = 0
        self.should_stop = False

    def update(self, loss: float) -> bool:
        """Record one epoch's monitored loss; returns True if it improved."""
        if loss < self.best - self.min_delta:
            self.best = loss
            self.bad_epochs = 0
            self.stagnant_epochs = 0
            return True
        self.bad_epochs += 1
        self.stagnant_epochs += 1
        if self.bad_epochs >= self.patience:
            self.lr *= self.factor
            self.bad_epochs = 0
        if self.stagnant_epochs >= 2 * self.patience:
            self.should_stop = True
        return False


# ---------------------------------------------------------------- train drivers


def _check_divergence(loss: float, cfg: TrainingConfig, stage: str, epoch: int) -> None:
    if not np.isfinite(loss) or loss > cfg.divergence_threshold:
        raise TrainingError(f"{stage} diverged at epoch {epoch}: loss={loss!r}")


def _make_miner(world, trajectory, seed, stream, cfg, mining_cfg, sampler_cfg, render_cfg, clip_mode):
    seasons = list(cfg.train_seasons) if cfg.train_seasons is not None else None
    return TripletMiner(
        world,
        trajectory,
        rng_seed=np.random.SeedSequence([int(seed), stream]).generate_state(1)[0],
        seasons=seasons,
        ground_season=cfg.ground_season,
        mining_cfg=mining_cfg,
        sampler_cfg=sampler_cfg,
        render_cfg=render_cfg,
        clip_mode=clip_mode,
        anchor_pool_size=cfg.anchor_pool_size,
        val_fraction=cfg.val_fraction,
        corrupt_prob=cfg.corrupt_prob if clip_mode else 0.0,
        corrupt_sigma=cfg.corrupt_sigma,
    )


def train_stage1(
    world: WorldModel,
    trajectory: Trajectory,
    seed: int,
    cfg: TrainingConfig | None = None,
    encoder_cfg: EncoderConfig | None = None,
    mining_cfg: MiningConfig | None = None,
    sampler_cfg: SamplerConfig | None = None,
    render_cfg: RenderConfig | None = None,
    encoder: EncoderParams | None = None,
) -> tuple[EncoderParams, list[dict]]:
    """Train the alignment head on single-frame triplets; returns (params, history)."""
    cfg = cfg or TrainingConfig()
    render_cfg = render_cfg or RenderConfig()
    if encoder is None:
        encoder_cfg = encoder_cfg or EncoderConfig(input_resolution=render_cfg.resolution)
        encoder = init_encoder(np.random.SeedSequence([int(seed), _S_ENC_INIT]).generate_state(1)[0], encoder_cfg)
    miner = _make_miner(world, trajectory, seed, _S_MINER1, cfg, mining_cfg, sampler_cfg, render_cfg, clip_mode=False)
    val_triplets = miner.sample_batch(encoder, cfg.val_batch_size, draw_key=0, subset="val")
    if len(val_triplets) == 0:
        raise TrainingError("could not mine a validation batch")
    params = encoder.alignment_parameters()
    adam = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    sched = ReduceLROnPlateau(cfg.learning_rate, cfg.plateau_factor, cfg.plateau_patience, cfg.min_delta)
    history: list[dict] = []
    for epoch in range(1, cfg.stage1_epochs + 1):
        batch = miner.sample_batch(encoder, cfg.batch_size, draw_key=epoch, subset="train")
        if len(batch) == 0:
            raise TrainingError(f"stage1 epoch {epoch}: mining produced no usable triplets")
        step_losses = []
        for _ in range(cfg.steps_per_epoch):
            loss, grads = stage1_loss_and_grads(encoder, batch, cfg)
            _check_divergence(loss, cfg, "stage1", epoch)
            clip_gradients(grads, cfg.clip_norm)
            adam.lr = sched.lr
            adam.step(params, grads)
            step_losses.append(loss)
        val_loss, _ = stage1_loss_and_grads(encoder, val_triplets, cfg)
        _check_divergence(val_loss, cfg, "stage1", epoch)
        sched.update(val_loss)
        history.append(
            {
                "stage": 1,
                "epoch": epoch,
                "train_loss": float(np.mean(step_losses)),
                "val_loss": float(val_loss),
                "lr": sched.lr,
            }
        )
        if sched.should_stop:
            break
    return encoder, history


def train_stage2(
    world: WorldModel,
    trajectory: Trajectory,
    encoder: EncoderParams,
    seed: int,
    cfg: TrainingConfig | None = None,
    agg_cfg: AggregationConfig | None = None,
    mining_cfg: MiningConfig | None = None,
    sampler_cfg: SamplerConfig | None = None,
    render_cfg: RenderConfig | None = None,
    mlp: QualityMlpParams | None = None,
) -> tuple[QualityMlpParams, list[dict]]:
    """Train the quality MLP on clip triplets with the encoder frozen."""
    cfg = cfg or TrainingConfig()
    agg_cfg = agg_cfg or AggregationConfig()
    render_cfg = render_cfg or RenderConfig()
    if mlp is None:
        mlp = init_quality_mlp(
            np.random.SeedSequence([int(seed), _S_MLP_INIT]).generate_state(1)[0],
            encoder.config.embed_dim,
        )
    miner = _make_miner(world, trajectory, seed, _S_MINER2, cfg, mining_cfg, sampler_cfg, render_cfg, clip_mode=True)
    val_batch = prepare_stage2_batch(encoder, miner.sample_batch(encoder, cfg.val_batch_size, 0, "val"))
    if len(val_batch) == 0:
        raise TrainingError("could not mine a stage-2 validation batch")
    params = mlp.parameters()
    adam = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    sched = ReduceLROnPlateau(cfg.learning_rate, cfg.plateau_factor, cfg.plateau_patience, cfg.min_delta)
    history: list[dict] = []
    for epoch in range(1, cfg.stage2_epochs + 1):
        triplets = miner.sample_batch(encoder, cfg.batch_size, draw_key=epoch, subset="train")
        if len(triplets) == 0:
            raise TrainingError(f"stage2 epoch {epoch}: mining produced no usable triplets")
        batch = prepare_stage2_batch(encoder, triplets)
        step_losses = []
        for _ in range(cfg.steps_per_epoch):
            loss, grads = stage2_loss_and_grads(mlp, batch, cfg, agg_cfg)
            _check_divergence(loss, cfg, "stage2", epoch)
            clip_gradients(grads, cfg.clip_norm)
            adam.lr = sched.lr
            adam.step(params, grads)
            step_losses.append(loss)
        val_loss, _ = stage2_loss_and_grads(mlp, val_batch, cfg, agg_cfg)
        _check_divergence(val_loss, cfg, "stage2", epoch)
        sched.update(val_loss)
        history.append(
            {
                "stage": 2,
                "epoch": epoch,
                "train_loss": float(np.mean(step_losses)),
                "val_loss": float(val_loss),
                "lr": sched.lr,
            }
        )
        if sched.should_stop:
            break
    return mlp, history


def train_model(
    world: WorldModel,
    trajectory: Trajectory,
    seed: int,
    cfg: TrainingConfig | None = None,
    encoder_cfg: EncoderConfig | None = None,
    agg_cfg: AggregationConfig | None = None,
    mining_cfg: MiningConfig | None = None,
    sampler_cfg: SamplerConfig | None = None,
    render_cfg: RenderConfig | None = None,
) -> tuple[EncoderParams, QualityMlpParams, list[dict]]:
    """Full pipeline: stage 1 then stage 2; returns (encoder, mlp, history)."""
    encoder, hist1 = train_stage1(
        world, trajectory, seed, cfg, encoder_cfg, mining_cfg, sampler_cfg, render_cfg
    )
    mlp, hist2 = train_stage2(
        world, trajectory, encoder, seed, cfg, agg_cfg, mining_cfg, sampler_cfg, render_cfg
    )
    return encoder, mlp, hist1 + hist2
