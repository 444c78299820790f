"""Quality-aware aggregation of clip frame embeddings into one vector.

Each frame embedding, concatenated with its raw cosine against the reference
aerial embedding, passes through a small MLP that emits a scalar quality
logit; a temperature softmax turns the logits into weights, and the clip
embedding is their weighted sum (not re-normalized by default, so a diffuse
clip yields a shorter vector).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

__all__ = [
    "AggregationConfig",
    "AggregationResult",
    "QualityMlpParams",
    "init_quality_mlp",
    "mlp_forward",
    "mlp_backward",
    "raw_cosine",
    "softmax_weights",
    "aggregate_clip",
    "weight_entropy",
]

_S_MLP = 31


@dataclass
class AggregationConfig:
    beta: float = 1.0  # softmax temperature; smaller -> sharper
    renormalize_agg: bool = False  # keep the aggregated vector's natural length by default

    def __post_init__(self):
        if not (self.beta > 0.0 and np.isfinite(self.beta)):
            raise ConfigError(f"beta must be positive and finite, got {self.beta!r}")


@dataclass
class AggregationResult:
    embedding: np.ndarray  # (d,) weighted sum of frame embeddings
    weights: np.ndarray  # (N,) softmax weights, sum to 1
    scores: np.ndarray  # (N,) raw cosine of each frame vs the reference
    logits: np.ndarray  # (N,) MLP outputs before the softmax


class QualityMlpParams:
    """Weights of the per-frame quality scorer: (d+1) -> h1 -> h2 -> 1, ReLU inside."""

    NAMES = ("v1", "c1", "v2", "c2", "v3", "c3")

    def __init__(self, embed_dim: int, v1, c1, v2, c2, v3, c3):
        self.embed_dim = int(embed_dim)
        self.v1 = np.asarray(v1, dtype=float)
        self.c1 = np.asarray(c1, dtype=float)
        self.v2 = np.asarray(v2, dtype=float)
        self.c2 = np.asarray(c2, dtype=float)
        self.v3 = np.asarray(v3, dtype=float)
        self.c3 = np.asarray(c3, dtype=float)
        if self.v1.shape[1] != self.embed_dim + 1:
            raise ShapeError(
                f"v1 must take embed_dim+1={self.embed_dim + 1} inputs, got {self.v1.shape}"
            )
        if self.v3.shape[0] != 1:
            raise ShapeError(f"v3 must emit a scalar logit, got {self.v3.shape}")

    @property
    def hidden_dims(self) -> tuple[int, int]:
        return (self.v1.shape[0], self.v2.shape[0])

    def parameters(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.NAMES}

    def copy(self) -> "QualityMlpParams":
        return QualityMlpParams(self.embed_dim, *(getattr(self, n).copy() for n in self.NAMES))


def init_quality_mlp(seed: int, embed_dim: int, hidden: tuple[int, int] = (32, 16)) -> QualityMlpParams:
    """Seeded init; logits start near zero so initial attention is near uniform."""
    h1, h2 = int(hidden[0]), int(hidden[1])
    d_in = int(embed_dim) + 1
    rng = np.random.default_rng([int(seed), _S_MLP])
    v1 = rng.standard_normal((h1, d_in)) * np.sqrt(2.0 / d_in)
    v2 = rng.standard_normal((h2, h1)) * np.sqrt(2.0 / h1)
    v3 = rng.standard_normal((1, h2)) * (0.1 * np.sqrt(1.0 / h2))
    return QualityMlpParams(embed_dim, v1, np.zeros(h1), v2, np.zeros(h2), v3, np.zeros(1))


def mlp_forward(mlp: QualityMlpParams, u: np.ndarray) -> tuple[np.ndarray, dict]:
    """Logits (N,) for stacked inputs u of shape (N, d+1), plus a backward cache."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != mlp.embed_dim + 1:
        raise ShapeError(f"mlp input must be (N, {mlp.embed_dim + 1}), got {u.shape}")
    a1 = u @ mlp.v1.T + mlp.c1
    r1 = np.maximum(a1, 0.0)
    a2 = r1 @ mlp.v2.T + mlp.c2
    r2 = np.maximum(a2, 0.0)
    o = (r2 @ mlp.v3.T + mlp.c3)[:, 0]
    return o, {"u": u, "a1": a1, "r1": r1, "a2": a2, "r2": r2}


def mlp_backward(mlp: QualityMlpParams, cache: dict, d_o: np.ndarray) -> dict[str, np.ndarray]:
    """Hand-derived gradients of all MLP parameters given dL/d(logit) per row."""
    d_o = np.asarray(d_o, dtype=float)[:, None]
    u, a1, r1, a2, r2 = cache["u"], cache["a1"], cache["r1"], cache["a2"], cache["r2"]
    d_v3 = d_o.T @ r2
    d_c3 = d_o.sum(axis=0)
    d_r2 = d_o @ mlp.v3
    d_a2 = d_r2 * (a2 > 0.0)
    d_v2 = d_a2.T @ r1
    d_c2 = d_a2.sum(axis=0)
    d_r1 = d_a2 @ mlp.v2
    d_a1 = d_r1 * (a1 > 0.0)
    d_v1 = d_a1.T @ u
    d_c1 = d_a1.sum(axis=0)
    return {"v1": d_v1, "c1": d_c1, "v2": d_v2, "c2": d_c2, "v3": d_v3, "c3": d_c3}


def raw_cosine(frame_embs: np.ndarray, aerial_emb: np.ndarray) -> np.ndarray:
    """Plain cosine in [-1, 1] of each row against the reference (no [0,1] shift)."""
    e = np.atleast_2d(np.asarray(frame_embs, dtype=float))
    a = np.asarray(aerial_emb, dtype=float)
    if a.ndim != 1 or e.shape[1] != a.shape[0]:
        raise ShapeError(f"embedding dims mismatch: frames {e.shape}, aerial {a.shape}")
    e_norm = np.linalg.norm(e, axis=1)
    a_norm = np.linalg.norm(a)
    if a_norm < 1e-12 or np.any(e_norm < 1e-12):
        raise DomainError("cannot take cosine of a zero-norm embedding")
    return (e @ a) / (e_norm * a_norm)


def softmax_weights(logits: np.ndarray, beta: float) -> np.ndarray:
    """Temperature softmax with max-shift for numerical stability."""
    z = np.asarray(logits, dtype=float)
    if z.ndim != 1 or z.size == 0:
        raise ShapeError(f"logits must be a nonempty 1-D vector, got shape {z.shape}")
    if not np.isfinite(beta) or beta <= 0.0:
        raise ConfigError(f"beta must be positive and finite, got {beta!r}")
    z = z / beta
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()


def aggregate_clip(
    frame_embs: np.ndarray,
    aerial_emb: np.ndarray,
    mlp: QualityMlpParams,
    cfg: AggregationConfig | None = None,
) -> AggregationResult:
    """Fuse N frame embeddings into one clip embedding with learned quality weights.

    ``frame_embs`` is (N, d) with N >= 1 (unit rows); ``aerial_emb`` is the
    (d,) reference the cosines are taken against.  A single frame always gets
    weight 1.  The fused vector lies in the convex hull of the frames, so its
    norm never exceeds 1 for unit inputs; it is only re-normalized when
    ``cfg.renormalize_agg`` is set.
    """
    cfg = cfg or AggregationConfig()
    e = np.atleast_2d(np.asarray(frame_embs, dtype=float))
    if e.shape[0] < 1:
        raise ShapeError("aggregate_clip requires at least one frame embedding")
    if e.shape[1] != mlp.embed_dim:
        raise ShapeError(f"frame embeddings dim {e.shape[1]} != mlp embed_dim {mlp.embed_dim}")
    s = raw_cosine(e, aerial_emb)
    u = np.concatenate([e, s[:, None]], axis=1)
    o, _ = mlp_forward(mlp, u)
    w = softmax_weights(o, cfg.beta)
    agg = w @ e
    if cfg.renormalize_agg:
        norm = np.linalg.norm(agg)
        if norm < 1e-12:
            raise DomainError("aggregated embedding has near-zero norm; cannot renormalize")
        agg = agg / norm
    return AggregationResult(agg, w, s, o)


def weight_entropy(weights: np.ndarray) -> float:
    """Shannon entropy (nats) of an attention distribution, with 0 * log 0 = 0.

    Raises ``DomainError`` unless the weights are non-negative and sum to 1
    within 1e-6.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ShapeError(f"weights must be a non-empty 1-D array, got shape {w.shape}")
    if np.any(w < 0.0):
        raise DomainError("weights must be non-negative")
    if abs(w.sum() - 1.0) > 1e-6:
        raise DomainError(f"weights must sum to 1 within 1e-6, got {w.sum()!r}")
    nz = w[w > 0.0]
    return float(-np.sum(nz * np.log(nz)))
