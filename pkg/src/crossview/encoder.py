"""Shared-weight patch encoder: frozen random projection + trainable alignment head.

The backbone is fixed and never trained: each patch is standardized (zero
mean, unit variance across its own pixels) and then passed through a seeded
Gaussian random projection.  Standardization makes the backbone blind to
per-patch brightness and contrast — exactly the components a season's tone
curve shifts most — so patches from different locations come out close to
orthogonal while co-located patches stay aligned.  On top sits a small
alignment head (affine + ReLU + affine) whose output is L2-normalized onto
the unit sphere.  Ground frames and aerial patches share one set of weights,
so embeddings of both views are directly comparable by cosine.

Forward passes cache pre-activations so the training loop can run the exact
hand-derived backward pass; see :func:`alignment_backward`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .world import ImagePatch

__all__ = [
    "EncoderConfig",
    "EncoderParams",
    "init_encoder",
    "encode",
    "encode_batch",
    "standardize_pixels",
    "alignment_forward",
    "alignment_backward",
    "similarity_score",
]

_S_PROJ, _S_ALIGN = 21, 22


@dataclass
class EncoderConfig:
    """Desk-scale encoder dimensions (pixels -> proj_dim -> hidden_dim -> embed_dim)."""

    input_resolution: int = 32
    proj_dim: int = 256
    hidden_dim: int = 128
    embed_dim: int = 64

    def __post_init__(self):
        for name in ("input_resolution", "proj_dim", "hidden_dim", "embed_dim"):
            v = getattr(self, name)
            if int(v) < 1:
                raise ConfigError(f"EncoderConfig.{name} must be >= 1, got {v}")
            setattr(self, name, int(v))

    @property
    def num_pixels(self) -> int:
        return self.input_resolution * self.input_resolution


class EncoderParams:
    """Weights of one encoder instance.

    ``projection`` is rebuilt deterministically from ``frozen_seed`` and never
    updated; ``w1, b1, w2, b2`` are the trainable alignment parameters.
    """

    ALIGNMENT_NAMES = ("w1", "b1", "w2", "b2")

    def __init__(self, config: EncoderConfig, frozen_seed: int, w1, b1, w2, b2):
        self.config = config
        self.frozen_seed = int(frozen_seed)
        self.projection = frozen_projection(frozen_seed, config)
        self.w1 = np.asarray(w1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.b2 = np.asarray(b2, dtype=float)
        expect = {
            "w1": (config.hidden_dim, config.proj_dim),
            "b1": (config.hidden_dim,),
            "w2": (config.embed_dim, config.hidden_dim),
            "b2": (config.embed_dim,),
        }
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeError(f"EncoderParams.{name} must have shape {shape}, got {got}")

    def alignment_parameters(self) -> dict[str, np.ndarray]:
        """The trainable arrays, by name (views, not copies)."""
        return {name: getattr(self, name) for name in self.ALIGNMENT_NAMES}

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            self.config, self.frozen_seed,
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(),
        )


def frozen_projection(seed: int, config: EncoderConfig) -> np.ndarray:
    """The seeded (proj_dim, num_pixels) Gaussian projection, scaled by 1/sqrt(num_pixels)."""
    rng = np.random.default_rng([int(seed), _S_PROJ])
    scale = 1.0 / np.sqrt(config.num_pixels)
    return rng.standard_normal((config.proj_dim, config.num_pixels)) * scale


def init_encoder(seed: int, config: EncoderConfig | None = None) -> EncoderParams:
    """Seeded He-style initialization of the alignment head over a frozen projection."""
    config = config or EncoderConfig()
    rng = np.random.default_rng([int(seed), _S_ALIGN])
    w1 = rng.standard_normal((config.hidden_dim, config.proj_dim)) * np.sqrt(2.0 / config.proj_dim)
    b1 = np.zeros(config.hidden_dim)
    w2 = rng.standard_normal((config.embed_dim, config.hidden_dim)) * np.sqrt(1.0 / config.hidden_dim)
    b2 = np.zeros(config.embed_dim)
    return EncoderParams(config, seed, w1, b1, w2, b2)


def _as_pixel_matrix(params: EncoderParams, pixels) -> np.ndarray:
    """Coerce one patch / (H, W) array / (B, H, W) stack to a (B, num_pixels) matrix."""
    if isinstance(pixels, ImagePatch):
        pixels = pixels.pixels
    x = np.asarray(pixels, dtype=float)
    n = params.config.num_pixels
    if x.ndim == 2 and x.shape == (params.config.input_resolution,) * 2:
        x = x.reshape(1, n)
    elif x.ndim == 3 and x.shape[1:] == (params.config.input_resolution,) * 2:
        x = x.reshape(x.shape[0], n)
    elif x.ndim == 1 and x.shape[0] == n:
        x = x.reshape(1, n)
    elif x.ndim == 2 and x.shape[1] == n:
        pass
    else:
        raise ShapeError(
            f"pixels shape {x.shape} incompatible with input resolution "
            f"{params.config.input_resolution}"
        )
    return x


def standardize_pixels(x: np.ndarray) -> np.ndarray:
    """Per-patch standardization: zero mean, unit variance over each row.

    Part of the frozen backbone (applied before the projection, never
    trained).  A constant patch has no texture to standardize; its row
    becomes all zeros and the encoder rejects it downstream as degenerate.
    """
    mu = x.mean(axis=1, keepdims=True)
    sd = x.std(axis=1, keepdims=True)
    out = (x - mu) / np.maximum(sd, 1e-6)
    return np.where(sd < 1e-6, 0.0, out)


def alignment_forward(params: EncoderParams, x: np.ndarray) -> dict:
    """Full forward pass on a (B, num_pixels) matrix, returning all intermediates.

    Cache keys: z (projection output), h (pre-ReLU), r (post-ReLU),
    y (pre-normalization), norms, e (unit embeddings, shape (B, embed_dim)).
    """
    z = standardize_pixels(x) @ params.projection.T
    h = z @ params.w1.T + params.b1
    r = np.maximum(h, 0.0)
    y = r @ params.w2.T + params.b2
    norms = np.linalg.norm(y, axis=1)
    if np.any(norms < 1e-12):
        raise DomainError("encoder produced a zero-norm embedding; cannot normalize")
    e = y / norms[:, None]
    return {"z": z, "h": h, "r": r, "y": y, "norms": norms, "e": e}


def alignment_backward(params: EncoderParams, cache: dict, d_e: np.ndarray) -> dict[str, np.ndarray]:
    """Hand-derived gradients of the alignment parameters.

    Given dL/de for every row of the batch, backpropagates through the L2
    normalization (dy = (de - (e . de) e) / ||y||), the final affine layer, the
    ReLU (subgradient 0 at the kink), and the first affine layer.  The frozen
    projection receives no gradient.
    """
    e, y, r, h, z, norms = cache["e"], cache["y"], cache["r"], cache["h"], cache["z"], cache["norms"]
    proj = np.sum(d_e * e, axis=1, keepdims=True)
    d_y = (d_e - proj * e) / norms[:, None]
    d_w2 = d_y.T @ r
    d_b2 = d_y.sum(axis=0)
    d_r = d_y @ params.w2
    d_h = d_r * (h > 0.0)
    d_w1 = d_h.T @ z
    d_b1 = d_h.sum(axis=0)
    return {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2}


def encode_batch(params: EncoderParams, pixels) -> np.ndarray:
    """Unit-norm embeddings, shape (B, embed_dim), for a stack of patches."""
    x = _as_pixel_matrix(params, pixels)
    return alignment_forward(params, x)["e"]


def encode(params: EncoderParams, pixels) -> np.ndarray:
    """Unit-norm embedding, shape (embed_dim,), of a single patch."""
    return encode_batch(params, pixels)[0]


def similarity_score(e_a: np.ndarray, e_b: np.ndarray) -> float:
    """Cosine similarity mapped to [0, 1]: s = (1 + cos(e_a, e_b)) / 2.

    Both embeddings must already be unit-norm (within 1e-6); identical
    embeddings score 1, antipodal ones 0, orthogonal ones 0.5.
    """
    a = np.asarray(e_a, dtype=float)
    b = np.asarray(e_b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"embeddings must be 1-D with equal shape, got {a.shape} and {b.shape}")
    for name, v in (("e_a", a), ("e_b", b)):
        n = np.linalg.norm(v)
        if abs(n - 1.0) > 1e-6:
            raise DomainError(f"{name} must be unit-norm (|{n!r} - 1| > 1e-6)")
    return float(np.clip((1.0 + float(a @ b)) / 2.0, 0.0, 1.0))
