"""File formats: PGM images, JSON checkpoints/worlds, CSV logs.

All writers are deterministic: the same values serialize to the same bytes
(floats via ``repr`` round-trip formatting, JSON with sorted keys).
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .aggregation import QualityMlpParams
from .encoder import EncoderConfig, EncoderParams
from .errors import DomainError, ShapeError
from .world import WorldModel

__all__ = [
    "write_pgm",
    "read_pgm",
    "save_world_json",
    "load_world_json",
    "save_checkpoint",
    "load_checkpoint",
    "write_json",
    "write_estimates_csv",
    "write_loss_csv",
    "write_grid_csv",
]

CHECKPOINT_MAGIC = "crossview-ckpt"
CHECKPOINT_VERSION = 1
WORLD_MAGIC = "crossview-world"

ESTIMATES_CSV_HEADER = ("t", "x", "y", "theta", "H_t", "lambda_t", "ess")
LOSS_CSV_HEADER = ("stage", "epoch", "train_loss", "val_loss", "lr")


def write_pgm(path, pixels: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255) from a [0, 1] float image."""
    px = np.asarray(pixels, dtype=float)
    if px.ndim != 2:
        raise ShapeError(f"PGM expects a 2-D image, got shape {px.shape}")
    if px.min() < 0.0 or px.max() > 1.0:
        raise DomainError("PGM pixels must lie in [0, 1]")
    data = np.round(px * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM back to floats in [0, 1]."""
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P5":
            raise DomainError(f"{path} is not a binary PGM (P5)")
        fields: list[int] = []
        while len(fields) < 3:
            line = f.readline()
            if not line:
                raise DomainError(f"truncated PGM header in {path}")
            text = line.split(b"#", 1)[0]
            fields.extend(int(v) for v in text.split())
        w, h, maxval = fields[:3]
        data = np.frombuffer(f.read(w * h), dtype=np.uint8).reshape(h, w)
    return data.astype(float) / float(maxval)


def write_json(obj, path) -> None:
    """Canonical JSON: sorted keys, indent 2, trailing newline."""
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def save_world_json(world: WorldModel, path) -> None:
    write_json({"magic": WORLD_MAGIC, **world.spec_dict()}, path)


def load_world_json(path) -> WorldModel:
    with open(path) as f:
        data = json.load(f)
    if data.get("magic") != WORLD_MAGIC:
        raise DomainError(f"{path} is not a world spec file")
    return WorldModel(
        seed=int(data["seed"]),
        extent_m=float(data["extent_m"]),
        num_seasons=int(data["num_seasons"]),
        sigma_season=float(data["sigma_season"]),
    )


def _pack(array: np.ndarray) -> dict:
    return {"shape": list(array.shape), "data": [float(v) for v in np.asarray(array).ravel()]}


def _unpack(entry: dict) -> np.ndarray:
    return np.array(entry["data"], dtype=float).reshape(entry["shape"])


def save_checkpoint(path, encoder: EncoderParams, mlp: QualityMlpParams | None, meta: dict | None = None) -> None:
    """Named-array JSON checkpoint; the frozen projection is stored as its seed."""
    cfg = encoder.config
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "encoder": {
            "frozen_seed": encoder.frozen_seed,
            "config": {
                "input_resolution": cfg.input_resolution,
                "proj_dim": cfg.proj_dim,
                "hidden_dim": cfg.hidden_dim,
                "embed_dim": cfg.embed_dim,
            },
            "arrays": {n: _pack(a) for n, a in encoder.alignment_parameters().items()},
        },
        "quality_mlp": None
        if mlp is None
        else {"embed_dim": mlp.embed_dim, "arrays": {n: _pack(a) for n, a in mlp.parameters().items()}},
        "meta": meta or {},
    }
    write_json(payload, path)


def load_checkpoint(path) -> tuple[EncoderParams, QualityMlpParams | None, dict]:
    with open(path) as f:
        data = json.load(f)
    if data.get("magic") != CHECKPOINT_MAGIC:
        raise DomainError(f"{path} is not a checkpoint file")
    if int(data.get("version", -1)) != CHECKPOINT_VERSION:
        raise DomainError(f"unsupported checkpoint version {data.get('version')!r}")
    enc = data["encoder"]
    cfg = EncoderConfig(**enc["config"])
    arrays = {n: _unpack(v) for n, v in enc["arrays"].items()}
    encoder = EncoderParams(cfg, enc["frozen_seed"], arrays["w1"], arrays["b1"], arrays["w2"], arrays["b2"])
    mlp = None
    if data.get("quality_mlp") is not None:
        m = data["quality_mlp"]
        ma = {n: _unpack(v) for n, v in m["arrays"].items()}
        mlp = QualityMlpParams(m["embed_dim"], ma["v1"], ma["c1"], ma["v2"], ma["c2"], ma["v3"], ma["c3"])
    return encoder, mlp, data.get("meta", {})


def _fmt(value) -> str:
    if value is None:
        return "nan"
    return repr(float(value))


def write_estimates_csv(path, rows: list[dict]) -> None:
    """Per-step estimates: t,x,y,theta,H_t,lambda_t,ess (missing entropy -> nan)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(ESTIMATES_CSV_HEADER)
        for r in rows:
            writer.writerow(
                [
                    _fmt(r["t"]), _fmt(r["x"]), _fmt(r["y"]), _fmt(r["theta"]),
                    _fmt(r.get("entropy")), _fmt(r.get("lambda")), _fmt(r.get("ess")),
                ]
            )


def write_loss_csv(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(LOSS_CSV_HEADER)
        for row in history:
            writer.writerow(
                [row["stage"], row["epoch"], _fmt(row["train_loss"]), _fmt(row["val_loss"]), _fmt(row["lr"])]
            )


def write_grid_csv(path, grid: np.ndarray) -> None:
    """A 2-D array as plain CSV rows (row 0 first), full float precision."""
    g = np.asarray(grid, dtype=float)
    if g.ndim != 2:
        raise ShapeError(f"grid must be 2-D, got {g.shape}")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in g:
            writer.writerow([repr(float(v)) for v in row])
