"""Tests for file formats: PGM images, JSON worlds/checkpoints, CSV logs."""

from __future__ import annotations

import json

import numpy as np
import pytest

from crossview import (
    DomainError,
    EncoderConfig,
    ShapeError,
    WorldModel,
    encode_batch,
    init_encoder,
    init_quality_mlp,
    load_checkpoint,
    save_checkpoint,
)
from crossview.io import (
    ESTIMATES_CSV_HEADER,
    load_world_json,
    read_pgm,
    save_world_json,
    write_estimates_csv,
    write_grid_csv,
    write_json,
    write_loss_csv,
    write_pgm,
)


class TestPgm:
    def test_round_trip_quantized(self, tmp_path) -> None:
        px = np.array([[0.0, 0.5, 1.0], [0.25, 0.75, 0.1]])
        path = tmp_path / "img.pgm"
        write_pgm(path, px)
        back = read_pgm(path)
        np.testing.assert_allclose(back, np.round(px * 255.0) / 255.0, atol=1e-12)

    def test_header_bytes(self, tmp_path) -> None:
        path = tmp_path / "img.pgm"
        write_pgm(path, np.zeros((2, 3)))
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n3 2\n255\n")
        assert len(raw) == len(b"P5\n3 2\n255\n") + 6

    def test_deterministic_bytes(self, tmp_path) -> None:
        px = np.random.default_rng(0).uniform(0, 1, (16, 16))
        a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
        write_pgm(a, px)
        write_pgm(b, px)
        assert a.read_bytes() == b.read_bytes()

    def test_comment_lines_in_header(self, tmp_path) -> None:
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
        np.testing.assert_allclose(read_pgm(path), [[0.0, 1.0]])

    def test_rejects_bad_inputs(self, tmp_path) -> None:
        with pytest.raises(ShapeError):
            write_pgm(tmp_path / "x.pgm", np.zeros((2, 2, 2)))
        with pytest.raises(DomainError):
            write_pgm(tmp_path / "x.pgm", np.full((2, 2), 1.5))
        bad = tmp_path / "bad.pgm"
        bad.write_bytes(b"P2\n2 2\n255\n")
        with pytest.raises(DomainError):
            read_pgm(bad)


class TestJsonWriters:
    def test_canonical_key_order(self, tmp_path) -> None:
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_json({"z": 1, "a": 2}, a)
        write_json({"a": 2, "z": 1}, b)
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().endswith("\n")

    def test_world_round_trip(self, tmp_path) -> None:
        world = WorldModel(7, 250.0, 2, sigma_season=0.1)
        path = tmp_path / "world.json"
        save_world_json(world, path)
        back = load_world_json(path)
        assert back.spec_dict() == world.spec_dict()
        pts = np.array([[10.0, 20.0], [100.0, 200.0]])
        np.testing.assert_array_equal(
            back.sample_appearance(pts, 1), world.sample_appearance(pts, 1)
        )

    def test_world_wrong_magic_rejected(self, tmp_path) -> None:
        path = tmp_path / "notworld.json"
        write_json({"magic": "something-else", "seed": 0}, path)
        with pytest.raises(DomainError):
            load_world_json(path)


class TestCheckpoint:
    def test_full_round_trip(self, tmp_path) -> None:
        cfg = EncoderConfig(input_resolution=8, proj_dim=20, hidden_dim=10, embed_dim=6)
        encoder = init_encoder(5, cfg)
        mlp = init_quality_mlp(seed=9, embed_dim=6)
        path = tmp_path / "model.json"
        save_checkpoint(path, encoder, mlp, meta={"note": "round trip"})
        enc2, mlp2, meta = load_checkpoint(path)
        assert meta == {"note": "round trip"}
        assert enc2.config == cfg
        for name in encoder.ALIGNMENT_NAMES:
            np.testing.assert_array_equal(getattr(encoder, name), getattr(enc2, name))
        for name in mlp.NAMES:
            np.testing.assert_array_equal(getattr(mlp, name), getattr(mlp2, name))
        patch = np.random.default_rng(1).uniform(0, 1, (3, 8, 8))
        np.testing.assert_array_equal(encode_batch(encoder, patch), encode_batch(enc2, patch))

    def test_mlp_optional(self, tmp_path) -> None:
        encoder = init_encoder(5, EncoderConfig(8, 20, 10, 6))
        path = tmp_path / "enc.json"
        save_checkpoint(path, encoder, None)
        _, mlp, meta = load_checkpoint(path)
        assert mlp is None
        assert meta == {}

    def test_deterministic_bytes(self, tmp_path) -> None:
        encoder = init_encoder(5, EncoderConfig(8, 20, 10, 6))
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_checkpoint(a, encoder, None)
        save_checkpoint(b, encoder, None)
        assert a.read_bytes() == b.read_bytes()

    def test_wrong_magic_and_version_rejected(self, tmp_path) -> None:
        path = tmp_path / "bad.json"
        write_json({"magic": "nope"}, path)
        with pytest.raises(DomainError):
            load_checkpoint(path)
        encoder = init_encoder(5, EncoderConfig(8, 20, 10, 6))
        good = tmp_path / "good.json"
        save_checkpoint(good, encoder, None)
        data = json.loads(good.read_text())
        data["version"] = 99
        write_json(data, path)
        with pytest.raises(DomainError):
            load_checkpoint(path)


class TestCsvWriters:
    def test_estimates_header_and_nan(self, tmp_path) -> None:
        path = tmp_path / "est.csv"
        rows = [
            {"t": 0.0, "x": 1.0, "y": 2.0, "theta": 0.5, "entropy": 3.5, "lambda": 17.0, "ess": 250.0},
            {"t": 0.5, "x": 1.5, "y": 2.5, "theta": 0.6},
        ]
        write_estimates_csv(path, rows)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(ESTIMATES_CSV_HEADER)
        assert lines[1] == "0.0,1.0,2.0,0.5,3.5,17.0,250.0"
        assert lines[2] == "0.5,1.5,2.5,0.6,nan,nan,nan"

    def test_loss_rows(self, tmp_path) -> None:
        path = tmp_path / "loss.csv"
        write_loss_csv(
            path,
            [{"stage": 1, "epoch": 1, "train_loss": 0.25, "val_loss": 0.5, "lr": 1e-3}],
        )
        lines = path.read_text().splitlines()
        assert lines[0] == "stage,epoch,train_loss,val_loss,lr"
        assert lines[1] == "1,1,0.25,0.5,0.001"

    def test_grid_full_precision_round_trip(self, tmp_path) -> None:
        grid = np.random.default_rng(2).standard_normal((4, 5))
        path = tmp_path / "grid.csv"
        write_grid_csv(path, grid)
        back = np.array(
            [[float(v) for v in line.split(",")] for line in path.read_text().splitlines()]
        )
        np.testing.assert_array_equal(back, grid)

    def test_grid_must_be_2d(self, tmp_path) -> None:
        with pytest.raises(ShapeError):
            write_grid_csv(tmp_path / "g.csv", np.zeros(5))
