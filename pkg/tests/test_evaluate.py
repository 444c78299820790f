"""Tests for trajectory metrics and the single-frame likelihood map."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossview import (
    ConfigError,
    DomainError,
    Pose,
    ShapeError,
    StampedPose,
    Trajectory,
    WorldModel,
    associate,
    ate,
    compute_metrics,
    likelihood_map,
    render_aerial_patch,
    sdr,
    success_rate,
)


def _traj(points, t0: float = 0.0, dt: float = 1.0) -> Trajectory:
    return Trajectory(
        [
            StampedPose(t0 + i * dt, Pose(float(x), float(y), 0.0))
            for i, (x, y) in enumerate(points)
        ]
    )


def _traj_at(times, points) -> Trajectory:
    return Trajectory(
        [StampedPose(float(t), Pose(float(x), float(y), 0.0)) for t, (x, y) in zip(times, points)]
    )


class TestAssociate:
    def test_identical_stamps(self) -> None:
        gt = _traj([(0, 0), (1, 0), (2, 0)])
        ip, ig = associate(gt, gt)
        np.testing.assert_array_equal(ip, [0, 1, 2])
        np.testing.assert_array_equal(ig, [0, 1, 2])

    def test_nearest_stamp_selected(self) -> None:
        gt = _traj([(0, 0), (1, 0), (2, 0)])
        pred = _traj_at([0.1, 0.9, 2.04], [(0, 0), (0, 0), (0, 0)])
        _, ig = associate(pred, gt)
        np.testing.assert_array_equal(ig, [0, 1, 2])

    def test_equidistant_prefers_earlier(self) -> None:
        gt = _traj([(0, 0), (1, 0)])
        pred = _traj_at([0.5], [(0, 0)])
        _, ig = associate(pred, gt)
        np.testing.assert_array_equal(ig, [0])

    def test_gap_beyond_tolerance_rejected(self) -> None:
        gt = _traj([(0, 0), (1, 0), (2, 0)])  # tol = 0.5
        pred = _traj_at([2.6], [(0, 0)])
        with pytest.raises(DomainError):
            associate(pred, gt)


class TestAte:
    def test_identical_is_zero(self) -> None:
        t = _traj([(0, 0), (1, 1), (2, 2)])
        assert ate(t, t) == (0.0, 0.0)

    def test_constant_offset(self) -> None:
        gt = _traj([(0, 0), (10, 0), (20, 0)])
        pred = _traj([(3, 4), (13, 4), (23, 4)])
        mean_err, max_err = ate(pred, gt)
        assert mean_err == pytest.approx(5.0)
        assert max_err == pytest.approx(5.0)

    def test_single_outlier(self) -> None:
        gt = _traj([(0, 0), (1, 0), (2, 0)])
        pred = _traj([(0, 0), (1, 0), (7, 12)])  # error 13 on the last frame
        mean_err, max_err = ate(pred, gt)
        assert mean_err == pytest.approx(13.0 / 3.0)
        assert max_err == pytest.approx(13.0)


class TestSdr:
    def test_identical_is_zero(self) -> None:
        t = _traj([(0, 0), (3, 4), (6, 8)])
        assert sdr(t, t) == 0.0

    def test_double_length_is_hundred_percent(self) -> None:
        gt = _traj([(0, 0), (10, 0)])
        pred = _traj([(0, 0), (20, 0)])
        assert sdr(pred, gt) == pytest.approx(100.0)

    def test_shrunken_path(self) -> None:
        gt = _traj([(0, 0), (10, 0)])
        pred = _traj([(0, 0), (9, 0)])
        assert sdr(pred, gt) == pytest.approx(10.0)

    def test_too_short_rejected(self) -> None:
        one = _traj([(0, 0)])
        with pytest.raises(DomainError):
            sdr(one, one)


class TestSuccessRate:
    def test_counts_per_threshold(self) -> None:
        gt = _traj([(0, 0), (0, 0), (0, 0), (0, 0)])
        pred = _traj([(0, 0), (3, 0), (0, 4), (12, 0)])
        rates = success_rate(pred, gt, [5.0, 10.0, 25.0])
        assert rates[5.0] == pytest.approx(75.0)
        assert rates[10.0] == pytest.approx(75.0)
        assert rates[25.0] == pytest.approx(100.0)

    def test_invalid_thresholds_rejected(self) -> None:
        t = _traj([(0, 0), (1, 0)])
        with pytest.raises(ConfigError):
            success_rate(t, t, [])
        with pytest.raises(ConfigError):
            success_rate(t, t, [-5.0])

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_property_monotone_in_threshold(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        n = 12
        gt_pts = rng.uniform(0, 100, (n, 2))
        pred_pts = gt_pts + rng.normal(0, 10, (n, 2))
        gt = _traj(gt_pts)
        pred = _traj(pred_pts)
        rates = success_rate(pred, gt, [1.0, 5.0, 25.0, 125.0])
        vals = [rates[t] for t in (1.0, 5.0, 25.0, 125.0)]
        assert vals == sorted(vals)
        assert all(0.0 <= v <= 100.0 for v in vals)


class TestComputeMetrics:
    def test_report_fields_and_serialization(self) -> None:
        gt = _traj([(0, 0), (10, 0), (20, 0)])
        pred = _traj([(0, 1), (10, 1), (20, 1)])
        report = compute_metrics(pred, gt, thresholds=(0.5, 2.0))
        assert report.ate_mean == pytest.approx(1.0)
        assert report.ate_max == pytest.approx(1.0)
        assert report.sdr_percent == pytest.approx(0.0)
        assert report.num_frames == 3
        d = report.to_dict()
        assert d["success_rates"] == {"0.5": 0.0, "2.0": 100.0}
        assert set(d) == {"ate_mean", "ate_max", "sdr_percent", "success_rates", "num_frames"}


@pytest.fixture(scope="module")
def map_world():
    return WorldModel(2, 200.0, 1)


CENTER = Pose(100.0, 100.0, 0.7)


def _ravel_index_matcher(scores_by_index: np.ndarray):
    """Matcher that ignores pixels and scores cells by their grid ravel order."""
    state = {"cursor": 0}

    def matcher(px: np.ndarray) -> np.ndarray:
        k = px.shape[0]
        out = scores_by_index[state["cursor"] : state["cursor"] + k]
        state["cursor"] += k
        return out

    return matcher


class TestLikelihoodMap:
    def test_query_sits_on_cell_center_even_grid(self, map_world) -> None:
        lm = likelihood_map(map_world, CENTER, 0, 0.7, lambda px: px.mean(axis=(1, 2)))
        assert lm.cell_size_m == pytest.approx(5.0)
        assert lm.grid.shape == (30, 30)
        assert lm.oob_count == 0
        row, col = lm.gt_cell
        # Reconstruct that cell's center and check it equals the query position.
        iy = 29 - row
        ox = CENTER.x - 75.0 + 2.5
        oy = CENTER.y - 75.0 + 2.5
        assert ox + (col + 0.5) * 5.0 == pytest.approx(CENTER.x, abs=1e-9)
        assert oy + (iy + 0.5) * 5.0 == pytest.approx(CENTER.y, abs=1e-9)

    def test_query_sits_on_cell_center_odd_grid(self, map_world) -> None:
        lm = likelihood_map(
            map_world, CENTER, 0, 0.7, lambda px: px.mean(axis=(1, 2)), grid_size=31
        )
        cell = 150.0 / 31.0
        row, col = lm.gt_cell
        iy = 30 - row
        ox = CENTER.x - 75.0  # no half-cell shift needed when the count is odd
        oy = CENTER.y - 75.0
        assert ox + (col + 0.5) * cell == pytest.approx(CENTER.x, abs=1e-9)
        assert oy + (iy + 0.5) * cell == pytest.approx(CENTER.y, abs=1e-9)

    def test_rank_percentile_arithmetic(self, map_world) -> None:
        g = 30
        scores = np.linspace(0.0, 1.0, g * g)
        lm = likelihood_map(map_world, CENTER, 0, 0.7, _ravel_index_matcher(scores))
        row, col = lm.gt_cell
        iy = (g - 1) - row
        gt_flat = iy * g + col
        better = (g * g - 1) - gt_flat  # strictly larger scores
        expected = 100.0 * (better + 1.0) / (g * g)
        assert lm.gt_rank_percentile == pytest.approx(expected, abs=1e-12)

    def test_best_cell_gets_percentile_floor_and_peak_value(self, map_world) -> None:
        g = 30
        probe = likelihood_map(map_world, CENTER, 0, 0.7, lambda px: px.mean(axis=(1, 2)))
        row, col = probe.gt_cell
        gt_flat = ((g - 1) - row) * g + col
        scores = np.zeros(g * g)
        scores[gt_flat] = 1.0
        lm = likelihood_map(map_world, CENTER, 0, 0.7, _ravel_index_matcher(scores))
        assert lm.gt_rank_percentile == pytest.approx(100.0 / (g * g))
        assert lm.grid[row, col] == 1.0
        assert lm.grid.min() == 0.0

    def test_flat_scores_normalize_to_half(self, map_world) -> None:
        lm = likelihood_map(map_world, CENTER, 0, 0.7, lambda px: np.ones(px.shape[0]))
        np.testing.assert_allclose(lm.grid, 0.5)
        # All-tied ranking: average rank (G^2 + 1) / 2.
        assert lm.gt_rank_percentile == pytest.approx(100.0 * (900 + 1) / 2.0 / 900.0)

    def test_north_flip_orientation(self, map_world) -> None:
        g = 30
        scores = np.arange(g * g, dtype=float)
        lm = likelihood_map(map_world, CENTER, 0, 0.7, _ravel_index_matcher(scores))
        # Ravel order runs south-to-north, so the largest raw score lands in
        # the top (north) row after the flip.
        assert lm.grid[0].max() == 1.0
        assert lm.grid[-1].min() == 0.0

    def test_rank_invariant_under_monotone_transform(self, map_world) -> None:
        base = lambda px: px.mean(axis=(1, 2))
        warped = lambda px: np.exp(3.0 * px.mean(axis=(1, 2)) + 1.0)
        a = likelihood_map(map_world, CENTER, 0, 0.7, base)
        b = likelihood_map(map_world, CENTER, 0, 0.7, warped)
        assert a.gt_rank_percentile == b.gt_rank_percentile
        assert a.gt_cell == b.gt_cell

    def test_patches_rendered_at_orientation_prior(self, map_world) -> None:
        captured = {}

        def matcher(px: np.ndarray) -> np.ndarray:
            captured["px"] = px.copy()
            return px.mean(axis=(1, 2))

        prior = 1.1
        lm = likelihood_map(map_world, CENTER, 0, prior, matcher)
        assert lm.orientation_prior == prior
        row, col = lm.gt_cell
        gt_flat = (29 - row) * 30 + col  # all cells valid, so flat index holds
        expected = render_aerial_patch(map_world, Pose(CENTER.x, CENTER.y, prior), 0, 20.0, 32)
        np.testing.assert_array_equal(captured["px"][gt_flat], expected.pixels)

    def test_out_of_bounds_cells_counted_and_scored_zero(self, map_world) -> None:
        near_corner = Pose(30.0, 30.0, 0.0)
        lm = likelihood_map(map_world, near_corner, 0, 0.0, lambda px: px.mean(axis=(1, 2)) + 1.0)
        assert 0 < lm.oob_count < 900
        assert np.isfinite(lm.grid).all()
        # The zero-scored out-of-bounds cells pin the normalized minimum.
        assert lm.grid.min() == 0.0

    def test_invalid_config_rejected(self, map_world) -> None:
        with pytest.raises(ConfigError):
            likelihood_map(map_world, CENTER, 0, 0.0, lambda px: px.mean(axis=(1, 2)), grid_size=1)
        with pytest.raises(ConfigError):
            likelihood_map(map_world, CENTER, 0, 0.0, lambda px: px.mean(axis=(1, 2)), map_side_m=0.0)

    def test_bad_matcher_shape_rejected(self, map_world) -> None:
        with pytest.raises(ShapeError):
            likelihood_map(map_world, CENTER, 0, 0.0, lambda px: np.zeros((2, 2)))
