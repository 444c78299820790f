"""World construction, renderers, augmentation, and trajectory generation."""

import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from crossview import (
    AugmentationParams,
    ConfigError,
    DomainError,
    GroundClip,
    ImagePatch,
    OutOfBoundsError,
    Pose,
    ShapeError,
    StampedPose,
    WorldModel,
    apply_augmentation,
    build_world,
    generate_trajectory,
    render_aerial_patch,
    render_aerial_patches,
    render_ground_clip,
    sample_augmentation_params,
)


@pytest.fixture(scope="module")
def world():
    return build_world(seed=7, extent_m=150.0, num_seasons=3)


def probe_points(extent, n=100, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.1 * extent, 0.9 * extent, size=(n, 2))


class TestBuildWorld:
    def test_same_seed_identical_at_probe_points(self, world):
        again = build_world(seed=7, extent_m=150.0, num_seasons=3)
        pts = probe_points(150.0)
        np.testing.assert_array_equal(world.sample_structure(pts), again.sample_structure(pts))
        for s in range(3):
            np.testing.assert_array_equal(
                world.sample_appearance(pts, s), again.sample_appearance(pts, s)
            )

    def test_different_seeds_differ(self, world):
        other = build_world(seed=8, extent_m=150.0, num_seasons=3)
        pts = probe_points(150.0)
        assert np.any(world.sample_structure(pts) != other.sample_structure(pts))

    def test_structure_is_nonconstant(self, world):
        pts = probe_points(150.0, n=400)
        assert world.sample_structure(pts).var() > 1e-3

    def test_single_season_world(self):
        w = build_world(seed=1, extent_m=100.0, num_seasons=1)
        assert w.num_seasons == 1
        pts = probe_points(100.0, n=10)
        assert w.sample_appearance(pts, 0).shape == (10,)

    def test_zero_seasons_rejected(self):
        with pytest.raises(ConfigError):
            build_world(seed=1, extent_m=100.0, num_seasons=0)

    def test_unknown_season_rejected(self, world):
        with pytest.raises(ConfigError):
            world.sample_appearance(probe_points(150.0, n=4), season=3)

    def test_seasons_share_structure_but_differ_in_appearance(self, world):
        pts = probe_points(150.0)
        a0 = world.sample_appearance(pts, 0)
        a1 = world.sample_appearance(pts, 1)
        assert np.any(a0 != a1)

    def test_appearance_in_unit_interval(self, world):
        pts = probe_points(150.0, n=500)
        for s in range(3):
            a = world.sample_appearance(pts, s)
            assert a.min() >= 0.0 and a.max() <= 1.0


class TestAerialPatch:
    def test_meters_per_pixel(self, world):
        p = render_aerial_patch(world, Pose(75.0, 75.0, 0.3), 0, side_m=20.0, resolution=32)
        assert p.meters_per_pixel == pytest.approx(0.625)
        assert p.shape == (32, 32)

    def test_zero_heading_matches_direct_sampling(self, world):
        side, res = 20.0, 16
        pose = Pose(70.0, 80.0, 0.0)
        p = render_aerial_patch(world, pose, 1, side_m=side, resolution=res)
        mpp = side / res
        # heading east, heading-up convention: rows advance east, columns south
        fwd = side / 2.0 - (np.arange(res) + 0.5) * mpp
        right = (np.arange(res) + 0.5) * mpp - side / 2.0
        xx = pose.x + fwd[:, None] + np.zeros(res)[None, :]
        yy = pose.y + np.zeros(res)[:, None] - right[None, :]
        want = world.sample_appearance(np.stack([xx, yy], axis=-1), 1)
        np.testing.assert_allclose(p.pixels, want, atol=1e-12)

    def test_heading_equivariance_quarter_turn(self, world):
        pose = Pose(75.0, 75.0, 0.4)
        base = render_aerial_patch(world, pose, 0)
        turned = render_aerial_patch(world, Pose(pose.x, pose.y, pose.theta + math.pi / 2.0), 0)
        diff = np.abs(turned.pixels - np.rot90(base.pixels, k=-1))
        assert diff.mean() < 0.02

    def test_out_of_bounds_raises(self, world):
        with pytest.raises(OutOfBoundsError):
            render_aerial_patch(world, Pose(5.0, 75.0, 0.0), 0, side_m=20.0)

    def test_determinism(self, world):
        pose = Pose(60.0, 60.0, -1.2)
        a = render_aerial_patch(world, pose, 2)
        b = render_aerial_patch(world, pose, 2)
        np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_batch_matches_single(self, world):
        poses = [Pose(60.0, 60.0, 0.2), Pose(80.0, 70.0, -2.0), Pose(75.0, 90.0, 1.1)]
        xs = np.array([p.x for p in poses])
        ys = np.array([p.y for p in poses])
        ths = np.array([p.theta for p in poses])
        pixels, valid = render_aerial_patches(world, xs, ys, ths, 0)
        assert valid.all()
        for i, p in enumerate(poses):
            np.testing.assert_array_equal(pixels[i], render_aerial_patch(world, p, 0).pixels)

    def test_batch_flags_out_of_bounds_rows(self, world):
        xs = np.array([75.0, 2.0])
        ys = np.array([75.0, 75.0])
        ths = np.zeros(2)
        pixels, valid = render_aerial_patches(world, xs, ys, ths, 0)
        assert valid.tolist() == [True, False]
        assert np.all(pixels[1] == 0.0)

    def test_season_persistence_beats_displacement(self, world):
        # structure is shared across seasons: after inverting the tone curve,
        # two seasons at one pose agree better than two poses 30 m apart.
        pose = Pose(70.0, 75.0, 0.7)
        far = Pose(100.0, 75.0, 0.7)
        p0 = render_aerial_patch(world, pose, 0).pixels
        p1 = render_aerial_patch(world, pose, 1).pixels
        q0 = render_aerial_patch(world, far, 0).pixels
        inv0 = world.invert_tone(0, p0).ravel()
        inv1 = world.invert_tone(1, p1).ravel()
        invq = world.invert_tone(0, q0).ravel()
        same_place = spearmanr(inv0, inv1).statistic
        far_place = spearmanr(inv0, invq).statistic
        assert same_place > far_place
        assert same_place > 0.9


class TestGroundClip:
    def _poses(self, n=3, x0=60.0):
        return [StampedPose(0.5 * i, Pose(x0 + 2.0 * i, 70.0, 0.0)) for i in range(n)]

    def test_frame_count_and_alignment(self, world):
        clip = render_ground_clip(world, self._poses(4), 0, rng_seed=1)
        assert len(clip) == 4
        assert clip.frame_poses[2].x == pytest.approx(64.0)

    def test_determinism_with_noise(self, world):
        a = render_ground_clip(world, self._poses(), 0, noise_sigma=0.05, rng_seed=3)
        b = render_ground_clip(world, self._poses(), 0, noise_sigma=0.05, rng_seed=3)
        for fa, fb in zip(a.frames, b.frames):
            np.testing.assert_array_equal(fa.pixels, fb.pixels)

    def test_noise_free_repeatability_same_pose(self, world):
        poses = [self._poses(1)[0], self._poses(1)[0]]
        clip = render_ground_clip(world, poses, 0, noise_sigma=0.0, rng_seed=9)
        np.testing.assert_array_equal(clip.frames[0].pixels, clip.frames[1].pixels)

    def test_nearby_views_correlate_more_than_distant(self, world):
        p0 = [StampedPose(0.0, Pose(60.0, 70.0, 0.0))]
        p1 = [StampedPose(0.0, Pose(61.0, 70.0, 0.0))]
        p2 = [StampedPose(0.0, Pose(110.0, 70.0, 0.0))]
        f0, f1, f2 = (
            render_ground_clip(world, p, 0, noise_sigma=0.0).frames[0].pixels.ravel()
            for p in (p0, p1, p2)
        )
        near = np.corrcoef(f0, f1)[0, 1]
        far = np.corrcoef(f0, f2)[0, 1]
        assert near > far

    def test_out_of_bounds_raises(self, world):
        with pytest.raises(OutOfBoundsError):
            render_ground_clip(world, [StampedPose(0.0, Pose(145.0, 75.0, 0.0))], 0)

    def test_empty_poses_raise(self, world):
        with pytest.raises(ShapeError):
            render_ground_clip(world, [], 0)

    def test_getitem(self, world):
        clip = render_ground_clip(world, self._poses(2), 0)
        assert clip.frames[1].shape == (32, 32)


class TestAugmentation:
    def _patch(self, value=0.25):
        return ImagePatch(np.full((8, 8), value), 1.0)

    def test_identity_returns_unchanged(self):
        p = self._patch()
        out = apply_augmentation(p, AugmentationParams())
        np.testing.assert_array_equal(out.pixels, p.pixels)

    def test_brightness_doubles_quarter_to_half(self):
        # contrast is applied about 0.5 first; with contrast=1 it is a no-op
        out = apply_augmentation(self._patch(0.25), AugmentationParams(brightness=2.0))
        np.testing.assert_allclose(out.pixels, 0.5)

    def test_output_clamped(self):
        out = apply_augmentation(self._patch(0.9), AugmentationParams(brightness=2.0))
        assert out.pixels.max() <= 1.0

    def test_crop_resizes_back_to_input_shape(self):
        rng = np.random.default_rng(0)
        p = ImagePatch(rng.uniform(size=(16, 16)), 1.0)
        out = apply_augmentation(p, AugmentationParams(crop_fraction=0.85, crop_offset=(1, 2)))
        assert out.shape == (16, 16)
        assert np.any(out.pixels != p.pixels)

    def test_invalid_params_rejected(self):
        with pytest.raises(DomainError):
            AugmentationParams(brightness=0.0)
        with pytest.raises(DomainError):
            AugmentationParams(contrast=-1.0)
        with pytest.raises(DomainError):
            AugmentationParams(crop_fraction=0.5)
        with pytest.raises(DomainError):
            AugmentationParams(crop_offset=(-1, 0))

    def test_oversized_crop_offset_rejected(self):
        with pytest.raises(DomainError):
            apply_augmentation(
                self._patch(), AugmentationParams(crop_fraction=0.9, crop_offset=(5, 5))
            )

    def test_sampled_params_always_valid(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            params = sample_augmentation_params(rng, 32, 32)
            out = apply_augmentation(ImagePatch(np.full((32, 32), 0.5), 1.0), params)
            assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0


class TestGenerateTrajectory:
    def test_arc_length_within_one_percent(self, world):
        t = generate_trajectory(world, seed=3, length_m=300.0, margin_m=25.0)
        assert abs(t.arc_length() - 300.0) <= 3.0

    def test_constant_speed_steps(self, world):
        t = generate_trajectory(
            world, seed=5, length_m=120.0, speed_range=(1.0, 1.0), dt=0.1, margin_m=25.0
        )
        steps = np.hypot(*np.diff(t.positions(), axis=0).T)
        np.testing.assert_allclose(steps, 0.1, atol=1e-9)

    def test_determinism(self, world):
        a = generate_trajectory(world, seed=11, length_m=200.0, margin_m=25.0)
        b = generate_trajectory(world, seed=11, length_m=200.0, margin_m=25.0)
        np.testing.assert_array_equal(a.positions(), b.positions())
        np.testing.assert_array_equal(a.headings(), b.headings())

    def test_stays_within_margin(self, world):
        t = generate_trajectory(world, seed=2, length_m=400.0, margin_m=30.0)
        xy = t.positions()
        assert xy.min() >= 30.0 - 1e-9
        assert xy.max() <= 120.0 + 1e-9

    def test_bad_configs_rejected(self, world):
        with pytest.raises(ConfigError):
            generate_trajectory(world, seed=0, length_m=-5.0)
        with pytest.raises(ConfigError):
            generate_trajectory(world, seed=0, length_m=100.0, speed_range=(2.0, 1.0))
        with pytest.raises(ConfigError):
            generate_trajectory(world, seed=0, length_m=100.0, dt=0.0)
        with pytest.raises(ConfigError):
            generate_trajectory(world, seed=0, length_m=100.0, margin_m=80.0)
        with pytest.raises(ConfigError):
            # one step can overshoot the 1% arc tolerance
            generate_trajectory(world, seed=0, length_m=100.0, speed_range=(2.5, 2.5), dt=0.5)


class TestContainers:
    def test_image_patch_validation(self):
        with pytest.raises(ShapeError):
            ImagePatch(np.zeros((2, 8)), 1.0)
        with pytest.raises(DomainError):
            ImagePatch(np.full((8, 8), 1.5), 1.0)
        with pytest.raises(DomainError):
            ImagePatch(np.full((8, 8), np.nan), 1.0)
        with pytest.raises(DomainError):
            ImagePatch(np.zeros((8, 8)), 0.0)

    def test_ground_clip_validation(self):
        patch = ImagePatch(np.zeros((8, 8)), 1.0)
        with pytest.raises(ShapeError):
            GroundClip([], [])
        with pytest.raises(ShapeError):
            GroundClip([patch], [])

    def test_appearance_grid_row_zero_is_north(self):
        w = build_world(seed=3, extent_m=100.0, num_seasons=1)
        grid = w.appearance_grid(0, resolution=64)
        # row 0 samples y = extent (north edge)
        north = w.sample_appearance(np.array([[0.0, 100.0]]), 0)[0]
        assert grid[0, 0] == pytest.approx(north)
