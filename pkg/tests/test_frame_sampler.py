"""Motion-informed frame selection against a brute-force oracle."""

import math

import numpy as np
import pytest

from crossview import DomainError, SamplerConfig, ShapeError, select_clip_frames
from crossview.errors import ConfigError


def oracle_select(pose_times, pose_xy, frame_times, now, cfg):
    """Exhaustive nearest-cumulative-distance search, written independently."""
    pose_times = np.asarray(pose_times, float)
    pose_xy = np.asarray(pose_xy, float)
    frame_times = np.asarray(frame_times, float)

    def window(lookback):
        return [i for i, t in enumerate(frame_times) if now - lookback <= t <= now]

    idx = window(cfg.t_max)
    if not idx:
        idx = window(2.0 * cfg.t_max)
        if not idx:
            raise DomainError("empty window")

    def cum(indices):
        pts = []
        for i in indices:
            t = frame_times[i]
            x = np.interp(t, pose_times, pose_xy[:, 0])
            y = np.interp(t, pose_times, pose_xy[:, 1])
            pts.append((x, y))
        c = [0.0]
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            c.append(c[-1] + math.hypot(x1 - x0, y1 - y0))
        return c

    c = cum(idx)
    if c[-1] < cfg.l_min:
        wider = window(2.0 * cfg.t_max)
        if len(wider) > len(idx):
            idx = wider
            c = cum(idx)

    latest = idx[-1]
    if cfg.num_frames == 1:
        return [latest]
    total = c[-1]
    if total < 1e-9:
        return [latest] * cfg.num_frames

    span = min(total, (cfg.num_frames - 1) * cfg.max_spacing)
    start = total - span
    picks = []
    for i in range(cfg.num_frames):
        target = start + span * i / (cfg.num_frames - 1)
        best, best_err = None, None
        for j, cj in zip(idx, c):  # exhaustive scan, earlier index wins ties
            err = abs(cj - target)
            if best is None or err < best_err:
                best, best_err = j, err
        picks.append(best)
    picks[-1] = latest
    return picks


def constant_speed_track(speed=1.0, fps=10.0, duration=10.0):
    t = np.arange(0.0, duration + 1e-9, 1.0 / fps)
    xy = np.stack([speed * t, np.zeros_like(t)], axis=1)
    return t, xy


class TestSpecExamples:
    def test_constant_velocity_time_uniform(self):
        # 1 m/s at 10 Hz over a 10 s window, N=5 -> times {0, 2.5, 5, 7.5, 10} s
        t, xy = constant_speed_track()
        cfg = SamplerConfig(num_frames=5, t_max=10.0, l_min=5.0, max_spacing=5.0)
        picks = select_clip_frames(t, xy, t, 10.0, cfg)
        np.testing.assert_allclose(t[picks], [0.0, 2.5, 5.0, 7.5, 10.0])

    def test_two_speed_profile(self):
        # 0.5 m/s for 5 s then 2 m/s for 5 s: L = 12.5 m, N = 3 and a
        # non-binding spacing cap -> targets {0, 6.25, 12.5} m.  Cumulative
        # distance 6.25 m is reached at t = 6.875 s; the nearest 10 Hz frame
        # by *distance* is t = 6.9 s (6.3 m vs 6.1 m at t = 6.8 s).
        fps = 10.0
        t = np.arange(0.0, 10.0 + 1e-9, 1.0 / fps)
        speed = np.where(t < 5.0, 0.5, 2.0)
        x = np.concatenate([[0.0], np.cumsum(speed[:-1] * np.diff(t))])
        xy = np.stack([x, np.zeros_like(x)], axis=1)
        cfg = SamplerConfig(num_frames=3, t_max=10.0, l_min=5.0, max_spacing=10.0)
        picks = select_clip_frames(t, xy, t, 10.0, cfg)
        np.testing.assert_allclose(t[picks], [0.0, 6.9, 10.0])

    def test_stationary_repeats_latest(self):
        t = np.arange(0.0, 10.1, 0.1)
        xy = np.full((t.size, 2), 3.25)
        cfg = SamplerConfig(num_frames=4)
        picks = select_clip_frames(t, xy, t, 10.0, cfg)
        assert picks == [t.size - 1] * 4


class TestRules:
    def test_single_frame_is_most_recent(self):
        t, xy = constant_speed_track()
        cfg = SamplerConfig(num_frames=1)
        assert select_clip_frames(t, xy, t, 10.0, cfg) == [t.size - 1]

    def test_max_spacing_restricts_to_trailing_arc(self):
        # 30 m in the window but (N-1)*max_spacing = 15 m: cover [15, 30] m.
        t, xy = constant_speed_track(speed=3.0)
        cfg = SamplerConfig(num_frames=4, t_max=10.0, l_min=5.0, max_spacing=5.0)
        picks = select_clip_frames(t, xy, t, 10.0, cfg)
        d = 3.0 * t[picks]
        step = 0.3  # meters per frame at 3 m/s, 10 Hz
        np.testing.assert_allclose(d, [15.0, 20.0, 25.0, 30.0], atol=step / 2)
        gaps = np.diff(d)
        assert np.all(gaps <= cfg.max_spacing + step)

    def test_short_arc_extends_lookback(self):
        # Almost no motion in the last 10 s, but plenty before: the window
        # should widen to 2*t_max and include the older, faster segment.
        t = np.arange(0.0, 20.1, 0.1)
        speed = np.where(t < 10.0, 2.0, 0.01)
        x = np.concatenate([[0.0], np.cumsum(speed[:-1] * np.diff(t))])
        xy = np.stack([x, np.zeros_like(x)], axis=1)
        cfg = SamplerConfig(num_frames=4, t_max=10.0, l_min=5.0, max_spacing=5.0)
        picks = select_clip_frames(t, xy, t, 20.0, cfg)
        assert t[picks[0]] < 10.0

    def test_window_excludes_future_frames(self):
        t, xy = constant_speed_track(duration=20.0)
        cfg = SamplerConfig(num_frames=3, t_max=5.0)
        picks = select_clip_frames(t, xy, t, 10.0, cfg)
        assert all(5.0 - 1e-9 <= t[i] <= 10.0 + 1e-9 for i in picks)
        assert t[picks[-1]] == 10.0

    def test_empty_window_raises(self):
        t, xy = constant_speed_track()
        cfg = SamplerConfig(num_frames=3, t_max=2.0)
        with pytest.raises(DomainError):
            select_clip_frames(t, xy, t, 100.0, cfg)

    def test_shape_validation(self):
        t, xy = constant_speed_track()
        with pytest.raises(ShapeError):
            select_clip_frames(t, xy[:-1], t, 10.0, SamplerConfig())
        with pytest.raises(ShapeError):
            select_clip_frames(t, xy, [], 10.0, SamplerConfig())

    def test_unsorted_frames_raise(self):
        t, xy = constant_speed_track()
        with pytest.raises(DomainError):
            select_clip_frames(t, xy, t[::-1], 10.0, SamplerConfig())

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SamplerConfig(num_frames=0)
        with pytest.raises(ConfigError):
            SamplerConfig(max_spacing=0.0)


class TestOracleEquivalence:
    def test_random_speed_profiles_match_oracle(self):
        rng = np.random.default_rng(7)
        for trial in range(60):
            fps = rng.uniform(2.0, 12.0)
            duration = rng.uniform(8.0, 30.0)
            t = np.arange(0.0, duration, 1.0 / fps)
            # piecewise-constant random speeds, occasionally zero (idling)
            speeds = rng.uniform(0.0, 3.0, size=t.size - 1)
            speeds[rng.uniform(size=speeds.size) < 0.2] = 0.0
            heading = np.cumsum(rng.normal(0.0, 0.2, size=t.size - 1))
            dt = np.diff(t)
            dx = speeds * np.cos(heading) * dt
            dy = speeds * np.sin(heading) * dt
            xy = np.zeros((t.size, 2))
            xy[1:, 0] = np.cumsum(dx)
            xy[1:, 1] = np.cumsum(dy)
            cfg = SamplerConfig(
                num_frames=int(rng.integers(1, 7)),
                t_max=float(rng.uniform(3.0, 12.0)),
                l_min=float(rng.uniform(1.0, 8.0)),
                max_spacing=float(rng.uniform(2.0, 8.0)),
            )
            now = float(rng.uniform(t[0], t[-1]))
            if not np.any((t >= now - 2.0 * cfg.t_max) & (t <= now)):
                continue
            got = select_clip_frames(t, xy, t, now, cfg)
            want = oracle_select(t, xy, t, now, cfg)
            assert got == want, f"trial {trial}: {got} != {want}"

    def test_selected_indices_nondecreasing(self):
        rng = np.random.default_rng(11)
        t = np.arange(0.0, 15.0, 0.25)
        for _ in range(20):
            speeds = rng.uniform(0.0, 2.5, size=t.size - 1)
            x = np.concatenate([[0.0], np.cumsum(speeds * np.diff(t))])
            xy = np.stack([x, np.zeros_like(x)], axis=1)
            picks = select_clip_frames(t, xy, t, 15.0 - 0.25, SamplerConfig())
            assert all(a <= b for a, b in zip(picks, picks[1:]))
