"""Command-line entry point.

Subcommands cover the full pipeline: ``sim-world``, ``gen-traj``, ``train``,
``localize``, ``frame-localize``, ``eval``.  Every run is reproducible from
(config, seed); report-producing paths render matplotlib figures next to the
CSV/JSON/PGM outputs (disable with ``--no-figures``).

Exit codes: 0 success, 1 runtime failure, 2 bad usage or configuration.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import figures
from .aggregation import AggregationConfig
from .config import RunConfig, load_config
from .core import load_trajectory_csv, save_trajectory_csv
from .encoder import EncoderConfig
from .errors import ConfigError
from .evaluate import associate, compute_metrics, likelihood_map
from .frame_sampler import select_clip_frames
from .io import (
    load_checkpoint,
    load_world_json,
    save_checkpoint,
    save_world_json,
    write_estimates_csv,
    write_grid_csv,
    write_json,
    write_loss_csv,
    write_pgm,
)
from .pipeline import _S_OBS, make_clip_matcher, run_localization
from .training import train_model
from .world import WorldModel, generate_trajectory, render_ground_clip

__all__ = ["main", "build_parser"]


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None, help="top-level RNG seed (overrides config)")
    sub.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    sub.add_argument("--out-dir", type=Path, default=Path("."), help="directory for outputs")
    sub.add_argument("--no-figures", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossview",
        description="Cross-view localization on a synthetic multi-season world.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser(
        "sim-world",
        help="synthesize a world and write its spec + season previews",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_common(p)

    p = subs.add_parser(
        "gen-traj",
        help="generate a bounded-curvature trajectory inside a world",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("world", type=Path, help="world JSON from sim-world")
    _add_common(p)

    p = subs.add_parser(
        "train",
        help="two-stage training: alignment head, then quality head",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("world", type=Path, help="world JSON")
    p.add_argument("trajectory", type=Path, help="trajectory CSV to mine around")
    _add_common(p)

    p = subs.add_parser(
        "localize",
        help="run the particle filter along a trajectory",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("world", type=Path, help="world JSON")
    p.add_argument("trajectory", type=Path, help="ground-truth trajectory CSV")
    p.add_argument("checkpoint", type=Path, help="trained model checkpoint JSON")
    p.add_argument("--dead-reckoning", action="store_true", help="disable measurement updates")
    _add_common(p)

    p = subs.add_parser(
        "frame-localize",
        help="score a single clip against a pose grid around the true pose",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("world", type=Path, help="world JSON")
    p.add_argument("trajectory", type=Path, help="trajectory CSV supplying the query clip")
    p.add_argument("checkpoint", type=Path, help="trained model checkpoint JSON")
    p.add_argument("--query-time", type=float, default=None, help="query timestamp (default: trajectory midpoint)")
    p.add_argument("--orientation-prior", type=float, default=None, help="grid heading in radians (default: true heading)")
    _add_common(p)

    p = subs.add_parser(
        "eval",
        help="trajectory metrics: ATE, scale drift, success rates",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("pred", type=Path, help="predicted trajectory CSV")
    p.add_argument("gt", type=Path, help="ground-truth trajectory CSV")
    _add_common(p)

    return parser


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config is not None else RunConfig()
    if args.seed is not None:
        cfg.seed = int(args.seed)
    return cfg


def _out_dir(args) -> Path:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    return args.out_dir


def _check_resolution(cfg: RunConfig, encoder_cfg: EncoderConfig) -> None:
    if cfg.render.resolution != encoder_cfg.input_resolution:
        raise ConfigError(
            f"render.resolution ({cfg.render.resolution}) must match the checkpoint's "
            f"encoder input resolution ({encoder_cfg.input_resolution})"
        )


def _cmd_sim_world(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    world = WorldModel(cfg.seed, cfg.world.extent_m, cfg.world.num_seasons, cfg.world.sigma_season)
    save_world_json(world, out / "world.json")
    print(f"wrote {out / 'world.json'} (extent {world.extent_m:g} m, {world.num_seasons} seasons)")
    if not args.no_figures:
        for season in range(world.num_seasons):
            fig_path = out / f"world_season{season}.png"
            figures.plot_world(world, fig_path, season=season)
            print(f"wrote {fig_path}")
    return 0


def _cmd_gen_traj(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    world = load_world_json(args.world)
    tr = cfg.trajectory
    traj = generate_trajectory(
        world,
        cfg.seed,
        length_m=tr.length_m,
        speed_range=(tr.v_min, tr.v_max),
        dt=tr.dt_s,
        margin_m=tr.margin_m,
    )
    save_trajectory_csv(traj, out / "trajectory.csv")
    print(f"wrote {out / 'trajectory.csv'} ({len(traj)} poses, {traj.arc_length():.1f} m)")
    if not args.no_figures:
        fig_path = out / "trajectory.png"
        figures.plot_trajectories(fig_path, traj, {}, world=world)
        print(f"wrote {fig_path}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    world = load_world_json(args.world)
    traj = load_trajectory_csv(args.trajectory)
    encoder, mlp, history = train_model(
        world,
        traj,
        cfg.seed,
        cfg=cfg.training,
        mining_cfg=cfg.mining,
        sampler_cfg=cfg.sampler,
        render_cfg=cfg.render,
    )
    meta = {"seed": cfg.seed, "world": world.spec_dict(), "epochs": len(history)}
    save_checkpoint(out / "checkpoint.json", encoder, mlp, meta)
    write_loss_csv(out / "train_log.csv", history)
    print(f"wrote {out / 'checkpoint.json'}")
    print(f"wrote {out / 'train_log.csv'} ({len(history)} epochs)")
    if not args.no_figures and history:
        fig_path = out / "loss_curves.png"
        figures.plot_loss_curves(fig_path, history)
        print(f"wrote {fig_path}")
    return 0


def _cmd_localize(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    world = load_world_json(args.world)
    traj = load_trajectory_csv(args.trajectory)
    encoder, mlp, _meta = load_checkpoint(args.checkpoint)
    if mlp is None:
        raise ConfigError("checkpoint lacks the quality head; run `train` to completion first")
    _check_resolution(cfg, encoder.config)
    result = run_localization(world, traj, encoder, mlp, cfg, dead_reckoning=args.dead_reckoning)
    write_estimates_csv(out / "estimates.csv", result.rows)
    write_json(result.diagnostics, out / "localize_diagnostics.json")
    print(f"wrote {out / 'estimates.csv'} ({len(result.rows)} steps)")
    print(f"wrote {out / 'localize_diagnostics.json'}")
    if not args.no_figures:
        label = "dead reckoning" if args.dead_reckoning else "filter"
        overlay = out / "trajectory_overlay.png"
        figures.plot_trajectories(overlay, traj, {label: result.estimates}, world=world, season=cfg.localize.map_season)
        print(f"wrote {overlay}")
        idx_pred, idx_gt = associate(result.estimates, traj)
        pp, gp = result.estimates.positions()[idx_pred], traj.positions()[idx_gt]
        errors = np.linalg.norm(pp - gp, axis=1)
        ent = np.array([r["entropy"] if r["entropy"] is not None else np.nan for r in result.rows])
        err_path = out / "error_over_time.png"
        figures.plot_error_over_time(err_path, result.estimates.times()[idx_pred], errors, entropy=None if np.all(np.isnan(ent)) else ent[idx_pred])
        print(f"wrote {err_path}")
    return 0


def _cmd_frame_localize(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    world = load_world_json(args.world)
    traj = load_trajectory_csv(args.trajectory)
    encoder, mlp, _meta = load_checkpoint(args.checkpoint)
    if mlp is None:
        raise ConfigError("checkpoint lacks the quality head; run `train` to completion first")
    _check_resolution(cfg, encoder.config)

    times = traj.times()
    t_query = float(args.query_time) if args.query_time is not None else float(times[len(traj) // 2])
    qi = int(np.argmin(np.abs(times - t_query)))
    gt_pose = traj.poses[qi].pose
    prior = float(args.orientation_prior) if args.orientation_prior is not None else gt_pose.theta

    picks = select_clip_frames(times[: qi + 1], traj.positions()[: qi + 1], times[: qi + 1], float(times[qi]), cfg.sampler)
    clip = render_ground_clip(
        world,
        [traj.poses[i] for i in picks],
        cfg.localize.obs_season,
        noise_sigma=cfg.render.ground_noise_sigma,
        rng_seed=(cfg.seed, _S_OBS, qi),
        resolution=cfg.render.resolution,
        footprint_m=cfg.render.patch_side_m,
        fov_half_angle_deg=cfg.render.fov_half_angle_deg,
    )
    matcher = make_clip_matcher(clip, encoder, mlp, AggregationConfig())
    lmap = likelihood_map(
        world,
        gt_pose,
        cfg.localize.map_season,
        prior,
        matcher,
        grid_size=cfg.eval.grid_size,
        map_side_m=cfg.eval.map_extent_m,
        patch_side_m=cfg.render.patch_side_m,
        patch_resolution=cfg.render.resolution,
    )
    write_grid_csv(out / "likelihood.csv", lmap.grid)
    write_pgm(out / "likelihood.pgm", lmap.grid)
    write_json(
        {
            "cell_size_m": lmap.cell_size_m,
            "center": {"x": lmap.center.x, "y": lmap.center.y, "theta": lmap.center.theta},
            "orientation_prior": lmap.orientation_prior,
            "gt_rank_percentile": lmap.gt_rank_percentile,
            "gt_cell": list(lmap.gt_cell),
            "oob_count": lmap.oob_count,
            "grid_size": cfg.eval.grid_size,
            "query_time": float(times[qi]),
        },
        out / "likelihood.json",
    )
    print(f"wrote {out / 'likelihood.csv'}")
    print(f"wrote {out / 'likelihood.pgm'}")
    print(f"wrote {out / 'likelihood.json'} (gt percentile {lmap.gt_rank_percentile:.2f}%)")
    if not args.no_figures:
        fig_path = out / "likelihood.png"
        figures.plot_likelihood_map(fig_path, lmap)
        print(f"wrote {fig_path}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(args)
    pred = load_trajectory_csv(args.pred)
    gt = load_trajectory_csv(args.gt)
    report = compute_metrics(pred, gt, thresholds=cfg.eval.success_radii_m)
    write_json(report.to_dict(), out / "metrics.json")
    print(f"wrote {out / 'metrics.json'}")
    print(
        f"ATE mean {report.ate_mean:.3f} m, max {report.ate_max:.3f} m; "
        f"SDR {report.sdr_percent:.2f}%; "
        + "; ".join(f"SR@{tau:g}m {sr:.1f}%" for tau, sr in sorted(report.success_rates.items()))
    )
    if not args.no_figures:
        idx_pred, idx_gt = associate(pred, gt)
        errors = np.linalg.norm(pred.positions()[idx_pred] - gt.positions()[idx_gt], axis=1)
        fig_path = out / "error_over_time.png"
        figures.plot_error_over_time(fig_path, pred.times()[idx_pred], errors)
        print(f"wrote {fig_path}")
    return 0


_COMMANDS = {
    "sim-world": _cmd_sim_world,
    "gen-traj": _cmd_gen_traj,
    "train": _cmd_train,
    "localize": _cmd_localize,
    "frame-localize": _cmd_frame_localize,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
