"""Command-line entry point: ``rolo {odom,slam,eval,synth,bench}``.

Exit status is 0 on success, 2 for configuration errors and 3 for data
errors; failures print one ``rolo: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from rolo import io
from rolo.back_end import RoloSLAM
from rolo.exceptions import ConfigError, DataError
from rolo.front_end import RoloOdometry
from rolo.synth import TrajectoryParams, generate_world, simulate_sequence

TIMING_COLUMNS = ("frame", "deskew_ms", "features_ms", "voxelize_ms", "rotation_ms", "translation_ms",
                  "backend_ms", "total_ms")

# world preset -> (trajectory overrides, default scan count)
PRESETS = {
    "course": (dict(kind="undulating", amplitude=2.0), 200),
    "square-loop": (dict(kind="square"), 400),
    "box": (dict(kind="straight", speed=1.0, start=(-3.0, 0.0, 0.0)), 40),
}


def _overrides(pairs):
    out = {}
    for item in pairs or ():
        out.update(io.parse_config(item, "--set"))
    return out


def _config(args):
    return io.load_config(getattr(args, "config", None), _overrides(getattr(args, "set", None)))


def _require_dir(path):
    if path is None:
        raise ConfigError("--input is required")
    p = Path(path)
    if not p.is_dir():
        raise DataError(f"{p}: input directory not found")
    return p


def _timing_rows(front, back=None):
    rows = []
    for k, d in enumerate(front):
        b = back[k] if back is not None and k < len(back) else {}
        row = {"frame": k}
        for key in TIMING_COLUMNS[1:-1]:
            row[key] = float(d.get(key, b.get(key, 0.0)))
        row["total_ms"] = float(d.get("time_ms", 0.0)) + row["features_ms"] + row["backend_ms"]
        rows.append(row)
    return rows


def write_timing(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TIMING_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (row[k] if k == "frame" else f"{row[k]:.3f}") for k in TIMING_COLUMNS})


def _records(stamps, poses, sweep):
    # a pose describes the deskewed (sweep-end) frame of its scan
    return [io.TrajectoryRecord(float(s) + sweep, p) for s, p in zip(stamps, poses)]


def _load(args, cfg):
    data = io.open_dataset(_require_dir(args.input), cfg["sweep_duration"])
    return data, list(data.scans(io.lidar_model(cfg)))


def _write_outputs(args, records, timing):
    if args.out:
        io.write_trajectory(records, args.out, args.format)
    else:
        for stamp, pose in records:
            print(f"{stamp:.9g} " + " ".join(f"{v:.9g}" for v in pose.translation))
    if args.timing:
        write_timing(timing, args.timing)


def cmd_odom(args):
    cfg = _config(args)
    data, scans = _load(args, cfg)
    est = RoloOdometry(lambda_ct=cfg["lambda_ct"], resolution=cfg["resolution"],
                       max_source_points=cfg["max_source_points"]).fit(scans)
    _write_outputs(args, _records(data.stamps, est.trajectory_, cfg["sweep_duration"]),
                   _timing_rows(est.diagnostics_))
    return 0


def cmd_slam(args):
    cfg = _config(args)
    data, scans = _load(args, cfg)
    est = RoloSLAM(lambda_ct=cfg["lambda_ct"], resolution=cfg["resolution"],
                   max_source_points=cfg["max_source_points"], window=cfg["window"],
                   keyframe_interval=cfg["keyframe_interval"], keyframe_distance=cfg["keyframe_distance"],
                   keyframe_angle=np.radians(cfg["keyframe_angle_deg"]), loop_closure=cfg["loop_closure"],
                   loop_radius=cfg["loop_radius"], loop_time_gap=cfg["loop_time_gap"],
                   loop_fitness=cfg["loop_fitness"], queue_size=cfg["queue_size"]).fit(scans)
    _write_outputs(args, _records(est.stamps_, est.trajectory_, cfg["sweep_duration"]),
                   _timing_rows(est.front_diagnostics_, est.backend_.diagnostics))
    if args.map:
        clouds = [kf.pose.apply(kf.points) for kf in est.keyframes_ if kf.points is not None]
        pts = np.concatenate(clouds) if clouds else np.zeros((0, 3))
        io.write_map_pcd(pts[:: cfg["map_stride"]], args.map)
    print(f"loops closed: {len(est.loops_)}, keyframes: {len(est.keyframes_)}", file=sys.stderr)
    return 0


def cmd_eval(args):
    cfg = _config(args)
    if args.input is None or args.reference is None:
        raise ConfigError("eval needs --input (estimate) and --reference (ground truth)")
    est = io.read_poses(args.input, args.format)
    gt = io.read_poses(args.reference, args.reference_format or args.format)
    report = io.evaluate(est, gt, cfg["time_tolerance"])
    text = json.dumps(report.summary(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _sequence(preset, seed, cfg, n_scans=None):
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r} (choose from {', '.join(PRESETS)})")
    traj, default_n = PRESETS[preset]
    world = generate_world(seed, preset=preset, undulation_amplitude=2.0)
    params = TrajectoryParams(n_scans=n_scans or cfg["n_scans"] or default_n,
                              rate=1.0 / cfg["sweep_duration"], **traj)
    return simulate_sequence(world, params, io.lidar_model(cfg), seed=seed)


def cmd_synth(args):
    if not args.out:
        raise ConfigError("synth needs --out <directory>")
    cfg = _config(args)
    seq = _sequence(args.preset, args.seed, cfg)
    io.write_dataset(args.out, seq.scans, seq.poses, seq.stamps)
    print(f"wrote {len(seq.scans)} scans to {args.out}", file=sys.stderr)
    return 0


def cmd_bench(args):
    cfg = _config(args)
    # a closed room returns every ray: 32 rings x 960 columns = 30720 points
    cfg = {**cfg, "azimuth_step": 0.375}
    seq = _sequence("box", args.seed, cfg, args.frames)
    est = RoloOdometry(lambda_ct=cfg["lambda_ct"], resolution=cfg["resolution"],
                       max_source_points=cfg["max_source_points"])
    t0 = time.perf_counter()
    est.fit(seq.scans)
    wall = time.perf_counter() - t0
    rows = _timing_rows(est.diagnostics_)[1:]
    mean = {k: float(np.mean([r[k] for r in rows])) for k in TIMING_COLUMNS[1:]}
    points = int(np.mean([len(s) for s in seq.scans]))
    print(f"scans: {len(seq.scans)}  points/scan: {points}  wall: {wall:.2f} s")
    for k in TIMING_COLUMNS[1:]:
        print(f"  {k:<16}{mean[k]:9.2f}")
    print(f"front-end mean per-scan time: {mean['total_ms']:.1f} ms (target < 200 ms)")
    if args.timing:
        write_timing(rows, args.timing)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="rolo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--format", choices=("tum", "kitti"), default="tum")
        p.add_argument("--out")
        return p

    for name, help_ in (("odom", "front-end odometry only"), ("slam", "full pipeline with loop closure")):
        p = common(sub.add_parser(name, help=help_))
        p.add_argument("--input", help="dataset directory (velodyne/*.bin, times.txt)")
        p.add_argument("--timing", help="per-frame timing CSV")
        if name == "slam":
            p.add_argument("--map", help="ASCII PCD map output")
    p = common(sub.add_parser("eval", help="compare a trajectory against ground truth"))
    p.add_argument("--input", help="estimated trajectory")
    p.add_argument("--reference", help="ground-truth trajectory")
    p.add_argument("--reference-format", choices=("tum", "kitti"))
    p = common(sub.add_parser("synth", help="generate a synthetic dataset"))
    p.add_argument("--preset", default="course", help=f"one of {', '.join(PRESETS)}")
    p = common(sub.add_parser("bench", help="per-stage front-end timing on 30k-point scans"))
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--timing", help="per-frame timing CSV")
    return parser


COMMANDS = {"odom": cmd_odom, "slam": cmd_slam, "eval": cmd_eval, "synth": cmd_synth, "bench": cmd_bench}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"rolo: config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"rolo: data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
