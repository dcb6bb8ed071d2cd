"""Scan and trajectory files, map export, configuration and evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.spatial.transform import Rotation

from rolo.exceptions import ConfigError, MalformedFile, MalformedLine, NoAssociation, NonOrthonormalRotation
from rolo.geometry import RigidTransform, euler_angles, geodesic_angle, orthonormalize
from rolo.scan import Scan, empty_scan
from rolo.synth import LidarModel

RECORD = np.dtype("<f4")
ORTHONORMAL_TOL = 1e-3
QUATERNION_TOL = 1e-3


class TrajectoryRecord(NamedTuple):
    stamp: float
    pose: RigidTransform


# -- scans -------------------------------------------------------------------------

def read_scan_bin(path, model: LidarModel | None = None, stamp=0.0) -> Scan:
    """Read a KITTI-style ``.bin`` file of (x, y, z, intensity) float32 records.

    Rings come from each point's vertical angle bucketed against the model's
    ring table; ``time_offset`` from the azimuth, counter-clockwise from +x
    over one sweep. Points are returned grouped by ring in azimuth order.
    """
    model = model or LidarModel()
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise MalformedFile(path, 0, f"cannot read: {exc.strerror}") from exc
    if len(raw) % 16:
        raise MalformedFile(path, len(raw) - len(raw) % 16, f"size {len(raw)} is not a multiple of 16 bytes")
    data = np.frombuffer(raw, dtype=RECORD).reshape(-1, 4)
    if len(data) == 0:
        return empty_scan(model.rings, stamp, model.sweep_duration)
    bad = ~np.isfinite(data)
    if bad.any():
        flat = int(np.flatnonzero(bad.ravel())[0])
        raise MalformedFile(path, 4 * flat, "non-finite value")
    pts = data[:, :3].astype(float)
    rng = np.linalg.norm(pts, axis=1)
    if np.any(rng == 0):
        raise MalformedFile(path, 16 * int(np.flatnonzero(rng == 0)[0]), "point at the sensor origin")
    lo, hi = np.radians(model.vertical_fov)
    el = np.arcsin(np.clip(pts[:, 2] / rng, -1, 1))
    if model.rings > 1:
        ring = np.rint((el - lo) / (hi - lo) * (model.rings - 1))
    else:
        ring = np.zeros(len(pts))
    ring = np.clip(ring, 0, model.rings - 1).astype(np.int64)
    frac = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi) / (2 * np.pi)
    frac[frac > 1 - 1e-6] = 0.0
    order = np.lexsort((frac, ring))
    return Scan.from_points(pts[order], ring=ring[order], time_offset=frac[order] * model.sweep_duration,
                            stamp=stamp, sweep_duration=model.sweep_duration, n_rings=model.rings)


def write_scan_bin(scan, path, intensity=0.0):
    pts = scan.points if isinstance(scan, Scan) else np.asarray(scan, dtype=float).reshape(-1, 3)
    out = np.empty((len(pts), 4), dtype=RECORD)
    out[:, :3] = pts
    out[:, 3] = intensity
    Path(path).write_bytes(out.tobytes())


# -- trajectories --------------------------------------------------------------------

def _fields(path, lineno, text, count):
    parts = text.split()
    if len(parts) != count:
        raise MalformedLine(path, lineno, f"expected {count} fields, found {len(parts)}")
    try:
        vals = np.array([float(p) for p in parts])
    except ValueError as exc:
        raise MalformedLine(path, lineno, f"not a number: {exc.args[0].split(': ')[-1]}") from None
    if not np.all(np.isfinite(vals)):
        raise MalformedLine(path, lineno, "non-finite value")
    return vals


def _kitti_pose(path, lineno, vals):
    M = vals.reshape(3, 4)
    R = M[:, :3]
    dev = np.abs(R.T @ R - np.eye(3)).max()
    if dev > ORTHONORMAL_TOL or np.linalg.det(R) <= 0:
        raise NonOrthonormalRotation(path, lineno, f"rotation is not orthonormal (deviation {dev:.3g})")
    return RigidTransform(orthonormalize(R), M[:, 3])


def _tum_pose(path, lineno, vals):
    q = vals[4:8]
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > QUATERNION_TOL:
        raise MalformedLine(path, lineno, f"quaternion norm {norm:.6g} outside 1 +- {QUATERNION_TOL:g}")
    R = Rotation.from_quat(q / norm).as_matrix()
    return RigidTransform(R, vals[1:4])


def read_poses(path, format="tum", stamps=None, period=0.1):
    """Parse a KITTI or TUM trajectory into :class:`TrajectoryRecord` s.

    KITTI lines carry no time; ``stamps`` supplies one per pose, otherwise
    poses are spaced by ``period``. Blank lines and ``#`` comments are
    skipped.
    """
    if format not in ("kitti", "tum"):
        raise ValueError("format must be 'kitti' or 'tum'")
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise MalformedLine(path, 0, f"cannot read: {exc.strerror}") from exc
    records = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if format == "kitti":
            pose = _kitti_pose(path, lineno, _fields(path, lineno, text, 12))
            k = len(records)
            if stamps is not None:
                if k >= len(stamps):
                    raise MalformedLine(path, lineno, "more poses than stamps")
                t = float(stamps[k])
            else:
                t = k * period
        else:
            vals = _fields(path, lineno, text, 8)
            pose, t = _tum_pose(path, lineno, vals), float(vals[0])
        if records and not t > records[-1].stamp:
            raise MalformedLine(path, lineno, "stamps must be strictly increasing")
        records.append(TrajectoryRecord(t, pose))
    return records


def _fmt(values):
    return " ".join(f"{v:.9g}" for v in values)


def _fixed(values):
    # stamps and positions keep 9 decimals so large values still round-trip to 1e-8
    return " ".join(f"{v:.9f}" for v in values)


def write_trajectory(records, path, format="tum"):
    """Write records in TUM (``stamp t q``) or KITTI (3x4 row-major) form.

    Rotation entries carry 9 significant digits; stamps and translations
    carry 9 decimals.
    """
    if format not in ("kitti", "tum"):
        raise ValueError("format must be 'kitti' or 'tum'")
    lines = []
    for rec in records:
        stamp, pose = rec
        if format == "kitti":
            R, t = pose.rotation, pose.translation
            lines.append(" ".join(f"{_fmt(R[i])} {t[i]:.9f}" for i in range(3)))
        else:
            q = Rotation.from_matrix(pose.rotation).as_quat()
            lines.append(f"{_fixed([stamp, *pose.translation])} {_fmt(q)}")
    try:
        Path(path).write_text("".join(line + "\n" for line in lines))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write trajectory: {exc.strerror}", str(path)) from exc


def write_map_pcd(points, path):
    """ASCII PCD v0.7 with ``FIELDS x y z``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    header = ["# .PCD v0.7 - Point Cloud Data file format", "VERSION 0.7", "FIELDS x y z", "SIZE 4 4 4",
              "TYPE F F F", "COUNT 1 1 1", f"WIDTH {len(pts)}", "HEIGHT 1", "VIEWPOINT 0 0 0 1 0 0 0",
              f"POINTS {len(pts)}", "DATA ascii"]
    body = [_fmt(p) for p in pts]
    try:
        Path(path).write_text("\n".join(header + body) + "\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write map: {exc.strerror}", str(path)) from exc


# -- evaluation -----------------------------------------------------------------------

@dataclass
class EvalReport:
    rmse_translation: float
    rmse_rotation: float
    rmse_z: float
    per_frame_et: np.ndarray
    per_frame_er: np.ndarray
    n_pairs: int

    @property
    def mean_et(self):
        return self.per_frame_et.mean(axis=0)

    @property
    def std_et(self):
        return self.per_frame_et.std(axis=0)

    @property
    def mean_er(self):
        return self.per_frame_er.mean(axis=0)

    @property
    def std_er(self):
        return self.per_frame_er.std(axis=0)

    def summary(self):
        return {"rmse_translation_m": self.rmse_translation, "rmse_rotation_deg": self.rmse_rotation,
                "rmse_z_m": self.rmse_z, "pairs": self.n_pairs,
                "mean_et_m": self.mean_et.tolist(), "mean_er_deg": self.mean_er.tolist()}


def associate(est_stamps, gt_stamps, tolerance=0.05):
    """Nearest-stamp pairs ``(i_est, j_gt)`` within ``tolerance``."""
    est = np.asarray(est_stamps, dtype=float)
    gt = np.asarray(gt_stamps, dtype=float)
    if len(est) == 0 or len(gt) == 0:
        return []
    j = np.clip(np.searchsorted(gt, est), 1, max(len(gt) - 1, 1))
    left = np.maximum(j - 1, 0)
    right = np.minimum(j, len(gt) - 1)
    pick = np.where(np.abs(gt[left] - est) <= np.abs(gt[right] - est), left, right)
    ok = np.abs(gt[pick] - est) <= tolerance
    return [(int(i), int(pick[i])) for i in np.flatnonzero(ok)]


def _wrap_deg(a):
    return (a + 180.0) % 360.0 - 180.0


def evaluate(estimate, ground_truth, time_tolerance=0.05) -> EvalReport:
    """Per-frame relative errors and first-pose-aligned absolute error.

    ``estimate`` and ``ground_truth`` are sequences of
    :class:`TrajectoryRecord` (or ``(stamp, pose)`` pairs).
    """
    pairs = associate([r[0] for r in estimate], [r[0] for r in ground_truth], time_tolerance)
    if len(pairs) < 2:
        raise NoAssociation(f"{len(pairs)} associated pose pairs (need 2)")
    E = [estimate[i][1] for i, _ in pairs]
    G = [ground_truth[j][1] for _, j in pairs]
    et, er = [], []
    for k in range(len(pairs) - 1):
        rel_e = E[k].inverse() @ E[k + 1]
        rel_g = G[k].inverse() @ G[k + 1]
        et.append(np.abs(rel_e.translation - rel_g.translation))
        diff = _wrap_deg(np.degrees(euler_angles(rel_e.rotation)) - np.degrees(euler_angles(rel_g.rotation)))
        er.append(np.abs(diff))
    # first-pose alignment, evaluated as poses relative to the first one (exact on identical input);
    # differences are rotated back into the ground-truth world frame so z stays vertical
    e0, g0 = E[0].inverse(), G[0].inverse()
    rel_e = [e0 @ e for e in E]
    rel_g = [g0 @ g for g in G]
    dt = np.array([a.translation - g.translation for a, g in zip(rel_e, rel_g)]) @ G[0].rotation.T
    dr = np.array([np.degrees(geodesic_angle(a.rotation, g.rotation)) for a, g in zip(rel_e, rel_g)])
    return EvalReport(float(np.sqrt(np.mean(np.sum(dt**2, axis=1)))), float(np.sqrt(np.mean(dr**2))),
                      float(np.sqrt(np.mean(dt[:, 2] ** 2))), np.array(et), np.array(er), len(pairs))


# -- configuration ---------------------------------------------------------------------

def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default, description)
CONFIG_KEYS = {
    "lambda_ct": (float, 0.5, "weight of the continuous-time term"),
    "resolution": (float, 1.0, "voxel size (m)"),
    "max_source_points": (int, 6000, "source points used by the front-end"),
    "window": (int, 10, "keyframes per submap"),
    "keyframe_interval": (float, 1.0, "keyframe time gate (s)"),
    "keyframe_distance": (float, 1.0, "keyframe distance gate (m)"),
    "keyframe_angle_deg": (float, 10.0, "keyframe rotation gate (deg)"),
    "loop_closure": (_bool, True, "enable loop detection"),
    "loop_radius": (float, 5.0, "loop search radius (m)"),
    "loop_time_gap": (float, 30.0, "minimum age of a loop candidate (s)"),
    "loop_fitness": (float, 0.3, "accept loops below this mean residual (m)"),
    "queue_size": (int, 10, "front-end to back-end queue capacity"),
    "rings": (int, 32, "LiDAR rings"),
    "vertical_fov_min": (float, -25.0, "lowest ring elevation (deg)"),
    "vertical_fov_max": (float, 15.0, "highest ring elevation (deg)"),
    "azimuth_step": (float, 0.4, "azimuth resolution (deg)"),
    "sweep_duration": (float, 0.1, "sweep period (s)"),
    "range_noise_sigma": (float, 0.02, "simulated range noise (m)"),
    "n_scans": (int, 0, "scans generated by synth (0 = preset default)"),
    "time_tolerance": (float, 0.05, "stamp association tolerance for eval (s)"),
    "map_stride": (int, 1, "keep every n-th map point in the exported PCD"),
}


def default_config():
    return {k: v[1] for k, v in CONFIG_KEYS.items()}


def parse_config(text, source="<config>"):
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            cfg[key] = CONFIG_KEYS[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return cfg


def load_config(path=None, overrides=None):
    cfg = default_config()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
        cfg.update(parse_config(text, str(path)))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = value
    if cfg["vertical_fov_min"] >= cfg["vertical_fov_max"]:
        raise ConfigError("vertical_fov_min must be below vertical_fov_max")
    for key in ("resolution", "sweep_duration", "azimuth_step", "keyframe_interval"):
        if not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive")
    return cfg


def lidar_model(cfg) -> LidarModel:
    return LidarModel(rings=cfg["rings"], vertical_fov=(cfg["vertical_fov_min"], cfg["vertical_fov_max"]),
                      azimuth_step=cfg["azimuth_step"], sweep_duration=cfg["sweep_duration"],
                      range_noise_sigma=cfg["range_noise_sigma"])


# -- dataset directories ------------------------------------------------------------------

@dataclass
class Dataset:
    root: Path
    scan_paths: list
    stamps: np.ndarray
    ground_truth: list | None

    def __len__(self):
        return len(self.scan_paths)

    def scans(self, model: LidarModel):
        for path, stamp in zip(self.scan_paths, self.stamps):
            yield read_scan_bin(path, model, stamp)


def open_dataset(root, period=0.1) -> Dataset:
    """``velodyne/*.bin`` plus optional ``times.txt`` and ``poses.txt`` / ``groundtruth.tum``.

    ``times.txt`` holds sweep-start stamps; ground-truth poses refer to
    sweep ends (stamp + sweep duration).
    """
    root = Path(root)
    if not root.is_dir():
        raise MalformedFile(root, 0, "dataset directory not found")
    velo = root / "velodyne"
    paths = sorted(velo.glob("*.bin")) if velo.is_dir() else []
    if not paths:
        raise MalformedFile(velo, 0, "no .bin scans found")
    times = root / "times.txt"
    if times.exists():
        stamps = []
        for lineno, line in enumerate(times.read_text().splitlines(), start=1):
            if line.strip():
                stamps.append(_fields(times, lineno, line, 1)[0])
        stamps = np.array(stamps)
        if len(stamps) != len(paths):
            raise MalformedLine(times, len(stamps), f"{len(stamps)} stamps for {len(paths)} scans")
        if np.any(np.diff(stamps) <= 0):
            raise MalformedLine(times, int(np.flatnonzero(np.diff(stamps) <= 0)[0]) + 2,
                                "stamps must be strictly increasing")
    else:
        stamps = np.arange(len(paths)) * period
    gt = None
    if (root / "groundtruth.tum").exists():
        gt = read_poses(root / "groundtruth.tum", "tum")
    elif (root / "poses.txt").exists():
        gt = read_poses(root / "poses.txt", "kitti", stamps=stamps + period)
    return Dataset(root, paths, stamps, gt)


def write_dataset(root, scans, poses, pose_stamps):
    """Inverse of :func:`open_dataset` (TUM ground truth)."""
    root = Path(root)
    (root / "velodyne").mkdir(parents=True, exist_ok=True)
    for k, scan in enumerate(scans):
        write_scan_bin(scan, root / "velodyne" / f"{k:06d}.bin")
    (root / "times.txt").write_text("".join(f"{s.stamp:.9f}\n" for s in scans))
    write_trajectory([TrajectoryRecord(t, p) for t, p in zip(pose_stamps, poses)], root / "groundtruth.tum", "tum")

