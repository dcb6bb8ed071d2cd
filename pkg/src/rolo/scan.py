"""Point clouds, motion-distortion correction and smoothness features."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from rolo._validation import check_covariances, check_int, check_points, uniform_isotropic
from rolo.exceptions import DegenerateRing
from rolo.geometry import RigidTransform, interpolate, so3_exp, so3_log

DEFAULT_NOISE_SIGMA = 0.02


class Point(NamedTuple):
    position: np.ndarray
    time_offset: float
    ring: int
    noise_cov: np.ndarray


@dataclass(frozen=True, eq=False)
class Scan:
    """One LiDAR sweep stored column-wise.

    ``points`` are grouped by ring and ordered by azimuth inside a ring;
    ``time_offset`` is measured from the sweep start ``stamp``.
    """

    points: np.ndarray
    time_offset: np.ndarray
    ring: np.ndarray
    noise_cov: np.ndarray
    stamp: float = 0.0
    sweep_duration: float = 0.1
    n_rings: int = 64

    def __post_init__(self):
        pts = check_points(self.points)
        n = len(pts)
        t = np.asarray(self.time_offset, dtype=float).reshape(-1)
        ring = np.asarray(self.ring).reshape(-1).astype(np.int64)
        if t.shape != (n,) or ring.shape != (n,):
            raise ValueError("time_offset and ring must have one entry per point")
        if n:
            if t.min() < 0 or t.max() > self.sweep_duration + 1e-12:
                raise ValueError("time_offset must lie in [0, sweep_duration]")
            if ring.min() < 0 or ring.max() >= self.n_rings:
                raise ValueError(f"ring indices must lie in [0, {self.n_rings})")
        cov = check_covariances(self.noise_cov, n, DEFAULT_NOISE_SIGMA)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "time_offset", t)
        object.__setattr__(self, "ring", ring)
        object.__setattr__(self, "noise_cov", cov)

    @classmethod
    def from_points(cls, points, *, ring=None, time_offset=None, noise_cov=None,
                    noise_sigma=DEFAULT_NOISE_SIGMA, stamp=0.0, sweep_duration=0.1, n_rings=None):
        pts = check_points(points)
        n = len(pts)
        ring = np.zeros(n, dtype=np.int64) if ring is None else np.asarray(ring, dtype=np.int64)
        if time_offset is None:
            time_offset = np.zeros(n)
        if noise_cov is None:
            noise_cov = check_covariances(None, n, noise_sigma)
        if n_rings is None:
            n_rings = int(ring.max()) + 1 if n else 1
        return cls(pts, time_offset, ring, noise_cov, stamp, sweep_duration, n_rings)

    def __len__(self):
        return len(self.points)

    def point(self, i) -> Point:
        return Point(self.points[i], float(self.time_offset[i]), int(self.ring[i]), self.noise_cov[i])

    def select(self, index) -> "Scan":
        index = np.asarray(index)
        return Scan(self.points[index], self.time_offset[index], self.ring[index],
                    self.noise_cov[index], self.stamp, self.sweep_duration, self.n_rings)

    def with_points(self, points, noise_cov=None) -> "Scan":
        return Scan(points, self.time_offset, self.ring,
                    self.noise_cov if noise_cov is None else noise_cov,
                    self.stamp, self.sweep_duration, self.n_rings)

    def transformed(self, T: RigidTransform) -> "Scan":
        """Rigidly move the whole cloud; covariances rotate with it."""
        R = T.rotation
        cov = np.einsum("ij,njk,lk->nil", R, self.noise_cov, R)
        return self.with_points(T.apply(self.points), cov)

    def ring_slices(self):
        """``(ring_id, start, stop)`` for each contiguous ring block."""
        if len(self) == 0:
            return []
        cuts = np.flatnonzero(np.diff(self.ring)) + 1
        starts = np.concatenate([[0], cuts])
        stops = np.concatenate([cuts, [len(self)]])
        return [(int(self.ring[a]), int(a), int(b)) for a, b in zip(starts, stops)]


def empty_scan(n_rings=1, stamp=0.0, sweep_duration=0.1):
    return Scan(np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=np.int64),
                np.zeros((0, 3, 3)), stamp, sweep_duration, n_rings)


def deskew(scan: Scan, motion: RigidTransform, mode="linear") -> Scan:
    """Re-express every point in the sweep-end frame.

    ``motion`` is the sensor pose at sweep end expressed in the sweep-start
    frame. A point captured at fraction ``s`` of the sweep sees the
    interpolated pose ``T(s)``; it is mapped with ``motion^-1 @ T(s)``.
    """
    if len(scan) == 0:
        return scan
    if np.array_equal(motion.rotation, np.eye(3)) and not np.any(motion.translation):
        return scan
    # points of one azimuth column share a capture time
    s, col = np.unique(scan.time_offset / scan.sweep_duration, return_inverse=True)
    if mode == "linear":
        R_s = so3_exp(s[:, None] * so3_log(motion.rotation))
        t_s = s[:, None] * motion.translation
    else:
        parts = [interpolate(motion, si, mode) for si in s]
        R_s = np.stack([p.rotation for p in parts])
        t_s = np.stack([p.translation for p in parts])
    Rt = motion.rotation.T
    M = (Rt @ R_s)[col]
    pts = np.matmul(M, scan.points[:, :, None])[:, :, 0] + ((t_s - motion.translation) @ Rt.T)[col]
    # s^2 I is unchanged by any rotation
    cov = scan.noise_cov if uniform_isotropic(scan.noise_cov) else M @ scan.noise_cov @ np.swapaxes(M, 1, 2)
    return scan.with_points(pts, cov)


def smoothness(scan: Scan, window=5, strict=False):
    """Normalized neighborhood-sum curvature per point.

    ``c_i = |sum_{j != i} (p_j - p_i)| / (2 w |p_i|)`` over the ``w`` ring
    neighbors on each side. Points within ``w`` of a ring end, and every
    point of a ring shorter than ``2w + 1``, get NaN. With ``strict=True``
    a short ring raises :class:`DegenerateRing` instead.
    """
    w = check_int(window, "window", 1)
    c = np.full(len(scan), np.nan)
    for ring_id, a, b in scan.ring_slices():
        n = b - a
        if n < 2 * w + 1:
            if strict:
                raise DegenerateRing(f"ring {ring_id} has {n} points, need {2 * w + 1}")
            continue
        p = scan.points[a:b]
        cs = np.vstack([np.zeros((1, 3)), np.cumsum(p, axis=0)])
        idx = np.arange(w, n - w)
        window_sum = cs[idx + w + 1] - cs[idx - w]
        diff = window_sum - (2 * w + 1) * p[idx]
        rng = np.linalg.norm(p[idx], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            c[a + idx] = np.linalg.norm(diff, axis=1) / (2 * w * rng)
    return c


@dataclass
class FeatureConfig:
    window: int = 5
    edge_threshold: float = 0.01
    planar_threshold: float = 0.003
    n_edge: int = 2
    n_planar: int = 4
    n_sectors: int = 6
    # neighbor range jump (relative) that marks an occlusion boundary
    occlusion_ratio: float = 0.1

    def __post_init__(self):
        check_int(self.window, "window", 1)
        check_int(self.n_edge, "n_edge", 0)
        check_int(self.n_planar, "n_planar", 0)
        check_int(self.n_sectors, "n_sectors", 1)


@dataclass(eq=False)
class FeatureSet:
    edge: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    planar: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    edge_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    planar_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self):
        return len(self.edge) + len(self.planar)

    def transformed(self, T: RigidTransform) -> "FeatureSet":
        return FeatureSet(T.apply(self.edge), T.apply(self.planar), self.edge_index, self.planar_index)


def _occluded(p, ratio):
    """Points on the far side of a range jump along the ring."""
    r = np.linalg.norm(p, axis=1)
    bad = np.zeros(len(p), dtype=bool)
    if len(p) < 2:
        return bad
    jump = np.abs(np.diff(r)) > ratio * np.minimum(r[:-1], r[1:])
    far_left = jump & (r[:-1] > r[1:])
    bad[:-1] |= far_left
    bad[1:] |= jump & ~far_left
    return bad


def extract_features(scan: Scan, cfg: FeatureConfig | None = None, c=None) -> FeatureSet:
    """Select edge (sharp) and planar (flat) points per ring and sector."""
    cfg = cfg or FeatureConfig()
    if len(scan) == 0:
        return FeatureSet()
    if c is None:
        c = smoothness(scan, cfg.window)
    w = cfg.window
    edge_idx, planar_idx = [], []
    for _, a, b in scan.ring_slices():
        n = b - a
        if n < 2 * w + 1:
            continue
        cr = c[a:b]
        picked = np.isnan(cr) | _occluded(scan.points[a:b], cfg.occlusion_ratio)
        bounds = np.linspace(w, n - w, cfg.n_sectors + 1).astype(int)
        for s0, s1 in zip(bounds[:-1], bounds[1:]):
            if s1 <= s0:
                continue
            local = np.arange(s0, s1)
            order = local[np.argsort(-cr[local], kind="stable")]
            taken = 0
            for i in order:
                if taken >= cfg.n_edge or cr[i] <= cfg.edge_threshold:
                    break
                if picked[i]:
                    continue
                edge_idx.append(a + i)
                taken += 1
                picked[max(i - w, 0):i + w + 1] = True
            taken = 0
            for i in order[::-1]:
                if taken >= cfg.n_planar or cr[i] >= cfg.planar_threshold:
                    break
                if picked[i]:
                    continue
                planar_idx.append(a + i)
                taken += 1
                picked[max(i - w, 0):i + w + 1] = True
    edge_idx = np.array(sorted(edge_idx), dtype=np.int64)
    planar_idx = np.array(sorted(planar_idx), dtype=np.int64)
    return FeatureSet(scan.points[edge_idx], scan.points[planar_idx], edge_idx, planar_idx)


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Transformer wrapper: ``transform(scan) -> FeatureSet``."""

    def __init__(self, window=5, edge_threshold=0.01, planar_threshold=0.003,
                 n_edge=2, n_planar=4, n_sectors=6, occlusion_ratio=0.1):
        self.window = window
        self.edge_threshold = edge_threshold
        self.planar_threshold = planar_threshold
        self.n_edge = n_edge
        self.n_planar = n_planar
        self.n_sectors = n_sectors
        self.occlusion_ratio = occlusion_ratio

    def fit(self, X=None, y=None):
        self.config_ = FeatureConfig(**self.get_params())
        return self

    def transform(self, X):
        if not hasattr(self, "config_"):
            self.fit()
        if isinstance(X, Scan):
            return extract_features(X, self.config_)
        return [extract_features(s, self.config_) for s in X]
