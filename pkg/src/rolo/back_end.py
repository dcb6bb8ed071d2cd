"""Back-end: keyframes, feature submaps, scan-to-submap alignment and a
pose graph with loop closures."""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator

from rolo._validation import check_int, check_is_fitted, check_positive, thread_count
from rolo.exceptions import (
    DegenerateSubmap,
    EmptyScan,
    InsufficientCorrespondences,
    NumericalFailure,
)
from rolo.front_end import FrontEndConfig, OdometryState, process_scan, register_pair
from rolo.geometry import RigidTransform, geodesic_angle, hat, so3_exp, so3_log
from rolo.scan import FeatureConfig, FeatureSet, Scan, extract_features
from rolo.solver import PoseSet, ResidualBlock, SE3, SolverConfig, SolveReport, Termination, minimize

MIN_EDGE = 10
MIN_PLANAR = 30


@dataclass(eq=False)
class Keyframe:
    id: int
    pose: RigidTransform
    features: FeatureSet
    stamp: float
    # downsampled sensor-frame cloud, kept for loop verification
    points: Optional[np.ndarray] = None


@dataclass
class KeyframePolicy:
    interval: float = 1.0
    distance: float = 1.0
    angle: float = np.radians(10.0)


def select_keyframe(pose: RigidTransform, stamp, features: FeatureSet, policy: KeyframePolicy | None = None,
                    last: Keyframe | None = None, next_id=None, points=None) -> Optional[Keyframe]:
    """Emit a keyframe when the time, distance or angle gate since ``last`` is met."""
    policy = policy or KeyframePolicy()
    if last is None:
        return Keyframe(0 if next_id is None else next_id, pose, features, float(stamp), points)
    if stamp <= last.stamp:
        return None
    moved = np.linalg.norm(pose.translation - last.pose.translation)
    turned = geodesic_angle(pose.rotation, last.pose.rotation)
    if stamp - last.stamp >= policy.interval - 1e-9 or moved >= policy.distance or turned >= policy.angle:
        return Keyframe(last.id + 1 if next_id is None else next_id, pose, features, float(stamp), points)
    return None


class KeyframeSelector:
    """Stateful wrapper around :func:`select_keyframe`."""

    def __init__(self, policy: KeyframePolicy | None = None):
        self.policy = policy or KeyframePolicy()
        self.last = None
        self.count = 0

    def __call__(self, pose, stamp, features, points=None):
        kf = select_keyframe(pose, stamp, features, self.policy, self.last, self.count, points)
        if kf is not None:
            self.last = kf
            self.count += 1
        return kf


# -- submaps -------------------------------------------------------------------

@dataclass(eq=False)
class Submap:
    edge_points: np.ndarray
    planar_points: np.ndarray
    keyframe_ids: tuple = ()
    edge_tree: Optional[cKDTree] = field(default=None, repr=False)
    planar_tree: Optional[cKDTree] = field(default=None, repr=False)

    def __post_init__(self):
        if self.edge_tree is None and len(self.edge_points):
            self.edge_tree = cKDTree(self.edge_points)
        if self.planar_tree is None and len(self.planar_points):
            self.planar_tree = cKDTree(self.planar_points)


def build_submap(keyframes, k=10) -> Submap:
    """Union of the world-frame features of the ``k`` most recent keyframes."""
    keyframes = list(keyframes)
    if not keyframes:
        raise ValueError("at least one keyframe is required")
    check_int(k, "k", 1)
    window = keyframes[-k:]
    edge = [kf.pose.apply(kf.features.edge) for kf in window]
    planar = [kf.pose.apply(kf.features.planar) for kf in window]
    return Submap(np.concatenate(edge).reshape(-1, 3), np.concatenate(planar).reshape(-1, 3),
                  tuple(kf.id for kf in window))


# -- scan-to-submap ---------------------------------------------------------------

@dataclass
class SubmapConfig:
    neighbors: int = 5
    max_iterations: int = 10
    # neighbor sets reaching farther than this are not used
    max_neighbor_distance: float = 1.0
    edge_ratio: float = 3.0
    plane_ratio: float = 1.0 / 3.0
    # lower bound on the distances inside the beta weights (meters)
    beta_floor: float = 0.01
    # edge points sit up to a ring spacing off the true crease
    edge_beta_floor: float = 1.0
    # every neighbor must lie this close to its fitted line / plane
    fit_tolerance: float = 0.2
    # terms farther than max(gate_floor, gate_sigmas * robust sigma) are dropped
    gate_floor: float = 0.05
    gate_sigmas: float = 3.0
    tolerance: float = 1e-6
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(max_iterations=5))


def _neighbors(tree, pts_world, k, max_dist):
    dist, idx = tree.query(pts_world, k=k, workers=thread_count())
    ok = np.all(np.isfinite(dist), axis=1) & (dist[:, -1] <= max_dist)
    return idx[ok], ok


def fit_edges(neigh, ratio=3.0, tolerance=np.inf):
    """Principal direction and centroid of each neighbor set; ``valid`` when line-like."""
    c = neigh.mean(axis=1)
    d = neigh - c[:, None]
    lam, U = np.linalg.eigh(np.einsum("nki,nkj->nij", d, d) / neigh.shape[1])
    direction = U[:, :, 2]
    valid = lam[:, 2] >= ratio * np.maximum(lam[:, 1], 1e-12)
    off = np.linalg.norm(np.cross(d, direction[:, None]), axis=2).max(axis=1)
    return c, direction, valid & (off <= tolerance)


def fit_planes(neigh, ratio=1.0 / 3.0, tolerance=np.inf):
    """Least-squares normal and centroid of each neighbor set; ``valid`` when plane-like."""
    c = neigh.mean(axis=1)
    d = neigh - c[:, None]
    lam, U = np.linalg.eigh(np.einsum("nki,nkj->nij", d, d) / neigh.shape[1])
    normal = U[:, :, 0]
    # collinear sets have no defined normal
    spread = lam[:, 1] > 1e-6 * np.maximum(lam[:, 2], 1e-12) + 1e-12
    off = np.abs(np.einsum("nki,ni->nk", d, normal)).max(axis=1)
    valid = (lam[:, 0] <= ratio * lam[:, 1]) & spread & (off <= tolerance)
    return c, normal, valid


def edge_weights(neigh, centroid, direction, floor):
    """Sum over neighbors of ``|n| / |(p' - mean) x n|`` (distances floored)."""
    dist = np.linalg.norm(np.cross(neigh - centroid[:, None], direction[:, None]), axis=2)
    return np.sum(1.0 / np.maximum(dist, floor), axis=1)


def plane_weights(neigh, centroid, normal, floor):
    """``1 / |sum (n^T p' + 1)|`` with the plane written as ``n^T x + 1 = 0``."""
    offset = -np.einsum("ni,ni->n", normal, centroid)
    safe = np.where(np.abs(offset) > 1e-9, offset, 1e-9)
    n_scaled = normal / safe[:, None]
    s = np.abs(np.einsum("nki,ni->n", neigh, n_scaled) + neigh.shape[1])
    # back to meters so the floor is a distance
    return 1.0 / np.maximum(s * np.abs(safe), floor)


def _edge_block(points, centroid, direction, beta):
    w = np.sqrt(beta)

    def residual(T):
        q = T.apply(points)
        return w[:, None] * np.cross(q - centroid, direction)

    def jacobian(T):
        rp = points @ T.rotation.T
        dq = -w[:, None, None] * hat(direction)
        return np.concatenate([dq @ -hat(rp), dq], axis=2)

    return ResidualBlock(residual, jacobian_fn=jacobian)


def _plane_block(points, centroid, normal, beta):
    w = np.sqrt(beta)

    def residual(T):
        q = T.apply(points)
        return (w * np.einsum("ni,ni->n", q - centroid, normal))[:, None]

    def jacobian(T):
        rp = points @ T.rotation.T
        g = w[:, None] * normal
        return np.concatenate([np.cross(rp, g), g], axis=1)[:, None, :]

    return ResidualBlock(residual, jacobian_fn=jacobian)


def _gate(raw, cfg):
    if len(raw) == 0:
        return np.zeros(0, dtype=bool)
    med = np.median(raw)
    sigma = 1.4826 * np.median(np.abs(raw - med))
    return raw <= max(cfg.gate_floor, med + cfg.gate_sigmas * sigma)


def submap_terms(features: FeatureSet, submap: Submap, T: RigidTransform, cfg: SubmapConfig):
    """Residual blocks for the current pose estimate; also returns the term counts."""
    blocks = []
    n_e = n_p = 0
    k = cfg.neighbors
    if len(features.edge) and submap.edge_tree is not None and len(submap.edge_points) >= k:
        q = T.apply(features.edge)
        idx, ok = _neighbors(submap.edge_tree, q, k, cfg.max_neighbor_distance)
        neigh = submap.edge_points[idx]
        c, direction, valid = fit_edges(neigh, cfg.edge_ratio, cfg.fit_tolerance)
        raw = np.linalg.norm(np.cross(q[ok] - c, direction), axis=1)
        if valid.any():
            valid[valid] = _gate(raw[valid], cfg)
        if valid.any():
            beta = edge_weights(neigh[valid], c[valid], direction[valid], cfg.edge_beta_floor)
            blocks.append(_edge_block(features.edge[ok][valid], c[valid], direction[valid], beta))
            n_e = int(valid.sum())
    if len(features.planar) and submap.planar_tree is not None and len(submap.planar_points) >= k:
        q = T.apply(features.planar)
        idx, ok = _neighbors(submap.planar_tree, q, k, cfg.max_neighbor_distance)
        neigh = submap.planar_points[idx]
        c, normal, valid = fit_planes(neigh, cfg.plane_ratio, cfg.fit_tolerance)
        raw = np.abs(np.einsum("ni,ni->n", q[ok] - c, normal))
        if valid.any():
            valid[valid] = _gate(raw[valid], cfg)
        if valid.any():
            beta = plane_weights(neigh[valid], c[valid], normal[valid], cfg.beta_floor)
            blocks.append(_plane_block(features.planar[ok][valid], c[valid], normal[valid], beta))
            n_p = int(valid.sum())
    return blocks, n_e, n_p


def scan_to_submap(features: FeatureSet, submap: Submap, initial: RigidTransform, cfg: SubmapConfig | None = None):
    """Refine the world pose of a scan against the feature submap.

    Correspondences, line/plane fits and beta weights are recomputed at
    every outer iteration. Returns ``(pose, SolveReport)``.
    """
    cfg = cfg or SubmapConfig()
    if len(submap.edge_points) < MIN_EDGE or len(submap.planar_points) < MIN_PLANAR:
        raise DegenerateSubmap(f"submap has {len(submap.edge_points)} edge / "
                               f"{len(submap.planar_points)} planar points")
    T = initial
    history = []
    total = 0
    report = None
    first = None
    for _ in range(cfg.max_iterations):
        blocks, n_e, n_p = submap_terms(features, submap, T, cfg)
        if n_e + n_p < 6:
            raise InsufficientCorrespondences(f"{n_e + n_p} submap correspondences")
        T_new, report = minimize(blocks, T, cfg.solver, manifold=SE3())
        if report.termination == Termination.NUMERICAL_FAILURE:
            raise NumericalFailure("scan-to-submap solve failed")
        if first is None:
            first = report.initial_cost
        total += report.iterations
        history.extend(report.cost_history)
        step = geodesic_angle(T.rotation, T_new.rotation) + np.linalg.norm(T_new.translation - T.translation)
        T = T_new
        if step < cfg.tolerance:
            break
    return T, SolveReport(report.final_cost, total, report.converged, report.termination, first, history)


def feature_fitness(features: FeatureSet, submap: Submap, T: RigidTransform, cfg: SubmapConfig | None = None):
    """Mean point-to-line / point-to-plane distance of the matched features."""
    cfg = cfg or SubmapConfig()
    cfg = replace(cfg, max_neighbor_distance=np.inf)
    dists = []
    k = cfg.neighbors
    if len(features.edge) and submap.edge_tree is not None and len(submap.edge_points) >= k:
        q = T.apply(features.edge)
        idx, _ = _neighbors(submap.edge_tree, q, k, np.inf)
        c, direction, valid = fit_edges(submap.edge_points[idx], cfg.edge_ratio, cfg.fit_tolerance)
        dists.append(np.linalg.norm(np.cross(q - c, direction), axis=1)[valid])
    if len(features.planar) and submap.planar_tree is not None and len(submap.planar_points) >= k:
        q = T.apply(features.planar)
        idx, _ = _neighbors(submap.planar_tree, q, k, np.inf)
        c, normal, valid = fit_planes(submap.planar_points[idx], cfg.plane_ratio, cfg.fit_tolerance)
        dists.append(np.abs(np.einsum("ni,ni->n", q - c, normal))[valid])
    d = np.concatenate(dists) if dists else np.zeros(0)
    return float(d.mean()) if len(d) else np.inf


# -- loop closure -------------------------------------------------------------------

@dataclass(eq=False)
class LoopClosure:
    current_id: int
    matched_id: int
    relative: RigidTransform
    fitness: float

    def __post_init__(self):
        if not self.matched_id < self.current_id:
            raise ValueError("matched_id must precede current_id")


@dataclass
class LoopConfig:
    radius: float = 5.0
    time_gap: float = 30.0
    fitness: float = 0.3
    min_history: int = 3
    # keyframes on each side of the candidate used for its local submap
    submap_half_window: int = 2
    # loop drift is larger than frame-to-frame motion, so the pyramid starts coarser
    coarse: FrontEndConfig = field(default_factory=lambda: FrontEndConfig(lambda_ct=0.0, max_source_points=4000,
                                                                          pyramid=(8.0, 4.0, 2.0, 1.0)))
    submap: SubmapConfig = field(default_factory=SubmapConfig)


def detect_loop(current: Keyframe, history, cfg: LoopConfig | None = None) -> Optional[LoopClosure]:
    """Radius + time-gap candidate search followed by registration verification.

    The nearest qualifying keyframe is aligned twice: a coarse voxel
    registration of the stored clouds (when both keyframes carry one) and
    a feature refinement against a small submap around the candidate. The
    loop is accepted when the mean feature residual is below
    ``cfg.fitness``.
    """
    cfg = cfg or LoopConfig()
    history = [kf for kf in history if kf.id != current.id]
    if len(history) < cfg.min_history:
        return None
    pos = np.array([kf.pose.translation for kf in history])
    stamps = np.array([kf.stamp for kf in history])
    dist = np.linalg.norm(pos - current.pose.translation, axis=1)
    cand = np.flatnonzero((dist <= cfg.radius) & (current.stamp - stamps >= cfg.time_gap))
    if len(cand) == 0:
        return None
    best = int(cand[np.argmin(dist[cand])])
    match_kf = history[best]
    guess = match_kf.pose.inverse() @ current.pose
    if current.points is not None and match_kf.points is not None:
        try:
            src = Scan.from_points(current.points)
            coarse, _, _, _ = register_pair(src, match_kf.points, cfg.coarse, guess.translation, guess.rotation)
            guess = coarse
        except (InsufficientCorrespondences, NumericalFailure, EmptyScan):
            return None
    lo, hi = max(0, best - cfg.submap_half_window), best + cfg.submap_half_window + 1
    local = [replace(kf, pose=match_kf.pose.inverse() @ kf.pose) for kf in history[lo:hi]]
    submap = build_submap(local, len(local))
    try:
        rel, _ = scan_to_submap(current.features, submap, guess, cfg.submap)
    except (DegenerateSubmap, InsufficientCorrespondences, NumericalFailure):
        return None
    fit = feature_fitness(current.features, submap, rel, cfg.submap)
    if fit >= cfg.fitness:
        return None
    return LoopClosure(current.id, match_kf.id, rel, fit)


# -- pose graph --------------------------------------------------------------------

@dataclass(eq=False)
class PoseNode:
    id: int
    state: RigidTransform


@dataclass(eq=False)
class Factor:
    """Relative-pose measurement ``Z ~ X_i^-1 X_j``."""

    i: int
    j: int
    measurement: RigidTransform
    information: Optional[np.ndarray] = None


def _batched_error(Ri, ti, Rj, tj, ZR, Zt):
    # E = Z^-1 (X_i^-1 X_j)
    Rrel = np.einsum("nji,njk->nik", Ri, Rj)
    trel = np.einsum("nji,nj->ni", Ri, tj - ti)
    RE = np.einsum("nji,njk->nik", ZR, Rrel)
    tE = np.einsum("nji,nj->ni", ZR, trel - Zt)
    return np.concatenate([_batched_log(RE), tE], axis=1)


def _batched_log(R):
    return np.stack([so3_log(r) for r in R]) if len(R) < 4 else _vector_log(R)


def _vector_log(R):
    cos = np.clip((np.einsum("nii->n", R) - 1) / 2, -1.0, 1.0)
    theta = np.arccos(cos)
    v = np.stack([R[:, 2, 1] - R[:, 1, 2], R[:, 0, 2] - R[:, 2, 0], R[:, 1, 0] - R[:, 0, 1]], axis=1)
    small = theta < 1e-6
    near_pi = np.pi - theta < 1e-4
    scale = np.where(small, 0.5 + theta**2 / 12, theta / (2 * np.sin(np.where(small | near_pi, 1.0, theta))))
    out = scale[:, None] * v
    for k in np.flatnonzero(near_pi):
        out[k] = so3_log(R[k])
    return out


def graph_block(factors, manifold: PoseSet, fd_step=1e-6):
    """All relative-pose factors as one residual block with a sparse Jacobian."""
    fi = np.array([f.i for f in factors], dtype=np.int64)
    fj = np.array([f.j for f in factors], dtype=np.int64)
    ZR = np.stack([f.measurement.rotation for f in factors])
    Zt = np.stack([f.measurement.translation for f in factors])
    info = np.stack([np.eye(6) if f.information is None else np.asarray(f.information, dtype=float)
                     for f in factors])
    m = len(factors)

    def unpack(poses):
        R = np.stack([p.rotation for p in poses])
        t = np.stack([p.translation for p in poses])
        return R, t

    def residual(poses):
        R, t = unpack(poses)
        return _batched_error(R[fi], t[fi], R[fj], t[fj], ZR, Zt)

    def jacobian(poses):
        R, t = unpack(poses)
        Ri, ti, Rj, tj = R[fi], t[fi], R[fj], t[fj]
        rows, cols, vals = [], [], []
        base_rows = np.arange(m)[:, None] * 6 + np.arange(6)[None, :]
        for side, nodes in ((0, fi), (1, fj)):
            slot = np.array([manifold.slot.get(int(n), -1) for n in nodes])
            live = slot >= 0
            if not live.any():
                continue
            for d in range(6):
                e = np.zeros(6)
                cols_d = slot * 6 + d
                derivs = []
                for sign in (1.0, -1.0):
                    e[d] = sign * fd_step
                    if d < 3:
                        dR = so3_exp(e[:3])
                        if side == 0:
                            r = _batched_error(dR @ Ri, ti, Rj, tj, ZR, Zt)
                        else:
                            r = _batched_error(Ri, ti, dR @ Rj, tj, ZR, Zt)
                    else:
                        if side == 0:
                            r = _batched_error(Ri, ti + e[3:], Rj, tj, ZR, Zt)
                        else:
                            r = _batched_error(Ri, ti, Rj, tj + e[3:], ZR, Zt)
                    derivs.append(r)
                col_vals = (derivs[0] - derivs[1]) / (2 * fd_step)
                rows.append(base_rows[live].ravel())
                cols.append(np.repeat(cols_d[live], 6))
                vals.append(col_vals[live].ravel())
        if not rows:
            return sp.csr_matrix((m * 6, manifold.dim))
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(m * 6, manifold.dim))

    return ResidualBlock(residual, information=info, jacobian_fn=jacobian)


def optimize_graph(nodes, odometry_factors, loop_factors=(), cfg: SolverConfig | None = None):
    """Jointly adjust node poses; node 0 is held fixed. Returns ``(nodes, SolveReport)``."""
    nodes = list(nodes)
    factors = list(odometry_factors) + list(loop_factors)
    if len(nodes) <= 1 or not factors:
        return nodes, SolveReport(0.0, 0, True, Termination.COST_TOL, 0.0, [0.0])
    order = {n.id: k for k, n in enumerate(nodes)}
    remapped = [Factor(order[f.i], order[f.j], f.measurement, f.information) for f in factors]
    manifold = PoseSet(len(nodes), fixed=(0,))
    block = graph_block(remapped, manifold)
    poses, report = minimize([block], [n.state for n in nodes], cfg or SolverConfig(max_iterations=30),
                             manifold=manifold)
    if report.termination == Termination.NUMERICAL_FAILURE:
        raise NumericalFailure("pose graph solve failed")
    out = [nodes[0]] + [PoseNode(n.id, p) for n, p in zip(nodes[1:], poses[1:])]
    return out, report


# -- the full SLAM pipeline -----------------------------------------------------------

@dataclass
class BackEndConfig:
    window: int = 10
    keyframes: KeyframePolicy = field(default_factory=KeyframePolicy)
    submap: SubmapConfig = field(default_factory=SubmapConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    loop_closure: bool = True
    queue_size: int = 10
    # points kept per keyframe cloud for loop verification
    keyframe_points: int = 8000

    def __post_init__(self):
        check_int(self.window, "window", 1)
        check_int(self.queue_size, "queue_size", 1)


class BackEnd:
    """Consumes front-end results in order and maintains the keyframe graph."""

    def __init__(self, cfg: BackEndConfig | None = None, features: FeatureConfig | None = None):
        self.cfg = cfg or BackEndConfig()
        self.feature_cfg = features or FeatureConfig()
        self.keyframes: list = []
        self.factors: list = []
        self.loops: list = []
        self.selector = KeyframeSelector(self.cfg.keyframes)
        self.anchor = []  # per scan: (keyframe id, pose relative to it)
        self.pose = None
        self.submap = None
        self.lock = threading.Lock()
        self.diagnostics = []

    def _submap(self):
        if self.submap is None:
            self.submap = build_submap(self.keyframes, self.cfg.window)
        return self.submap

    def add(self, scan: Scan, relative: RigidTransform):
        """Integrate one deskewed scan with its front-end relative motion."""
        t0 = time.perf_counter()
        feats = extract_features(scan, self.feature_cfg)
        t1 = time.perf_counter()
        diag = {"refined": False, "loop": None, "features_ms": 1e3 * (t1 - t0)}
        initial = RigidTransform.identity() if self.pose is None else self.pose @ relative
        pose = initial
        if self.keyframes:
            try:
                pose, rep = scan_to_submap(feats, self._submap(), initial, self.cfg.submap)
                diag["refined"] = True
                diag["submap_report"] = rep
            except (DegenerateSubmap, InsufficientCorrespondences, NumericalFailure) as exc:
                diag["error"] = repr(exc)
        self.pose = pose
        cloud = None
        if self.cfg.loop_closure and len(scan):
            step = max(1, len(scan) // self.cfg.keyframe_points)
            cloud = scan.points[::step]
        kf = self.selector(pose, scan.stamp, feats, cloud)
        if kf is not None:
            with self.lock:
                self._add_keyframe(kf, diag)
        last = self.keyframes[-1]
        self.anchor.append((last.id, last.pose.inverse() @ pose))
        diag["backend_ms"] = 1e3 * (time.perf_counter() - t1)
        self.diagnostics.append(diag)
        return pose

    def _add_keyframe(self, kf: Keyframe, diag):
        if self.keyframes:
            prev = self.keyframes[-1]
            self.factors.append(Factor(prev.id, kf.id, prev.pose.inverse() @ kf.pose))
        self.keyframes.append(kf)
        self.submap = None
        if not self.cfg.loop_closure:
            return
        loop = detect_loop(kf, self.keyframes, self.cfg.loop)
        if loop is None:
            return
        self.loops.append(loop)
        diag["loop"] = loop
        nodes = [PoseNode(k.id, k.pose) for k in self.keyframes]
        loop_factors = [Factor(lc.matched_id, lc.current_id, lc.relative) for lc in self.loops]
        nodes, _ = optimize_graph(nodes, self.factors, loop_factors)
        for k, node in zip(self.keyframes, nodes):
            k.pose = node.state
        self.pose = kf.pose
        self.submap = None

    def trajectory(self):
        by_id = {kf.id: kf.pose for kf in self.keyframes}
        return [by_id[i] @ rel for i, rel in self.anchor]


_DONE = object()


class RoloSLAM(BaseEstimator):
    """Front-end odometry with scan-to-submap refinement and loop closure.

    ``fit(scans)`` runs the front-end in a producer thread that feeds the
    back-end through a bounded queue; ``trajectory_`` holds the refined
    (loop-corrected) pose of every scan and ``odometry_`` the front-end
    chain.
    """

    def __init__(self, lambda_ct=0.5, resolution=1.0, max_source_points=6000, window=10,
                 keyframe_interval=1.0, keyframe_distance=1.0, keyframe_angle=np.radians(10.0),
                 loop_closure=True, loop_radius=5.0, loop_time_gap=30.0, loop_fitness=0.3,
                 queue_size=10, asynchronous=True):
        self.lambda_ct = lambda_ct
        self.resolution = resolution
        self.max_source_points = max_source_points
        self.window = window
        self.keyframe_interval = keyframe_interval
        self.keyframe_distance = keyframe_distance
        self.keyframe_angle = keyframe_angle
        self.loop_closure = loop_closure
        self.loop_radius = loop_radius
        self.loop_time_gap = loop_time_gap
        self.loop_fitness = loop_fitness
        self.queue_size = queue_size
        self.asynchronous = asynchronous

    def _configs(self):
        check_positive(self.keyframe_interval, "keyframe_interval")
        front = FrontEndConfig(lambda_ct=self.lambda_ct, resolution=self.resolution,
                               max_source_points=self.max_source_points)
        back = BackEndConfig(window=self.window,
                             keyframes=KeyframePolicy(self.keyframe_interval, self.keyframe_distance,
                                                      self.keyframe_angle),
                             loop=LoopConfig(radius=self.loop_radius, time_gap=self.loop_time_gap,
                                             fitness=self.loop_fitness),
                             loop_closure=self.loop_closure, queue_size=self.queue_size)
        return front, back

    def fit(self, X, y=None):
        front, back = self._configs()
        self.front_config_, self.back_config_ = front, back
        self.backend_ = BackEnd(back)
        state = OdometryState()
        self.odometry_ = []
        self.front_diagnostics_ = []
        self.stamps_ = []
        q = queue.Queue(maxsize=back.queue_size)
        errors = []

        def produce(sink):
            try:
                for scan in X:
                    rel, diag = process_scan(scan, state, front)
                    self.odometry_.append(state.pose)
                    self.front_diagnostics_.append(diag)
                    self.stamps_.append(scan.stamp)
                    sink((state.scan, rel))
            except BaseException as exc:  # surfaced in the consumer
                errors.append(exc)
            finally:
                sink(_DONE)

        if self.asynchronous:
            worker = threading.Thread(target=produce, args=(q.put,), daemon=True)
            worker.start()
            while (item := q.get()) is not _DONE:
                self.backend_.add(*item)
            worker.join()
        else:
            produce(lambda item: item is _DONE or self.backend_.add(*item))
        if errors:
            raise errors[0]
        self.trajectory_ = self.backend_.trajectory()
        self.keyframes_ = self.backend_.keyframes
        self.loops_ = self.backend_.loops
        return self

    def predict(self, X=None):
        check_is_fitted(self, "trajectory_")
        return list(self.trajectory_)
