"""Front-end odometry: forward location prediction, spherical rotation
registration against a Gaussian voxel map, and continuous-time translation
optimization."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator

from rolo._validation import check_int, check_is_fitted, check_positive, check_vector3, uniform_isotropic
from rolo.exceptions import (
    DegenerateFrame,
    EmptyScan,
    InsufficientCorrespondences,
    NumericalFailure,
)
from rolo.geometry import RigidTransform, geodesic_angle, hat, so3_exp, so3_log
from rolo.scan import Scan, deskew
from rolo.solver import Euclidean, ResidualBlock, SO3, SolverConfig, SolveReport, Termination, minimize
from rolo.voxel_grid import COVARIANCE_FLOOR, Correspondences, VoxelMap, build_voxel_map, match

MIN_TERMS = 10


@dataclass
class OdometryState:
    pose: RigidTransform = field(default_factory=RigidTransform.identity)
    stamp: float = 0.0
    prev_pose: Optional[RigidTransform] = None
    prev_stamp: Optional[float] = None
    # not part of the motion model; carried so process_scan can voxelize
    # the previous sweep and warm-start the rotation
    scan: Optional[Scan] = None
    last_delta: RigidTransform = field(default_factory=RigidTransform.identity)
    frames: int = 0

    def __post_init__(self):
        if self.prev_stamp is not None and not self.stamp > self.prev_stamp:
            raise ValueError("stamp must be strictly greater than prev_stamp")


@dataclass
class FrontEndConfig:
    lambda_ct: float = 0.5
    n_min: int = 5
    resolution: float = 1.0
    svd_epsilon_ratio: float = 1e-3
    max_spherical_angle: float = np.pi / 2
    count_weight: str = "linear"
    rotation_iterations: int = 15
    translation_iterations: int = 30
    refresh_correspondences: bool = True
    max_source_points: Optional[int] = 6000
    covariance: str = "sample"
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(max_iterations=5))
    # voxel sizes of the coarse-to-fine passes, as multiples of ``resolution``
    pyramid: tuple = (4.0, 2.0, 1.0)
    # share of the source points used at the coarse levels
    coarse_fraction: float = 0.3
    # outer-loop stop: rotation change (rad) / translation step (m)
    rotation_tolerance: float = 1e-6
    translation_tolerance: float = 1e-5
    deskew: bool = True

    def __post_init__(self):
        check_positive(self.lambda_ct, "lambda_ct", strict=False)
        check_int(self.n_min, "n_min", 1)
        check_positive(self.resolution, "resolution")
        check_positive(self.svd_epsilon_ratio, "svd_epsilon_ratio")
        if not 0 < self.max_spherical_angle <= np.pi / 2:
            raise ValueError("max_spherical_angle must lie in (0, pi/2]")
        if not 0 < self.coarse_fraction <= 1:
            raise ValueError("coarse_fraction must lie in (0, 1]")
        if not self.pyramid or min(self.pyramid) <= 0:
            raise ValueError("pyramid must hold positive scale factors")
        if self.count_weight not in ("linear", "sqrt"):
            raise ValueError("count_weight must be 'linear' or 'sqrt'")


# -- forward location prediction -------------------------------------------

def predict_location(state: OdometryState, next_stamp: float):
    """Constant-velocity extrapolation of the position to ``next_stamp``."""
    if not next_stamp > state.stamp:
        raise ValueError("next_stamp must be later than the current stamp")
    t_k = state.pose.translation
    if state.prev_pose is None or state.prev_stamp is None:
        return t_k.copy()
    ratio = (next_stamp - state.stamp) / (state.stamp - state.prev_stamp)
    return t_k + ratio * (t_k - state.prev_pose.translation)


# -- rotation registration ----------------------------------------------------

class RankOneInformation(NamedTuple):
    """Information ``alpha I + beta u u^T`` per term (the inverse of a floored
    ``(l, l, eps)`` covariance)."""

    alpha: np.ndarray
    beta: np.ndarray
    axis: np.ndarray

    def take(self, index):
        return RankOneInformation(self.alpha[index], self.beta[index], self.axis[index])

    def matrices(self):
        u = self.axis
        return self.alpha[:, None, None] * np.eye(3) + self.beta[:, None, None] * (u[:, :, None] * u[:, None, :])


def _regularized_spectrum(cov, epsilon_ratio=1e-3, axis_hint=None):
    """``(l_max, eps, u)`` such that the regularized covariance is ``l_max I - (l_max - eps) u u^T``."""
    cov = np.asarray(cov, dtype=float).reshape(-1, 3, 3)
    lam, U = np.linalg.eigh(0.5 * (cov + np.swapaxes(cov, 1, 2)))
    lam_max = lam[:, 2]
    eps = epsilon_ratio * lam_max
    low = U[:, :, 0].copy()
    if axis_hint is not None:
        hint = np.broadcast_to(np.asarray(axis_hint, dtype=float).reshape(-1, 3), (len(cov), 3))
        tol = 1e-9 * np.maximum(lam_max, 1e-300)
        tie01 = lam[:, 1] - lam[:, 0] <= tol
        tie_all = tie01 & (lam[:, 2] - lam[:, 0] <= tol)
        # project the hint onto the degenerate low eigenspace
        proj2 = (np.einsum("ni,ni->n", hint, U[:, :, 0])[:, None] * U[:, :, 0]
                 + np.einsum("ni,ni->n", hint, U[:, :, 1])[:, None] * U[:, :, 1])
        cand = np.where(tie_all[:, None], hint, proj2)
        norm = np.linalg.norm(cand, axis=1)
        use = (tie01 | tie_all) & (norm > 1e-6)
        low[use] = cand[use] / norm[use, None]
    return lam_max, eps, low


def regularize_covariance(cov, epsilon_ratio=1e-3, axis_hint=None):
    """Rebuild covariances with spectrum ``(l_max, l_max, eps)``.

    The eigenvectors come from the decomposition of each (symmetric PSD)
    input, so this is the SVD reconstruction with the singular values
    replaced. ``eps = epsilon_ratio * l_max``. When the smallest eigenvalue
    is repeated the decomposition is not unique; ``axis_hint`` (one unit
    vector per matrix) then picks the vector inside that eigenspace that
    receives ``eps``.
    """
    single = np.ndim(cov) == 2
    lam_max, eps, low = _regularized_spectrum(cov, epsilon_ratio, axis_hint)
    out = lam_max[:, None, None] * np.eye(3) - (lam_max - eps)[:, None, None] * (low[:, :, None] * low[:, None, :])
    return out[0] if single else out


def spherical_terms(source_points, means, rotation):
    """Projected voxel means and radial residuals for rotated source points.

    Returns ``(projected, residual, angle, n)``; the projection of the mean
    onto the tangent plane through ``R p`` lies on the mean's ray.
    """
    q = source_points @ rotation.T
    norm_m = np.linalg.norm(means, axis=1)
    n = means / norm_m[:, None]
    scale = norm_m - np.einsum("ni,ni->n", means - q, means) / norm_m
    projected = scale[:, None] * n
    residual = projected - q
    qn = np.linalg.norm(q, axis=1)
    cos_a = np.clip(np.einsum("ni,ni->n", q, n) / np.maximum(qn, 1e-300), -1.0, 1.0)
    return projected, residual, np.arccos(cos_a), n


def rotation_information(voxel_covs, voxel_means, source_covs, rotation, epsilon_ratio) -> RankOneInformation:
    """Per-term information for the spherical residual.

    Builds ``voxel_cov + R^T source_cov R``, regularizes it to the
    ``(l_max, l_max, eps)`` spectrum and inverts it after the covariance
    floor. The inverse is returned in closed form; ``.matrices()`` expands
    it to 3x3 blocks.
    """
    n = voxel_means / np.linalg.norm(voxel_means, axis=1, keepdims=True)
    R = rotation
    cov_prime = voxel_covs + COVARIANCE_FLOOR * np.eye(3) + R.T @ source_covs @ R
    lam, eps, u = _regularized_spectrum(cov_prime, epsilon_ratio, axis_hint=n)
    alpha = 1.0 / (lam + COVARIANCE_FLOOR)
    return RankOneInformation(alpha, 1.0 / (eps + COVARIANCE_FLOOR) - alpha, u)


def rotation_block(points, means, information):
    """Residual block for ``sum d_i^T W_i d_i`` with ``d_i = p'_k - R p_i``.

    ``information`` is a :class:`RankOneInformation` (terms are then
    whitened elementwise and the solver sees unit weights) or an array of
    3x3 matrices.
    """
    n = means / np.linalg.norm(means, axis=1, keepdims=True)

    def raw_residual(R):
        q = points @ R.T
        return np.einsum("ni,ni->n", q, n)[:, None] * n - q

    def raw_jacobian(R):
        q = points @ R.T
        # (I - n n^T) [q]x
        return hat(q) - n[:, :, None] * np.cross(n, q)[:, None, :]

    if not isinstance(information, RankOneInformation):
        return ResidualBlock(raw_residual, information=information, jacobian_fn=raw_jacobian)
    # L^T = sqrt(a) I + c u u^T with (sqrt(a) + c)^2 = a + b
    sa = np.sqrt(information.alpha)
    c = np.sqrt(information.alpha + information.beta) - sa
    u = information.axis

    def residual(R):
        d = raw_residual(R)
        return sa[:, None] * d + (c * np.einsum("ni,ni->n", u, d))[:, None] * u

    def jacobian(R):
        J = raw_jacobian(R)
        return sa[:, None, None] * J + c[:, None, None] * u[:, :, None] * np.einsum("ni,nij->nj", u, J)[:, None, :]

    return ResidualBlock(residual, jacobian_fn=jacobian)


def _subsample(n, limit):
    if limit is None or n <= limit:
        return np.arange(n)
    # an integer stride keeps the sampling pattern regular along each ring
    return np.arange(0, n, -(-n // limit))


def register_rotation(source, vmap: VoxelMap, corr: Correspondences | None, cfg: FrontEndConfig | None = None,
                      initial=None, source_center=None):
    """Rotation-only alignment of ``source`` to the voxel means of ``vmap``.

    Both clouds must share the sensor origin; ``source_center``, when given,
    is subtracted from the source points first. Correspondences are
    re-matched after each outer iteration when
    ``cfg.refresh_correspondences`` is set. Returns ``(R, SolveReport)``.
    """
    cfg = cfg or FrontEndConfig()
    pts_all = source.points if isinstance(source, Scan) else np.asarray(source, dtype=float)
    covs_all = source.noise_cov if isinstance(source, Scan) else np.broadcast_to(0.02**2 * np.eye(3), (len(pts_all), 3, 3))
    if source_center is not None:
        pts_all = pts_all - check_vector3(source_center, "source_center")
    R = np.eye(3) if initial is None else np.asarray(initial, dtype=float)
    if corr is None:
        corr = match(pts_all @ R.T, vmap, cfg.n_min)
    # with identical isotropic source noise, R^T S R = S and the weights are per voxel
    s2 = uniform_isotropic(covs_all)
    voxel_info = None
    if s2 is not None and len(vmap):
        voxel_info = rotation_information(vmap.covs, vmap.means, np.broadcast_to(s2 * np.eye(3), vmap.covs.shape),
                                          np.eye(3), cfg.svd_epsilon_ratio)
    total_iters = 0
    history = []
    report = None
    first_cost = None
    prev_pairs = None
    for outer in range(cfg.rotation_iterations):
        if outer > 0 and cfg.refresh_correspondences:
            corr = match(pts_all @ R.T, vmap, cfg.n_min)
        idx = corr.source_index
        points = pts_all[idx]
        means = corr.means
        _, _, angle, _ = spherical_terms(points, means, R)
        keep = (angle <= cfg.max_spherical_angle) & (np.linalg.norm(means, axis=1) > 1e-9)
        if keep.sum() < MIN_TERMS:
            raise InsufficientCorrespondences(f"{int(keep.sum())} usable rotation terms (< {MIN_TERMS})")
        if voxel_info is not None:
            info = voxel_info.take(corr.slot[keep])
        else:
            info = rotation_information(corr.covs[keep], means[keep], covs_all[idx[keep]], R, cfg.svd_epsilon_ratio)
        block = rotation_block(points[keep], means[keep], info)
        R_new, report = minimize([block], R, cfg.solver, manifold=SO3())
        if first_cost is None:
            first_cost = report.initial_cost
        if report.termination == Termination.NUMERICAL_FAILURE:
            raise NumericalFailure("rotation solve failed")
        total_iters += report.iterations
        history.extend(report.cost_history)
        change = geodesic_angle(R, R_new)
        R = R_new
        pairs = (idx[keep].tobytes(), corr.slot[keep].tobytes())
        if change < cfg.rotation_tolerance or pairs == prev_pairs:
            break
        prev_pairs = pairs
    final = SolveReport(report.final_cost, total_iters, report.converged, report.termination, first_cost, history)
    return R, final


# -- continuous-time translation optimization ---------------------------------

def _count_scale(counts, mode):
    counts = counts.astype(float)
    return counts if mode == "linear" else np.sqrt(counts)


def translation_information(corr_covs, source_covs, rotation):
    """Inverse of ``voxel_cov + R^T source_cov R`` after the covariance floor."""
    R = rotation
    cov = corr_covs + COVARIANCE_FLOOR * np.eye(3) + R.T @ source_covs @ R
    return np.linalg.inv(cov)


def translation_blocks(points, rotation, corr_means, corr_counts, icp_information,
                       lambda_ct, t_prev, count_weight="linear"):
    """F_ICP and (when ``lambda_ct > 0``) F_CT blocks in the correction ``t``.

    The CT displacement of a point is its offset between the candidate
    transform and the predicted one, which is ``t`` for every matched point;
    ``t_prev`` is that displacement at the previous iteration and
    ``t_prev (x) t_prev`` its covariance. The ``m`` identical CT terms are
    folded into one term with ``m`` times the weight.
    """
    rp = points @ rotation.T
    Nj = _count_scale(corr_counts, count_weight)
    m = len(points)
    target = corr_means - rp

    def icp_res(t):
        return Nj[:, None] * (target - t)

    def icp_jac(t):
        return np.broadcast_to(-Nj[:, None, None] * np.eye(3), (m, 3, 3))

    blocks = [ResidualBlock(icp_res, information=icp_information, jacobian_fn=icp_jac)]
    if lambda_ct > 0 and m:
        t_prev = np.asarray(t_prev, dtype=float)
        info = m * lambda_ct * np.linalg.inv(np.outer(t_prev, t_prev) + COVARIANCE_FLOOR * np.eye(3))
        blocks.append(ResidualBlock(lambda t: t - t_prev, information=info,
                                    jacobian_fn=lambda t: np.eye(3)[None]))
    return blocks


def _translation_weights(corr, source_covs, rotation, voxel_info):
    if voxel_info is not None:
        return voxel_info[corr.slot]
    return translation_information(corr.covs, source_covs[corr.source_index], rotation)


def translation_cost(corr: Correspondences, rotation, t_correction, source, cfg: FrontEndConfig | None = None,
                     t_prev=None):
    """Objective value of the translation problem at ``t_correction``."""
    cfg = cfg or FrontEndConfig()
    pts = source.points if isinstance(source, Scan) else np.asarray(source, dtype=float)
    covs = source.noise_cov if isinstance(source, Scan) else np.broadcast_to(0.02**2 * np.eye(3), (len(pts), 3, 3))
    idx = corr.source_index
    t_prev = np.zeros(3) if t_prev is None else t_prev
    info = translation_information(corr.covs, covs[idx], np.asarray(rotation, dtype=float))
    blocks = translation_blocks(pts[idx], rotation, corr.means, corr.counts, info,
                                cfg.lambda_ct, t_prev, cfg.count_weight)
    t = check_vector3(t_correction)
    return float(sum(b.cost(t) for b in blocks))


def optimize_translation(corr: Correspondences, rotation, t_flp, source, cfg: FrontEndConfig | None = None,
                         source_center=None):
    """Translation refinement with the rotation held fixed.

    ``source`` is expressed about the shared origin used for the rotation
    stage (pass ``source_center`` to subtract it); the optimized correction
    is added to the predicted translation ``t_flp``. Returns
    ``(translation, SolveReport)``.
    """
    cfg = cfg or FrontEndConfig()
    t_flp = check_vector3(t_flp, "t_flp")
    pts = source.points if isinstance(source, Scan) else np.asarray(source, dtype=float)
    covs = source.noise_cov if isinstance(source, Scan) else np.broadcast_to(0.02**2 * np.eye(3), (len(pts), 3, 3))
    if source_center is not None:
        pts = pts - check_vector3(source_center, "source_center")
    R = np.asarray(rotation, dtype=float)
    vmap = corr.map
    s2 = uniform_isotropic(covs)
    voxel_info = None
    if s2 is not None and len(vmap):
        voxel_info = translation_information(vmap.covs, np.broadcast_to(s2 * np.eye(3), vmap.covs.shape), R)
    prev_pairs = None
    t = np.zeros(3)
    t_prev = np.zeros(3)
    history = []
    total = 0
    report = None
    first_cost = None
    for outer in range(cfg.translation_iterations):
        if outer > 0 and cfg.refresh_correspondences:
            corr = match(pts @ R.T + t, vmap, cfg.n_min)
        if len(corr) < MIN_TERMS:
            raise InsufficientCorrespondences(f"{len(corr)} translation terms (< {MIN_TERMS})")
        idx = corr.source_index
        blocks = translation_blocks(pts[idx], R, corr.means, corr.counts,
                                    _translation_weights(corr, covs, R, voxel_info),
                                    cfg.lambda_ct, t_prev, cfg.count_weight)
        t_new, report = minimize(blocks, t, cfg.solver, manifold=Euclidean(3))
        if first_cost is None:
            first_cost = report.initial_cost
        if report.termination == Termination.NUMERICAL_FAILURE:
            raise NumericalFailure("translation solve failed")
        total += report.iterations
        history.extend(report.cost_history)
        step = np.linalg.norm(t_new - t)
        t_prev = t_new.copy()
        t = t_new
        pairs = (idx.tobytes(), corr.slot.tobytes())
        if step < cfg.translation_tolerance or pairs == prev_pairs:
            break
        prev_pairs = pairs
    final = SolveReport(report.final_cost, total, report.converged, report.termination, first_cost, history)
    return t + t_flp, final


# -- per-scan pipeline ----------------------------------------------------------

def _relative_prediction(state: OdometryState, stamp):
    t_world = predict_location(state, stamp)
    return state.pose.rotation.T @ (t_world - state.pose.translation)


def register_pair(source: Scan, target_points, cfg: FrontEndConfig, t_flp, initial_rotation=None, timing=None):
    """Full rotation + translation estimate of ``source`` against ``target_points``.

    ``target_points`` are in the target sensor frame; the returned transform
    maps source points into that frame. Each level of ``cfg.pyramid``
    (multiples of ``cfg.resolution``, coarse first) re-centres the target on
    the current translation estimate, then runs the rotation and the
    translation stage. Stage times (ms) are added to ``timing`` when given.
    """
    timing = {} if timing is None else timing
    clock = time.perf_counter
    t_cur = check_vector3(t_flp)
    target_points = np.asarray(target_points, dtype=float)
    keep = _subsample(len(source), cfg.max_source_points)
    src = source.select(keep) if len(keep) < len(source) else source
    R = np.eye(3) if initial_rotation is None else np.asarray(initial_rotation, dtype=float)
    rot_report = tr_report = None
    n_corr = 0
    n_coarse = max(int(cfg.coarse_fraction * len(src)), min(len(src), 20 * MIN_TERMS))
    sparse = src.select(_subsample(len(src), n_coarse)) if n_coarse < len(src) else src
    for k, scale in enumerate(cfg.pyramid):
        final = k == len(cfg.pyramid) - 1
        coarse = 1.0 if final else 100.0
        level_src = src if final else sparse
        level = replace(cfg, resolution=cfg.resolution * scale,
                        rotation_tolerance=coarse * cfg.rotation_tolerance,
                        translation_tolerance=coarse * cfg.translation_tolerance)
        if not final:
            # coarse passes only seed the next level
            level = replace(level, rotation_iterations=max(1, cfg.rotation_iterations // 3),
                            translation_iterations=max(1, cfg.translation_iterations // 3))
        t0 = clock()
        vmap = build_voxel_map(target_points - t_cur, level.resolution, covariance=cfg.covariance)
        t1 = clock()
        R, rot_report = register_rotation(level_src, vmap, None, level, R)
        t2 = clock()
        corr = match(level_src.points @ R.T, vmap, cfg.n_min)
        t_cur, tr_report = optimize_translation(corr, R, t_cur, level_src, level)
        t3 = clock()
        for key, dt in (("voxelize_ms", t1 - t0), ("rotation_ms", t2 - t1), ("translation_ms", t3 - t2)):
            timing[key] = timing.get(key, 0.0) + 1e3 * dt
        n_corr = len(corr)
    return RigidTransform(R, t_cur), rot_report, tr_report, n_corr


def sweep_motion(delta: RigidTransform, interval, sweep_duration):
    """Constant-velocity motion over one sweep from the last frame-to-frame delta."""
    ratio = sweep_duration / interval
    return RigidTransform(so3_exp(ratio * so3_log(delta.rotation)), ratio * delta.translation)


def process_scan(scan: Scan, state: OdometryState, cfg: FrontEndConfig | None = None):
    """Advance the odometry by one scan.

    Returns ``(relative, diagnostics)`` where ``relative`` maps points of
    ``scan`` into the previous scan's frame; ``state`` is updated in place.
    """
    cfg = cfg or FrontEndConfig()
    diag = {"degenerate": False, "n_correspondences": 0}
    t0 = time.perf_counter()
    if state.scan is None:
        state.scan = scan
        state.stamp = scan.stamp
        state.frames = 1
        diag["boot"] = True
        return RigidTransform.identity(), diag
    if not scan.stamp > state.stamp:
        raise ValueError("scan stamps must increase")
    raw = scan
    interval = scan.stamp - state.stamp
    t_ds = time.perf_counter()
    if cfg.deskew and state.prev_stamp is not None:
        scan = deskew(raw, sweep_motion(state.last_delta, state.stamp - state.prev_stamp, raw.sweep_duration))
    diag["deskew_ms"] = 1e3 * (time.perf_counter() - t_ds)
    t_flp = _relative_prediction(state, scan.stamp)
    diag["t_flp"] = t_flp
    R0 = state.last_delta.rotation
    try:
        if len(scan) == 0 or len(state.scan) == 0:
            raise EmptyScan("empty scan")
        relative, rot_rep, tr_rep, n_corr = register_pair(scan, state.scan.points, cfg, t_flp, R0, diag)
        diag.update(rotation_report=rot_rep, translation_report=tr_rep, n_correspondences=n_corr)
    except (InsufficientCorrespondences, NumericalFailure, EmptyScan) as exc:
        relative = RigidTransform(np.eye(3), t_flp)
        diag["degenerate"] = True
        diag["error"] = repr(DegenerateFrame(str(exc)))
    new_pose = state.pose @ relative
    state.prev_pose, state.prev_stamp = state.pose, state.stamp
    state.pose, state.stamp = new_pose, scan.stamp
    if cfg.deskew and not diag["degenerate"]:
        # the next target is re-deskewed with the motion just estimated
        t_ds = time.perf_counter()
        scan = deskew(raw, sweep_motion(relative, interval, raw.sweep_duration))
        diag["deskew_ms"] += 1e3 * (time.perf_counter() - t_ds)
    state.scan = scan
    state.last_delta = relative
    state.frames += 1
    diag["time_ms"] = 1e3 * (time.perf_counter() - t0)
    return relative, diag


class RoloOdometry(BaseEstimator):
    """Front-end odometry estimator.

    ``fit(scans)`` runs the whole sequence and stores ``trajectory_`` (world
    poses of each scan, first pose = identity unless ``initial_pose`` is
    given) and ``relative_`` (frame-to-frame transforms). ``partial_fit``
    consumes one scan at a time.
    """

    def __init__(self, lambda_ct=0.5, n_min=5, resolution=1.0, svd_epsilon_ratio=1e-3,
                 max_spherical_angle=np.pi / 2, max_source_points=6000, count_weight="linear",
                 rotation_iterations=15, translation_iterations=30, covariance="sample",
                 initial_pose=None):
        self.lambda_ct = lambda_ct
        self.n_min = n_min
        self.resolution = resolution
        self.svd_epsilon_ratio = svd_epsilon_ratio
        self.max_spherical_angle = max_spherical_angle
        self.max_source_points = max_source_points
        self.count_weight = count_weight
        self.rotation_iterations = rotation_iterations
        self.translation_iterations = translation_iterations
        self.covariance = covariance
        self.initial_pose = initial_pose

    def _config(self):
        params = self.get_params()
        params.pop("initial_pose")
        return FrontEndConfig(**params)

    def _reset(self):
        self.config_ = self._config()
        self.state_ = OdometryState(pose=self.initial_pose or RigidTransform.identity())
        self.trajectory_ = []
        self.relative_ = []
        self.stamps_ = []
        self.diagnostics_ = []

    def partial_fit(self, scan: Scan):
        if not hasattr(self, "state_"):
            self._reset()
        rel, diag = process_scan(scan, self.state_, self.config_)
        self.relative_.append(rel)
        self.trajectory_.append(self.state_.pose)
        self.stamps_.append(scan.stamp)
        self.diagnostics_.append(diag)
        return self

    def fit(self, X, y=None):
        self._reset()
        for scan in X:
            self.partial_fit(scan)
        return self

    def predict(self, X=None):
        """World poses of the fitted sequence."""
        check_is_fitted(self, "trajectory_")
        return list(self.trajectory_)
