import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rolo.exceptions import InsufficientCorrespondences
from rolo.front_end import (
    FrontEndConfig,
    OdometryState,
    RoloOdometry,
    optimize_translation,
    predict_location,
    process_scan,
    register_pair,
    register_rotation,
    regularize_covariance,
    spherical_terms,
    translation_cost,
)
from rolo.geometry import RigidTransform, from_euler, geodesic_angle
from rolo.scan import Scan
from rolo.voxel_grid import build_voxel_map, match


def state(t_prev, t_now, tau_prev, tau_now):
    return OdometryState(RigidTransform.from_translation(t_now), tau_now,
                         RigidTransform.from_translation(t_prev), tau_prev)


# -- forward location prediction -----------------------------------------------------

def test_predict_uniform_motion():
    np.testing.assert_allclose(predict_location(state([0, 0, 0], [1, 0, 0], 0.0, 0.1), 0.2), [2, 0, 0])


def test_predict_stationary():
    np.testing.assert_allclose(predict_location(state([5, 5, 0], [5, 5, 0], 0.0, 0.1), 0.2), [5, 5, 0])


def test_predict_uneven_steps():
    np.testing.assert_allclose(predict_location(state([0, 0, 0], [1, 0, 0], 0.0, 0.1), 0.3), [3, 0, 0])


def test_predict_first_scan_returns_current():
    s = OdometryState(RigidTransform.from_translation([1, 2, 3]), 0.5)
    np.testing.assert_array_equal(predict_location(s, 0.6), [1, 2, 3])


def test_state_requires_increasing_stamps():
    with pytest.raises(ValueError):
        state([0, 0, 0], [1, 0, 0], 0.2, 0.1)
    with pytest.raises(ValueError):
        predict_location(state([0, 0, 0], [1, 0, 0], 0.0, 0.1), 0.1)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.floats(0.0, 100.0), st.floats(1e-3, 2.0), st.floats(1e-3, 2.0))
def test_predict_exact_on_constant_velocity(p0, v, tau0, dt1, dt2):
    p0, v = np.array(p0), np.array(v)
    at = lambda tau: p0 + v * (tau - tau0)  # noqa: E731
    s = state(at(tau0), at(tau0 + dt1), tau0, tau0 + dt1)
    pred = predict_location(s, tau0 + dt1 + dt2)
    # the exact answer is itself rounded; compare in float arithmetic of the same path
    assert np.abs(pred - at(tau0 + dt1 + dt2)).max() < 1e-12 * max(1.0, np.abs(at(tau0 + dt1 + dt2)).max())


# -- regularization --------------------------------------------------------------------

def test_regularized_spectrum_1000_random(rng):
    A = rng.normal(size=(1000, 3, 3))
    cov = A @ np.swapaxes(A, 1, 2)
    out = regularize_covariance(cov, 1e-3)
    lam_in = np.linalg.eigvalsh(cov)[:, 2]
    lam = np.linalg.eigvalsh(out)
    np.testing.assert_allclose(lam[:, 2], lam_in, atol=1e-9)
    np.testing.assert_allclose(lam[:, 1], lam_in, atol=1e-9)
    np.testing.assert_allclose(lam[:, 0], 1e-3 * lam_in, atol=1e-9)


def test_regularization_keeps_smallest_eigenvector(rng):
    A = rng.normal(size=(3, 3))
    cov = A @ A.T
    u = np.linalg.eigh(cov)[1][:, 0]
    out = regularize_covariance(cov, 1e-3)
    np.testing.assert_allclose(out @ u, 1e-3 * np.linalg.eigvalsh(cov)[2] * u, atol=1e-9)


def test_isotropic_tie_broken_by_ray():
    n = np.array([0.0, 0.6, 0.8])
    out = regularize_covariance(np.eye(3), 1e-3, axis_hint=n)
    np.testing.assert_allclose(out @ n, 1e-3 * n, atol=1e-12)


# -- spherical residual -------------------------------------------------------------------

def test_projected_mean_lies_on_ray(rng):
    q = rng.normal(scale=5, size=(50, 3))
    means = q + rng.normal(size=(50, 3))
    proj, res, _, n = spherical_terms(q, means, np.eye(3))
    np.testing.assert_allclose(np.cross(proj, n), 0, atol=1e-9)
    np.testing.assert_allclose(np.einsum("ni,ni->n", res, n), 0, atol=1e-9)


def test_angle_increases_with_residual():
    r = 7.0
    alpha = np.linspace(0, np.pi / 2, 200)
    q = r * np.stack([np.cos(alpha), np.sin(alpha), 0 * alpha], axis=1)
    means = np.tile([10.0, 0, 0], (len(alpha), 1))
    _, res, angle, _ = spherical_terms(q, means, np.eye(3))
    dist = np.linalg.norm(res, axis=1)
    np.testing.assert_allclose(angle, alpha, atol=1e-7)
    assert np.all(np.diff(dist) > 0)


# -- rotation registration -------------------------------------------------------------------

CFG = FrontEndConfig()


def test_rotation_identity_on_identical_cloud(box_scan):
    vmap = build_voxel_map(box_scan, 1.0, covariance="sample")
    sub = box_scan.select(np.arange(0, len(box_scan), 5))
    R, _ = register_rotation(sub, vmap, None, CFG)
    assert geodesic_angle(R, np.eye(3)) < 1e-8


def test_rotation_known_euler_noiseless(box_scan):
    R_true = from_euler(*np.radians([2.0, 3.0, 5.0]))
    vmap = build_voxel_map(box_scan, 1.0, covariance="sample")
    src = box_scan.transformed(RigidTransform.from_rotation(R_true.T)).select(np.arange(0, len(box_scan), 5))
    R, rep = register_rotation(src, vmap, None, CFG)
    assert np.degrees(geodesic_angle(R, R_true)) < 0.1
    assert rep.final_cost <= rep.initial_cost


def test_rotation_is_translation_blind(box_scan):
    R_true = from_euler(*np.radians([1.0, -2.0, 4.0]))
    vmap = build_voxel_map(box_scan, 1.0, covariance="sample")
    src = box_scan.transformed(RigidTransform.from_rotation(R_true.T)).select(np.arange(0, len(box_scan), 5))
    shift = np.array([3.0, -2.0, 1.0])
    R1, _ = register_rotation(src, vmap, None, CFG)
    R2, _ = register_rotation(src.with_points(src.points + shift), vmap, None, CFG, source_center=shift)
    assert geodesic_angle(R1, R2) < 1e-6


def test_rotation_needs_correspondences():
    pts = np.random.default_rng(0).normal(size=(200, 3)) + 20
    vmap = build_voxel_map(pts, 1.0)
    with pytest.raises(InsufficientCorrespondences):
        register_rotation(pts[:5] + 100, vmap, None, CFG)


# -- translation ---------------------------------------------------------------------------

def _translation_setup(scan, t_true, t_flp):
    vmap = build_voxel_map(scan.points + t_true - t_flp, 1.0, covariance="sample")
    return match(scan, vmap, CFG.n_min)


def test_translation_perfect_prediction(box_scan):
    t = np.array([0.4, -0.2, 0.1])
    corr = _translation_setup(box_scan, t, t)
    out, _ = optimize_translation(corr, np.eye(3), t, box_scan, CFG)
    np.testing.assert_allclose(out, t, atol=1e-6)


@pytest.mark.parametrize("lam", [0.0, 0.5, 2.0])
def test_translation_known_offset(box_scan, lam):
    t_true = np.array([0.5, 0.2, 0.0])
    t_flp = t_true - np.array([0.3, -0.1, 0.05])
    T, *_ = register_pair(box_scan, box_scan.points + t_true, FrontEndConfig(lambda_ct=lam), t_flp)
    assert np.linalg.norm(T.translation - t_true) < 0.02


def _small_instance(rng):
    means = rng.uniform(1, 9, (8, 3)).round()
    pts = np.repeat(means, 13, axis=0)[:100] + rng.uniform(-0.3, 0.3, (100, 3))
    covs = np.einsum("nij,nkj->nik", *(2 * [rng.normal(scale=0.05, size=(100, 3, 3))]))
    scan = Scan.from_points(pts, noise_cov=covs)
    vmap = build_voxel_map(scan, 1.0, covariance="sample")
    src = scan.with_points(pts - rng.normal(scale=0.03, size=3))
    return src, match(src, vmap, 1)


def _oracle_weights(corr, src):
    S = corr.covs + 1e-6 * np.eye(3) + src.noise_cov[corr.source_index]
    return corr.counts.astype(float)[:, None, None] ** 2 * np.linalg.inv(S)


def test_translation_lambda_zero_matches_closed_form(rng):
    cfg = FrontEndConfig(lambda_ct=0.0, refresh_correspondences=False, translation_iterations=1)
    for _ in range(20):
        src, corr = _small_instance(rng)
        W = _oracle_weights(corr, src)
        target = corr.means - src.points[corr.source_index]
        t_star = np.linalg.solve(W.sum(axis=0), np.einsum("nij,nj->i", W, target))
        t, _ = optimize_translation(corr, np.eye(3), np.zeros(3), src, cfg)
        np.testing.assert_allclose(t, t_star, atol=1e-4)


def test_translation_objective_equals_oracle(rng):
    cfg = FrontEndConfig(lambda_ct=0.0)
    src, corr = _small_instance(rng)
    W = _oracle_weights(corr, src)
    t = rng.normal(scale=0.1, size=3)
    r = corr.means - src.points[corr.source_index] - t
    oracle = float(np.einsum("ni,nij,nj->", r, W, r))
    assert translation_cost(corr, np.eye(3), t, src, cfg) == pytest.approx(oracle, rel=1e-9, abs=1e-9)


# -- per-scan pipeline ---------------------------------------------------------------------------

def _stamped(scan, stamp):
    return Scan(scan.points, scan.time_offset, scan.ring, scan.noise_cov, stamp, scan.sweep_duration, scan.n_rings)


def test_first_scan_boots(box_scan):
    st_ = OdometryState()
    T, diag = process_scan(_stamped(box_scan, 0.0), st_)
    assert T.allclose(RigidTransform.identity()) and diag["boot"] and st_.scan is not None


def test_identical_scans_stationary(box_scan):
    # exact with every point used: each voxel mean then balances its own points
    st_ = OdometryState()
    cfg = FrontEndConfig(max_source_points=None, coarse_fraction=1.0)
    process_scan(_stamped(box_scan, 0.0), st_, cfg)
    T, diag = process_scan(_stamped(box_scan, 0.1), st_, cfg)
    assert np.abs(T.translation).max() < 1e-6
    assert geodesic_angle(T.rotation, np.eye(3)) < 1e-6
    for key in ("deskew_ms", "voxelize_ms", "rotation_ms", "translation_ms"):
        assert diag[key] >= 0


def test_identical_scans_default_subsample(box_scan):
    # a subsample no longer balances the voxel means; the bias stays sub-millimetre
    st_ = OdometryState()
    process_scan(_stamped(box_scan, 0.0), st_)
    T, _ = process_scan(_stamped(box_scan, 0.1), st_)
    assert np.abs(T.translation).max() < 1e-3
    assert np.degrees(geodesic_angle(T.rotation, np.eye(3))) < 0.01


def test_degenerate_frame_falls_back_to_prediction(box_scan):
    st_ = OdometryState()
    process_scan(_stamped(box_scan, 0.0), st_)
    head = box_scan.select(np.arange(50))
    far = _stamped(head.with_points(head.points + 500.0), 0.1)
    T, diag = process_scan(far, st_)
    assert diag["degenerate"] and "DegenerateFrame" in diag["error"]
    np.testing.assert_array_equal(T.rotation, np.eye(3))


def test_odometry_estimator_api(box_world):
    from rolo.synth import LidarModel, TrajectoryParams, simulate_sequence
    traj = TrajectoryParams(kind="straight", speed=1.0, start=(-3.0, 0.0, 0.0), n_scans=4)
    seq = simulate_sequence(box_world, traj, LidarModel(range_noise_sigma=0.0))
    est = RoloOdometry(max_source_points=3000).fit(seq.scans)
    assert len(est.predict()) == 4
    truth = seq.poses[0].inverse() @ seq.poses[-1]
    assert np.linalg.norm(est.trajectory_[-1].translation - truth.translation) < 0.02
    assert est.get_params()["lambda_ct"] == 0.5
    clone = RoloOdometry(**est.get_params())
    assert clone.get_params() == est.get_params()


def test_config_validation():
    with pytest.raises(ValueError):
        FrontEndConfig(max_spherical_angle=2.0)
    with pytest.raises(ValueError):
        FrontEndConfig(lambda_ct=-1.0)
    with pytest.raises(ValueError):
        FrontEndConfig(coarse_fraction=0.0)
