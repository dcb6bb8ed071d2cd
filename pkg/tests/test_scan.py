import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rolo.exceptions import DegenerateRing
from rolo.geometry import RigidTransform, from_euler, rot_z
from rolo.scan import FeatureConfig, FeatureExtractor, FeatureSet, Scan, deskew, empty_scan, extract_features, smoothness
from rolo.synth import LidarModel, generate_world, simulate_scan


def line_scan(points, ring=0):
    pts = np.asarray(points, dtype=float)
    return Scan.from_points(pts, ring=np.full(len(pts), ring), time_offset=np.linspace(0, 0.1, len(pts)))


# -- Scan ---------------------------------------------------------------------

def test_scan_validates_time_offsets():
    with pytest.raises(ValueError):
        Scan.from_points(np.ones((2, 3)), time_offset=[0.0, 0.5], sweep_duration=0.1)


def test_scan_validates_ring_range():
    with pytest.raises(ValueError):
        Scan.from_points(np.ones((2, 3)), ring=[0, 4], n_rings=4)


def test_default_noise_covariance_is_isotropic():
    s = Scan.from_points(np.ones((3, 3)))
    np.testing.assert_allclose(s.noise_cov, np.broadcast_to(0.02**2 * np.eye(3), (3, 3, 3)))


# -- deskew ---------------------------------------------------------------------

def test_deskew_identity_is_bitwise_noop(box_scan):
    out = deskew(box_scan, RigidTransform.identity())
    assert np.array_equal(out.points, box_scan.points)


def test_deskew_endpoint_anchors():
    s = Scan.from_points([[5.0, 0, 0], [5.0, 0, 0]], time_offset=[0.1, 0.0], sweep_duration=0.1)
    out = deskew(s, RigidTransform.from_translation([1, 0, 0]))
    np.testing.assert_allclose(out.points[0], [5, 0, 0], atol=1e-12)
    np.testing.assert_allclose(out.points[1], [4, 0, 0], atol=1e-12)


def test_deskew_keeps_point_count(box_scan):
    out = deskew(box_scan, RigidTransform(rot_z(0.02), [0.1, 0, 0]))
    assert len(out) == len(box_scan)


@pytest.mark.parametrize("mode", ["linear", "screw"])
def test_deskew_equivariance(box_scan, mode, rng):
    motion = RigidTransform(from_euler(0.01, -0.02, 0.05), [0.3, 0.05, -0.02])
    # linear interpolation commutes with rotations of the frame only
    G = RigidTransform(from_euler(0.3, -0.2, 1.0), [0, 0, 0] if mode == "linear" else [2.0, -1.0, 0.5])
    a = deskew(box_scan, motion, mode).transformed(G)
    b = deskew(box_scan.transformed(G), G @ motion @ G.inverse(), mode)
    np.testing.assert_allclose(a.points, b.points, atol=1e-9)


def test_deskew_undoes_simulated_distortion(box_world):
    model = LidarModel(range_noise_sigma=0.0)
    end = RigidTransform(rot_z(0.03), [0.4, 0.1, 0.0])
    motion = end  # the sweep starts at the origin
    moving = simulate_scan(box_world, end, model, motion=motion)
    fixed = deskew(moving, motion)
    d_before = box_world_distance(box_world, end.apply(moving.points))
    d_after = box_world_distance(box_world, end.apply(fixed.points))
    assert d_after.max() < 1e-9 < d_before.max()


def box_world_distance(world, pts):
    return np.min([np.abs((pts - pl.point) @ pl.normal) for pl in world.planes], axis=0)


# -- smoothness -------------------------------------------------------------------

def test_smoothness_collinear_is_zero():
    s = line_scan([[x, 5.0, 0.0] for x in np.linspace(-1, 1, 11)])
    assert smoothness(s)[5] == pytest.approx(0.0, abs=1e-12)


def test_smoothness_corner_exceeds_flat():
    pts = [[x, 5.0, 0] for x in np.linspace(-3, 0, 7)] + [[0, 5.0 - y, 0] for y in np.linspace(0.5, 3, 6)]
    c = smoothness(line_scan(pts))
    corner = 6
    assert c[corner] > c[5] and c[corner] > np.nanmin(c)


def test_smoothness_boundaries_are_nan():
    c = smoothness(line_scan(np.random.default_rng(0).normal(size=(20, 3)) + 5))
    assert np.all(np.isnan(c[:5])) and np.all(np.isnan(c[-5:])) and np.all(np.isfinite(c[5:-5]))


def test_short_ring_is_degenerate():
    s = line_scan(np.ones((6, 3)))
    assert np.all(np.isnan(smoothness(s)))
    with pytest.raises(DegenerateRing):
        smoothness(s, strict=True)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 50.0), st.integers(0, 10_000))
def test_smoothness_range_scale_invariant(k, seed):
    pts = np.random.default_rng(seed).normal(size=(15, 3)) + [10, 0, 0]
    a = smoothness(line_scan(pts))
    b = smoothness(line_scan(k * pts))
    np.testing.assert_allclose(a, b, atol=1e-9, equal_nan=True)


# -- features ------------------------------------------------------------------------

def test_flat_ground_has_no_edges():
    world = generate_world(0, preset="ground")
    scan = simulate_scan(world, RigidTransform.from_translation([0, 0, 1.8]), LidarModel(range_noise_sigma=0.0))
    f = extract_features(scan)
    assert len(f.edge) == 0 and len(f.planar) > 0


def test_box_edges_on_vertical_wall_intersections(box_world, box_scan):
    f = extract_features(box_scan)
    assert len(f.edge) > 20
    vertical = [e for e in box_world.edges if abs(e.direction[2]) > 0.9]
    assert len(vertical) == 4
    d = np.min([e.distance(f.edge) for e in vertical], axis=0)
    assert np.mean(d < 0.5) >= 0.9
    assert np.all(box_world.edge_distance(f.edge) < 0.5)


def test_empty_scan_gives_empty_features():
    f = extract_features(empty_scan())
    assert len(f) == 0 and f.edge.shape == (0, 3)


def test_feature_sets_disjoint_and_spread(box_scan):
    cfg = FeatureConfig()
    f = extract_features(box_scan, cfg)
    assert not set(f.edge_index) & set(f.planar_index)
    ring = box_scan.ring
    for r in np.unique(ring[f.edge_index]):
        idx = np.sort(f.edge_index[ring[f.edge_index] == r])
        assert np.all(np.diff(idx) > cfg.window)


def test_feature_extractor_matches_function(box_scan):
    est = FeatureExtractor()
    out = est.fit(None).transform(box_scan)
    ref = extract_features(box_scan)
    assert isinstance(out, FeatureSet)
    np.testing.assert_array_equal(out.edge_index, ref.edge_index)
    assert est.get_params()["window"] == 5
    many = est.transform([box_scan, box_scan])
    assert len(many) == 2
