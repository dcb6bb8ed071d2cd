import numpy as np
import pytest

from conftest import random_rotation, random_transform
from rolo.exceptions import GimbalLock
from rolo.geometry import (
    ExtrinsicChain,
    RigidTransform,
    compose,
    euler_angles,
    from_euler,
    geodesic_angle,
    interpolate,
    invert,
    is_rotation,
    orthonormalize,
    rot_z,
    se3_exp,
    se3_log,
    so3_exp,
    so3_log,
    vehicle_pose_from_lidar,
)

I = RigidTransform.identity()


def test_compose_identity():
    assert compose(I, I).allclose(I)


def test_compose_with_inverse(rng):
    T = random_transform(rng)
    assert compose(T, invert(T)).allclose(I)
    assert compose(invert(T), T).allclose(I)


def test_compose_applies_right_operand_first():
    a = RigidTransform.from_rotation(rot_z(np.pi / 2))
    b = RigidTransform.from_translation([1, 0, 0])
    np.testing.assert_allclose(compose(a, b).apply(np.zeros(3)), [0, 1, 0], atol=1e-12)


def test_invert_examples():
    assert invert(I).allclose(I)
    assert invert(RigidTransform.from_translation([1, 2, 3])).allclose(RigidTransform.from_translation([-1, -2, -3]))
    T = RigidTransform(rot_z(np.pi / 2), [1, 0, 0])
    assert invert(T).allclose(RigidTransform(rot_z(-np.pi / 2), [0, 1, 0]))


def test_euler_examples():
    assert euler_angles(np.eye(3)) == (0.0, 0.0, 0.0)
    np.testing.assert_allclose(euler_angles(rot_z(0.3)), (0, 0, 0.3), atol=1e-12)
    np.testing.assert_allclose(euler_angles(from_euler(0.1, 0.2, 0.3)), (0.1, 0.2, 0.3), atol=1e-12)


def test_gimbal_lock_raises():
    with pytest.raises(GimbalLock):
        euler_angles(from_euler(0.1, np.pi / 2, 0.2))


def test_euler_round_trip_1000(rng):
    for _ in range(1000):
        roll, yaw = rng.uniform(-np.pi, np.pi, 2)
        pitch = rng.uniform(*np.radians([-80, 80]))
        R = from_euler(roll, pitch, yaw)
        np.testing.assert_allclose(from_euler(*euler_angles(R)), R, atol=1e-9)


def test_group_laws(rng):
    for _ in range(200):
        a, b, c = (random_transform(rng) for _ in range(3))
        assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)))
        assert compose(a, invert(a)).allclose(I)


def test_renormalization_after_long_chain(rng):
    R = np.eye(3)
    for _ in range(10_000):
        R = R @ random_rotation(rng)
    fixed = orthonormalize(R)
    assert np.abs(fixed.T @ fixed - np.eye(3)).max() < 1e-9
    assert is_rotation(fixed)


def test_vehicle_pose_examples():
    P = RigidTransform.from_translation([1, 0, 0])
    assert vehicle_pose_from_lidar(P, [I]).allclose(P)
    out = vehicle_pose_from_lidar(P, ExtrinsicChain((RigidTransform.from_translation([0, 0, 0.5]),)))
    assert out.allclose(RigidTransform.from_translation([1, 0, 0.5]))


def test_vehicle_pose_chain_associativity(rng):
    a, b, P = (random_transform(rng) for _ in range(3))
    two = vehicle_pose_from_lidar(P, [a, b])
    one = vehicle_pose_from_lidar(P, [compose(a, b)])
    assert two.allclose(one)


def test_empty_chain_rejected():
    with pytest.raises(ValueError):
        ExtrinsicChain(())


def test_so3_log_exp_round_trip(rng):
    for _ in range(200):
        w = rng.normal(size=3)
        w *= rng.uniform(0, np.pi - 1e-3) / np.linalg.norm(w)
        np.testing.assert_allclose(so3_log(so3_exp(w)), w, atol=1e-9)


def test_so3_log_near_pi():
    w = np.array([0.0, 0.0, np.pi - 1e-9])
    np.testing.assert_allclose(so3_exp(so3_log(so3_exp(w))), so3_exp(w), atol=1e-9)


def test_se3_round_trip(rng):
    for _ in range(50):
        T = random_transform(rng, max_angle=3.0)
        assert se3_exp(se3_log(T)).allclose(T, atol=1e-9)


def test_interpolate_endpoints(rng):
    T = random_transform(rng, max_angle=1.0)
    for mode in ("linear", "screw"):
        assert interpolate(T, 0.0, mode).allclose(I)
        assert interpolate(T, 1.0, mode).allclose(T)


def test_geodesic_angle():
    assert geodesic_angle(np.eye(3), rot_z(0.4)) == pytest.approx(0.4)
