"""Rigid-body algebra on SO(3) / SE(3).

Rotations are stored as plain 3x3 ``numpy`` arrays. Increments used by the
optimizers are 3-vector axis-angle perturbations applied on the left,
``R <- exp(delta) @ R``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from rolo.exceptions import GimbalLock

GIMBAL_MARGIN = 1e-6


def hat(v):
    """Skew-symmetric matrix of ``v``; works on (3,) or (n, 3) input."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def so3_exp(omega):
    """Rodrigues' formula. Accepts (3,) or (n, 3)."""
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega, axis=-1)[..., None, None]
    K = hat(omega)
    K2 = K @ K
    small = theta < 1e-8
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(theta) / np.where(small, 1.0, theta))
        b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(theta)) / np.where(small, 1.0, theta**2))
    return np.eye(3) + a * K + b * K2


def so3_log(R):
    """Axis-angle vector of a rotation matrix, angle in [0, pi]."""
    R = np.asarray(R, dtype=float)
    cos_t = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_t)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-8:
        return 0.5 * w
    if np.pi - theta < 1e-6:
        # near pi the antisymmetric part vanishes; recover the axis from R + I
        B = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        if np.dot(axis, w) < 0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * w


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def from_euler(roll, pitch, yaw):
    """ZYX intrinsic convention: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def euler_angles(R):
    """Inverse of :func:`from_euler`; returns ``(roll, pitch, yaw)`` in radians.

    Raises :class:`GimbalLock` when pitch is within 1e-6 rad of +-pi/2, where
    roll and yaw are no longer separable and a matrix comparison must be used.
    """
    R = np.asarray(R, dtype=float)
    cp = np.hypot(R[0, 0], R[1, 0])
    pitch = np.arctan2(-R[2, 0], cp)
    if np.pi / 2 - abs(pitch) <= GIMBAL_MARGIN:
        raise GimbalLock(f"pitch {pitch:.9f} rad is within {GIMBAL_MARGIN} of +-pi/2")
    roll = np.arctan2(R[2, 1], R[2, 2])
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return float(roll), float(pitch), float(yaw)


def orthonormalize(R):
    """Nearest rotation in Frobenius norm (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def geodesic_angle(Ra, Rb):
    """Angle in radians of the relative rotation ``Ra^T Rb``.

    Uses ``atan2(sin, cos)`` so tiny angles keep full precision.
    """
    D = np.asarray(Ra).T @ np.asarray(Rb)
    c = (np.trace(D) - 1.0) / 2.0
    s = 0.5 * np.linalg.norm([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]])
    return float(np.arctan2(s, c))


def is_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(np.abs(R.T @ R - np.eye(3)).max() <= tol and abs(np.linalg.det(R) - 1.0) <= tol)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Pose ``[R | t]``; maps a point ``p`` to ``R @ p + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3], M[:3, 3])

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    @classmethod
    def from_rotation(cls, R):
        return cls(R, np.zeros(3))

    def as_matrix(self):
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def apply(self, points):
        """Transform (3,) or (n, 3) points."""
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def inverse(self):
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def __matmul__(self, other):
        if isinstance(other, RigidTransform):
            return compose(self, other)
        return NotImplemented

    def orthonormalized(self):
        return RigidTransform(orthonormalize(self.rotation), self.translation)

    def allclose(self, other, atol=1e-9):
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0.0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0.0, atol=atol)
        )

    def __repr__(self):
        rpy = np.degrees(np.array(euler_angles(self.rotation))) if abs(self.rotation[2, 0]) < 1 - 1e-9 else None
        return f"RigidTransform(t={np.round(self.translation, 6).tolist()}, rpy_deg={None if rpy is None else np.round(rpy, 4).tolist()})"


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """``a @ b``: apply ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    return t.inverse()


def se3_exp(xi):
    """Exponential of a twist ``(omega, v)`` (screw motion)."""
    xi = np.asarray(xi, dtype=float)
    omega, v = xi[:3], xi[3:]
    theta = np.linalg.norm(omega)
    K = hat(omega)
    if theta < 1e-8:
        V = np.eye(3) + 0.5 * K + K @ K / 6.0
    else:
        V = (
            np.eye(3)
            + (1.0 - np.cos(theta)) / theta**2 * K
            + (theta - np.sin(theta)) / theta**3 * (K @ K)
        )
    return RigidTransform(so3_exp(omega), V @ v)


def se3_log(T: RigidTransform):
    omega = so3_log(T.rotation)
    theta = np.linalg.norm(omega)
    K = hat(omega)
    if theta < 1e-8:
        V_inv = np.eye(3) - 0.5 * K + K @ K / 12.0
    else:
        half = theta / 2.0
        V_inv = np.eye(3) - 0.5 * K + (1.0 - half / np.tan(half)) / theta**2 * (K @ K)
    return np.concatenate([omega, V_inv @ T.translation])


def interpolate(T: RigidTransform, s, mode="linear"):
    """Fraction ``s`` of the motion ``T`` starting from identity.

    ``linear`` scales translation linearly and the rotation angle at constant
    rate; ``screw`` follows the constant-twist path ``exp(s log T)``.
    """
    if mode == "linear":
        return RigidTransform(so3_exp(s * so3_log(T.rotation)), s * T.translation)
    if mode == "screw":
        return se3_exp(s * se3_log(T))
    raise ValueError(f"unknown interpolation mode {mode!r}")


def pose_error(estimate: RigidTransform, truth: RigidTransform):
    """(translation error in m, rotation error in rad) between two poses."""
    return (
        float(np.linalg.norm(estimate.translation - truth.translation)),
        geodesic_angle(estimate.rotation, truth.rotation),
    )


@dataclass(frozen=True)
class ExtrinsicChain:
    """Ordered vehicle-to-LiDAR link transforms."""

    links: tuple

    def __post_init__(self):
        links = tuple(self.links)
        if not links:
            raise ValueError("extrinsic chain needs at least one link")
        for link in links:
            if not isinstance(link, RigidTransform) or not is_rotation(link.rotation):
                raise ValueError("every chain link must be a valid RigidTransform")
        object.__setattr__(self, "links", links)

    def product(self) -> RigidTransform:
        out = RigidTransform.identity()
        for link in self.links:
            out = compose(out, link)
        return out


def vehicle_pose_from_lidar(lidar_pose: RigidTransform, chain: ExtrinsicChain | Sequence[RigidTransform]) -> RigidTransform:
    """Left-multiply the link product onto the LiDAR world pose."""
    if not isinstance(chain, ExtrinsicChain):
        chain = ExtrinsicChain(tuple(chain))
    return compose(chain.product(), lidar_pose)
