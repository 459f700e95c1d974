"""Rotation and rigid-transform helpers (right-handed, column-vector convention).

Rotation vectors use the axis-angle exponential map; quaternions are
scalar-last ``[x, y, z, w]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def hat(w) -> np.ndarray:
    """Skew-symmetric matrix such that ``hat(w) @ v == np.cross(w, v)``."""
    x, y, z = np.asarray(w, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotvec_to_matrix(w) -> np.ndarray:
    """Rodrigues formula; series expansion below 1e-8 rad for stability."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    K = hat(w)
    if theta < 1e-8:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def matrix_to_rotvec(R) -> np.ndarray:
    """Logarithm of a rotation matrix; stable near 0 and near pi."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-8:
        return 0.5 * v
    if np.pi - theta < 1e-6:
        # Near pi the off-diagonal difference vanishes; recover the axis from
        # the symmetric part (R + I)/2 == axis axis^T at theta == pi.
        B = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k].copy()
        axis[k] = max(B[k, k], 0.0)
        nrm = np.linalg.norm(axis)
        if nrm < 1e-12:
            return np.array([np.pi, 0.0, 0.0])
        axis = axis / nrm
        if axis @ v < 0.0:
            axis = -axis
        return axis * theta
    return v * (theta / (2.0 * np.sin(theta)))


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix from a scalar-last quaternion [x, y, z, w]."""
    x, y, z, w = np.asarray(q, dtype=float)
    n = np.sqrt(x * x + y * y + z * z + w * w)
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    x, y, z, w = x / n, y / n, z / n, w / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R) -> np.ndarray:
    """Scalar-last quaternion from a rotation matrix, w >= 0 for canonical output."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s, 0.25 * s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        if i == 0:
            s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
            q = np.array(
                [0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s, (R[2, 1] - R[1, 2]) / s]
            )
        elif i == 1:
            s = np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
            q = np.array(
                [(R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s, (R[0, 2] - R[2, 0]) / s]
            )
        else:
            s = np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
            q = np.array(
                [(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s, (R[1, 0] - R[0, 1]) / s]
            )
    q = q / np.linalg.norm(q)
    if q[3] < 0.0:
        q = -q
    return q


def rpy_to_matrix(rpy) -> np.ndarray:
    """Extrinsic x-y-z (roll, pitch, yaw) rotation matrix."""
    r, p, y = np.asarray(rpy, dtype=float)
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1.0]])
    Ry = np.array([[cp, 0, sp], [0, 1.0, 0], [-sp, 0, cp]])
    Rx = np.array([[1.0, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return Rz @ Ry @ Rx


def matrix_to_rpy(R) -> np.ndarray:
    """Extrinsic x-y-z (roll, pitch, yaw) angles; gimbal lock resolved with yaw = 0."""
    R = np.asarray(R, dtype=float)
    sp = -R[2, 0]
    if abs(sp) >= 1.0 - 1e-12:
        pitch = np.pi / 2.0 if sp > 0 else -np.pi / 2.0
        roll = np.arctan2(-R[1, 2], R[1, 1])
        yaw = 0.0
    else:
        pitch = np.arcsin(sp)
        roll = np.arctan2(R[2, 1], R[2, 2])
        yaw = np.arctan2(R[1, 0], R[0, 0])
    return np.array([roll, pitch, yaw])


def normalized(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise ValueError("cannot normalize a near-zero vector")
    return v / n


def frame_with_z(z) -> np.ndarray:
    """Deterministic orthonormal frame whose third column is the unit vector z."""
    z = normalized(z)
    helper = np.array([0.0, 0.0, 1.0]) if abs(z[2]) <= 0.9 else np.array([1.0, 0.0, 0.0])
    x = normalized(np.cross(helper, z))
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def minimal_rotation(a, b) -> np.ndarray:
    """Smallest rotation matrix mapping unit vector a onto unit vector b.

    The antiparallel case picks a deterministic perpendicular axis.
    """
    a = normalized(a)
    b = normalized(b)
    c = float(np.clip(a @ b, -1.0, 1.0))
    if c >= 1.0 - 1e-12:
        return np.eye(3)
    if c <= -1.0 + 1e-12:
        axis = frame_with_z(a)[:, 0]
        return rotvec_to_matrix(axis * np.pi)
    axis = np.cross(a, b)
    angle = np.arctan2(float(np.linalg.norm(axis)), c)
    return rotvec_to_matrix(normalized(axis) * angle)


@dataclass(frozen=True, eq=False)
class Transform:
    """Rigid transform: ``x_world = rotation @ x_local + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    @staticmethod
    def identity() -> "Transform":
        return Transform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_parts(rotation=None, translation=None) -> "Transform":
        R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
        p = np.zeros(3) if translation is None else np.asarray(translation, dtype=float)
        return Transform(R.copy(), p.copy())

    def compose(self, other: "Transform") -> "Transform":
        return Transform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Transform":
        Rt = self.rotation.T
        return Transform(Rt, -(Rt @ self.translation))

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def is_rigid(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return (
            np.allclose(R.T @ R, np.eye(3), atol=tol)
            and abs(float(np.linalg.det(R)) - 1.0) <= 10 * tol
        )


def transforms_allclose(a: Transform, b: Transform, atol: float = 1e-9) -> bool:
    return np.allclose(a.rotation, b.rotation, atol=atol) and np.allclose(
        a.translation, b.translation, atol=atol
    )
