"""Rotation matrices, quaternion algebra and attitude covariance mapping.

Conventions used across the package:

* Quaternions are scalar-first ``[w, x, y, z]`` Hamilton quaternions.
* A quaternion ``q`` describes the body-to-inertial rotation, i.e.
  ``to_dcm(q) @ v_body == v_inertial``.
* Euler angles are the aerospace 3-2-1 sequence (yaw, then pitch, then roll).
* Inertial frame is North-East-Down.
"""

from __future__ import annotations

import math

import numpy as np

COV_REGULARIZATION = 1e-12


class DegenerateQuaternionError(ValueError):
    """Raised when a quaternion has (numerically) zero norm."""


class CovarianceError(ValueError):
    """Raised when a covariance input is not symmetric positive definite."""


def _rx(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def dcm_inertial_to_body(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Standard 3-2-1 direction cosine matrix mapping inertial vectors into the body."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array(
        [
            [cp * cy, cp * sy, -sp],
            [sr * sp * cy - cr * sy, sr * sp * sy + cr * cy, sr * cp],
            [cr * sp * cy + sr * sy, cr * sp * sy - sr * cy, cr * cp],
        ]
    )


def dcm_body_to_inertial(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation taking body-frame vectors to the inertial (NED) frame.

    This is the transpose of the 3-2-1 inertial-to-body matrix, so that
    ``r_N = R_ND @ r_D`` holds. Pitch must lie strictly inside (-pi/2, pi/2).
    """
    return dcm_inertial_to_body(roll, pitch, yaw).T


def rotation_camera_to_body(alpha: float) -> np.ndarray:
    """Camera (right, down, out-of-lens) to body (forward, right, down) rotation.

    ``alpha`` is the fixed camera tilt. ``alpha = 0`` points the lens straight
    down the body z axis; ``alpha = pi/2`` points it along body x.
    """
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([[0.0, -ca, sa], [1.0, 0.0, 0.0], [0.0, sa, ca]])


# -- quaternions -------------------------------------------------------------

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product ``q1 ⊗ q2`` (no renormalization)."""
    # python floats are much cheaper than numpy scalars here
    w1, x1, y1, z1 = np.asarray(q1, dtype=float).tolist()
    w2, x2, y2, z2 = np.asarray(q2, dtype=float).tolist()
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def normalize(q: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    w, x, y, z = q.tolist()
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if not math.isfinite(n) or n < tol:
        raise DegenerateQuaternionError(f"cannot normalize quaternion with norm {n!r}")
    return q / n


def canonicalize(q: np.ndarray) -> np.ndarray:
    """Return the representative of ``±q`` with non-negative scalar part."""
    return -q if q[0] < 0.0 else np.array(q, dtype=float)


def align_sign(q: np.ndarray, q_ref: np.ndarray) -> np.ndarray:
    """Flip ``q`` into the hemisphere of ``q_ref`` (double-cover fix)."""
    return -q if float(np.dot(q, q_ref)) < 0.0 else q


def to_dcm(q: np.ndarray) -> np.ndarray:
    """Body-to-inertial rotation matrix of a unit quaternion."""
    w, x, y, z = np.asarray(q, dtype=float).tolist()
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    return np.array(
        [
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ]
    )


def from_dcm(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w >= 0) from a rotation matrix (Shepperd's method)."""
    (r00, r01, r02), (r10, r11, r12), (r20, r21, r22) = np.asarray(R, dtype=float).tolist()
    tr = r00 + r11 + r22
    diag = (tr, r00, r11, r22)
    i = max(range(4), key=diag.__getitem__)
    if i == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (r21 - r12) / s, (r02 - r20) / s, (r10 - r01) / s]
    elif i == 1:
        s = 2.0 * math.sqrt(1.0 + r00 - r11 - r22)
        q = [(r21 - r12) / s, 0.25 * s, (r01 + r10) / s, (r02 + r20) / s]
    elif i == 2:
        s = 2.0 * math.sqrt(1.0 + r11 - r00 - r22)
        q = [(r02 - r20) / s, (r01 + r10) / s, 0.25 * s, (r12 + r21) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + r22 - r00 - r11)
        q = [(r10 - r01) / s, (r02 + r20) / s, (r12 + r21) / s, 0.25 * s]
    return canonicalize(normalize(np.array(q)))


def from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Quaternion of the 3-2-1 Euler sequence, body-to-inertial."""
    cr, sr = np.cos(0.5 * roll), np.sin(0.5 * roll)
    cp, sp = np.cos(0.5 * pitch), np.sin(0.5 * pitch)
    cy, sy = np.cos(0.5 * yaw), np.sin(0.5 * yaw)
    return np.array(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ]
    )


def to_euler(q: np.ndarray) -> np.ndarray:
    """3-2-1 Euler angles ``(roll, pitch, yaw)`` of a unit quaternion."""
    w, x, y, z = q
    roll = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2.0 * (w * y - z * x), -1.0, 1.0))
    yaw = np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return np.array([roll, pitch, yaw])


def yaw_quat(yaw: float) -> np.ndarray:
    return np.array([math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw)])


def omega_matrix(rates: np.ndarray) -> np.ndarray:
    """4x4 matrix with ``q_dot = 0.5 * omega_matrix(rates) @ q`` for body rates."""
    p, q, r = np.asarray(rates, dtype=float).tolist()
    return np.array(
        [
            [0.0, -p, -q, -r],
            [p, 0.0, r, -q],
            [q, -r, 0.0, p],
            [r, q, -p, 0.0],
        ]
    )


def xi_matrix(q: np.ndarray) -> np.ndarray:
    """4x3 matrix with ``omega_matrix(w) @ q == xi_matrix(q) @ w``."""
    qw, qx, qy, qz = np.asarray(q, dtype=float).tolist()
    return np.array(
        [
            [-qx, -qy, -qz],
            [qw, -qz, qy],
            [qz, qw, -qx],
            [-qy, qx, qw],
        ]
    )


def attitude_error(q_est: np.ndarray, q_true: np.ndarray) -> float:
    """Rotation angle (rad) between two attitudes, ``2‖vec(q_est ⊗ q_true⁻¹)‖``."""
    dq = canonicalize(multiply(q_est, conjugate(q_true)))
    return 2.0 * float(np.linalg.norm(dq[1:]))


def euler_cov_to_quat_cov(
    q_ref: np.ndarray, sigma_euler: np.ndarray, eps: float = COV_REGULARIZATION
) -> np.ndarray:
    """Map a small-angle Euler covariance (rad²) into a 4x4 quaternion covariance.

    The attitude perturbation is ``q = q_ref ⊗ q(δφ, δθ, δψ)``, whose Jacobian
    at zero is ``0.5 * xi_matrix(q_ref)``. The rank-3 image is lifted to full
    rank with ``eps * I`` so it can be inverted.
    """
    S = np.asarray(sigma_euler, dtype=float)
    if S.shape != (3, 3) or not np.all(np.isfinite(S)):
        raise CovarianceError("sigma_euler must be a finite 3x3 matrix")
    if np.max(np.abs(S - S.T)) > 1e-12 * max(1.0, float(np.max(np.abs(S)))):
        raise CovarianceError("sigma_euler is not symmetric")
    if np.any(np.linalg.eigvalsh(S) < 0.0):
        raise CovarianceError("sigma_euler is not positive semidefinite")
    return map_euler_cov(q_ref, S, eps)


def map_euler_cov(q_ref: np.ndarray, S: np.ndarray, eps: float) -> np.ndarray:
    """Unchecked core of :func:`euler_cov_to_quat_cov` for hot loops."""
    G = 0.5 * xi_matrix(q_ref)
    C = G @ S @ G.T
    C = 0.5 * (C + C.T)
    C[np.diag_indices(4)] += eps
    return C
