"""Rotation algebra and visual angular velocities.

Rotation sequences are plain ``(N, 3, 3)`` arrays holding the
world-to-camera rotation R^V_W of every sample.
"""

import numpy as np

ORTHO_TOL = 1e-6


def skew(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(m):
    """Extract (wx, wy, wz) from the antisymmetric part of ``m``."""
    m = np.asarray(m, dtype=float)
    a = 0.5 * (m - np.swapaxes(m, -1, -2))
    return np.stack([a[..., 2, 1], a[..., 0, 2], a[..., 1, 0]], axis=-1)


def exp_so3(rotvec):
    """Rodrigues' formula, vectorised over leading axes."""
    rotvec = np.asarray(rotvec, dtype=float)
    theta = np.linalg.norm(rotvec, axis=-1)[..., None, None]
    K = skew(rotvec)
    small = theta < 1e-8
    t = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(t) / t)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(t)) / t**2)
    return np.eye(3) + a * K + b * (K @ K)


def quat_to_matrix(q):
    """(x, y, z, w) unit quaternions to rotation matrices."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    x, y, z, w = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - z * w)
    R[..., 0, 2] = 2 * (x * z + y * w)
    R[..., 1, 0] = 2 * (x * y + z * w)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - x * w)
    R[..., 2, 0] = 2 * (x * z - y * w)
    R[..., 2, 1] = 2 * (y * z + x * w)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def matrix_to_quat(R):
    """Rotation matrices to (x, y, z, w) quaternions with w >= 0."""
    from scipy.spatial.transform import Rotation

    q = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
    return np.where(q[..., 3:4] < 0, -q, q)


def orthogonality_error(R):
    R = np.asarray(R, dtype=float)
    return np.linalg.norm(R @ np.swapaxes(R, -1, -2) - np.eye(3), axis=(-2, -1))


def check_rotation(R, tol=ORTHO_TOL):
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3):
        raise ValueError(f"expected 3x3 rotation, got shape {R.shape}")
    if np.any(orthogonality_error(R) > tol) or np.any(np.linalg.det(R) <= 0):
        raise ValueError("matrix is not a proper rotation")
    return R


def rotation_angle(R_a, R_b):
    """Geodesic distance in radians between two rotations."""
    c = (np.trace(np.asarray(R_a).T @ np.asarray(R_b)) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def _derivative(R, rate):
    dR = np.empty_like(R)
    dR[1:-1] = (R[2:] - R[:-2]) * (rate / 2.0)
    dR[0] = (R[1] - R[0]) * rate
    dR[-1] = (R[-1] - R[-2]) * rate
    return dR


def angular_velocity(rotations, rate):
    """Angular velocity w with [w]_x = dR/dt R^T.

    dR/dt uses central differences in the interior and one-sided
    differences at both ends; the product is projected onto its
    antisymmetric part before extraction, so the output has one sample per
    input rotation.

    Note that for world-to-camera rotations this is the *negated* body rate
    of the camera; see :func:`camera_body_rate`.
    """
    R = np.asarray(rotations, dtype=float)
    if R.ndim != 3 or R.shape[1:] != (3, 3):
        raise ValueError("rotations must have shape (N, 3, 3)")
    if len(R) < 3:
        raise ValueError("angular_velocity needs at least 3 samples")
    M = _derivative(R, rate) @ np.swapaxes(R, 1, 2)
    return vee(M)


def discarded_symmetric_part(rotations, rate):
    """Frobenius norm of the symmetric part of dR/dt R^T per sample."""
    R = np.asarray(rotations, dtype=float)
    M = _derivative(R, rate) @ np.swapaxes(R, 1, 2)
    return np.linalg.norm(0.5 * (M + np.swapaxes(M, 1, 2)), axis=(1, 2))


def camera_body_rate(rotations, rate):
    """Camera angular rate in the camera frame, as a gyroscope would read it.

    With R = R^V_W mapping world vectors into the camera frame,
    dR/dt = -[w_body]_x R, hence the sign flip.
    """
    return -angular_velocity(rotations, rate)


def rotate_world_to_camera(rotations, v):
    R = np.asarray(rotations, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return R @ v
    if len(v) != len(R):
        raise ValueError(f"length mismatch: {len(R)} rotations vs {len(v)} vectors")
    return np.einsum("nij,nj->ni", R, v)


def rotate_sensor_to_camera(R_S, series):
    R_S = np.asarray(R_S, dtype=float)
    if orthogonality_error(R_S) > ORTHO_TOL or np.linalg.det(R_S) <= 0:
        raise ValueError("R_S is not a proper rotation")
    return np.asarray(series, dtype=float) @ R_S.T
