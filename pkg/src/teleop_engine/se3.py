"""Rigid-transform algebra: poses, twists, exponential and logarithm maps.

Conventions used across the engine:
  - rotations are 3x3 special orthogonal matrices, translations 3-vectors
  - all angles in radians, all lengths in meters
  - 6D twist vectors are stacked [linear; angular]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Rotations are re-orthonormalized (polar decomposition) whenever drift
# exceeds this bound, and unconditionally once a value has accumulated
# _REORTHO_EVERY compositions. The count rides on the Pose itself so results
# never depend on process history.
_ORTHO_DRIFT_TOL = 1e-7
_REORTHO_EVERY = 1000
_NEAR_PI_MARGIN = 1e-6


class NearSingularRotationError(ValueError):
    """Raised by log_map when the rotation angle is within 1e-6 of pi.

    The rotation axis is ambiguous there; callers that must stay total use
    log_map_total, which picks a deterministic branch.
    """


@dataclass(frozen=True)
class Pose:
    """Rigid transform in SE(3): rotation (3x3, special orthogonal) + translation (m)."""

    rotation: np.ndarray
    translation: np.ndarray
    # compositions accumulated since the last re-orthonormalization
    compose_depth: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        if self.rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {self.rotation.shape}")
        if self.translation.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {self.translation.shape}")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def validate(self, tol: float = 1e-9) -> None:
        """Check the special-orthogonality invariants, raising ValueError on failure."""
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > tol:
            raise ValueError(f"rotation not orthonormal, drift {err:.3e}")
        det = np.linalg.det(self.rotation)
        if abs(det - 1.0) > tol:
            raise ValueError(f"rotation determinant {det} != +1")

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.rotation).all() and np.isfinite(self.translation).all())


@dataclass(frozen=True)
class Twist:
    """Element of se(3): linear part in meters, angular part axis-angle scaled (rad)."""

    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float))
        object.__setattr__(self, "angular", np.asarray(self.angular, dtype=float))
        if self.linear.shape != (3,) or self.angular.shape != (3,):
            raise ValueError("twist parts must be 3-vectors")

    @staticmethod
    def zero() -> "Twist":
        return Twist(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_vector(v: np.ndarray) -> "Twist":
        v = np.asarray(v, dtype=float)
        if v.shape != (6,):
            raise ValueError(f"twist vector must have 6 entries, got {v.shape}")
        return Twist(v[:3], v[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


def _orthonormalize(r: np.ndarray) -> np.ndarray:
    """Nearest rotation via polar decomposition (SVD)."""
    u, _, vt = np.linalg.svd(r)
    q = u @ vt
    if np.linalg.det(q) < 0:
        u[:, -1] = -u[:, -1]
        q = u @ vt
    return q


def compose(a: Pose, b: Pose) -> Pose:
    """Pose product a*b (apply b first, then a, as homogeneous matrices)."""
    r = a.rotation @ b.rotation
    depth = max(a.compose_depth, b.compose_depth) + 1
    if (depth >= _REORTHO_EVERY
            or np.abs(r.T @ r - np.eye(3)).max() > _ORTHO_DRIFT_TOL):
        r = _orthonormalize(r)
        depth = 0
    return Pose(r, a.rotation @ b.translation + a.translation, compose_depth=depth)


def inverse(p: Pose) -> Pose:
    rt = p.rotation.T
    return Pose(rt, -(rt @ p.translation))


def transform_point(p: Pose, point: np.ndarray) -> np.ndarray:
    return p.rotation @ np.asarray(point, dtype=float) + p.translation


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_angle(r: np.ndarray) -> float:
    """Geodesic rotation angle of a rotation matrix, in [0, pi]."""
    c = 0.5 * (np.trace(r) - 1.0)
    return math.acos(min(1.0, max(-1.0, c)))


def _so3_log(r: np.ndarray, near_pi_branch: bool) -> np.ndarray:
    theta = rotation_angle(r)
    if theta < 1e-10:
        return 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if math.pi - theta < _NEAR_PI_MARGIN:
        if not near_pi_branch:
            raise NearSingularRotationError(
                f"near-singular rotation: angle {theta:.9f} within {_NEAR_PI_MARGIN} of pi")
        # Branch choice: take the axis component from the largest-magnitude
        # diagonal element of R+I, remaining components from symmetrized
        # off-diagonals (R ~ 2*a*a^T - I at theta = pi).
        diag = np.diag(r) + 1.0
        i = int(np.argmax(np.abs(diag)))
        axis = np.empty(3)
        axis[i] = math.sqrt(max(0.0, diag[i] * 0.5))
        for j in range(3):
            if j != i:
                axis[j] = 0.25 * (r[i, j] + r[j, i]) / axis[i]
        axis /= np.linalg.norm(axis)
        return theta * axis
    scale = theta / (2.0 * math.sin(theta))
    return scale * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])


def _so3_exp(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w)
    k = skew(w)
    k2 = k @ k
    if theta < 1e-4:
        # Taylor forms of sin(t)/t and (1-cos(t))/t^2, accurate to ~1e-16 here
        a = 1.0 - theta**2 / 6.0 + theta**4 / 120.0
        b = 0.5 - theta**2 / 24.0 + theta**4 / 720.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta**2
    return np.eye(3) + a * k + b * k2


def _so3_left_jacobian(w: np.ndarray) -> np.ndarray:
    """V matrix coupling rotation and translation in the SE(3) exponential."""
    theta = np.linalg.norm(w)
    k = skew(w)
    k2 = k @ k
    if theta < 1e-4:
        b = 0.5 - theta**2 / 24.0 + theta**4 / 720.0
        c = 1.0 / 6.0 - theta**2 / 120.0 + theta**4 / 5040.0
    else:
        b = (1.0 - math.cos(theta)) / theta**2
        c = (theta - math.sin(theta)) / theta**3
    return np.eye(3) + b * k + c * k2


def _so3_left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w)
    k = skew(w)
    k2 = k @ k
    if theta < 1e-4:
        c = 1.0 / 12.0 + theta**2 / 720.0 + theta**4 / 30240.0
    else:
        half = 0.5 * theta
        c = (1.0 - half * math.cos(half) / math.sin(half)) / theta**2
    return np.eye(3) - 0.5 * k + c * k2


def exp_map(x: Twist) -> Pose:
    """SE(3) exponential: Rodrigues rotation plus V-matrix-corrected translation."""
    r = _so3_exp(x.angular)
    t = _so3_left_jacobian(x.angular) @ x.linear
    return Pose(r, t)


def log_map(p: Pose) -> Twist:
    """SE(3) logarithm. Raises NearSingularRotationError within 1e-6 of angle pi."""
    w = _so3_log(p.rotation, near_pi_branch=False)
    v = _so3_left_jacobian_inv(w) @ p.translation
    return Twist(v, w)


def log_map_total(p: Pose) -> Twist:
    """Total log map: near angle pi, falls back to a fixed, documented axis branch."""
    w = _so3_log(p.rotation, near_pi_branch=True)
    v = _so3_left_jacobian_inv(w) @ p.translation
    return Twist(v, w)


def rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    return _so3_exp(axis * angle)


def rpy_to_rotation(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Extrinsic X-Y-Z (fixed-axis) convention: R = Rz(yaw) Ry(pitch) Rx(roll)."""
    return rotation_z(yaw) @ rotation_y(pitch) @ rotation_x(roll)


def to_matrix(p: Pose) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = p.rotation
    m[:3, 3] = p.translation
    return m


def from_matrix(m: np.ndarray) -> Pose:
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4):
        raise ValueError(f"expected 4x4 homogeneous matrix, got {m.shape}")
    return Pose(m[:3, :3].copy(), m[:3, 3].copy())


def quat_from_rotation(r: np.ndarray) -> np.ndarray:
    """Unit quaternion [x, y, z, w] from a rotation matrix (Shepperd's method)."""
    t = np.trace(r)
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        w = 0.25 * s
        x = (r[2, 1] - r[1, 2]) / s
        y = (r[0, 2] - r[2, 0]) / s
        z = (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        w = (r[2, 1] - r[1, 2]) / s
        x = 0.25 * s
        y = (r[0, 1] + r[1, 0]) / s
        z = (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] > r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        w = (r[0, 2] - r[2, 0]) / s
        x = (r[0, 1] + r[1, 0]) / s
        y = 0.25 * s
        z = (r[1, 2] + r[2, 1]) / s
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        w = (r[1, 0] - r[0, 1]) / s
        x = (r[0, 2] + r[2, 0]) / s
        y = (r[1, 2] + r[2, 1]) / s
        z = 0.25 * s
    q = np.array([x, y, z, w])
    return q / np.linalg.norm(q)


def rotation_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix from a quaternion [x, y, z, w] (normalized internally)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have 4 entries, got {q.shape}")
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    x, y, z, w = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
