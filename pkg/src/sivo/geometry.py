"""Minimal SE(3)/so(3) machinery for pose estimation.

Conventions, fixed project-wide:

* Twists are ordered translation-first, ``xi = (rho, omega)``.
* Perturbations are left-multiplicative: ``T' = exp_se3(delta) * T``.
  Every Jacobian and covariance in the package is expressed in this
  convention; flip it here and everything downstream follows.
* ``Pose3`` stores a camera-from-world transform unless a caller
  documents otherwise (io layers reuse it for world-from-camera).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this rotation angle the closed-form Rodrigues coefficients are
# replaced by second-order Taylor terms to avoid dividing by ~0.
_SMALL_ANGLE = 1e-8


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that hat(a) @ b == cross(a, b)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def vee(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hat`."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def exp_so3(omega: np.ndarray) -> np.ndarray:
    """Rodrigues' formula mapping a rotation vector to a rotation matrix."""
    angle = float(np.linalg.norm(omega))
    k = hat(omega)
    if angle < _SMALL_ANGLE:
        # sin(a)/a -> 1, (1 - cos(a))/a^2 -> 1/2
        return np.eye(3) + k + 0.5 * (k @ k)
    a = np.sin(angle) / angle
    b = (1.0 - np.cos(angle)) / (angle * angle)
    return np.eye(3) + a * k + b * (k @ k)


def log_so3(rot: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix, principal branch ``|angle| <= pi``."""
    # Clamp guards against a trace slightly outside [-1, 3] from roundoff.
    cos_angle = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arccos(cos_angle))
    if angle < _SMALL_ANGLE:
        return vee(rot - rot.T) / 2.0
    if angle > np.pi - 1e-6:
        # Near pi the antisymmetric part vanishes; recover the axis from the
        # symmetric part R + I = 2 a a^T (sign fixed off the largest entry).
        sym = (rot + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(sym), 0.0))
        i = int(np.argmax(axis))
        for j in range(3):
            if j != i and sym[i, j] < 0.0:
                axis[j] = -axis[j]
        axis /= np.linalg.norm(axis)
        return angle * axis
    return angle * vee(rot - rot.T) / (2.0 * np.sin(angle))


def _left_jacobian(omega: np.ndarray) -> np.ndarray:
    """V matrix coupling rotation and translation in the SE(3) exponential."""
    angle = float(np.linalg.norm(omega))
    k = hat(omega)
    if angle < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * k + (k @ k) / 6.0
    a = (1.0 - np.cos(angle)) / (angle * angle)
    b = (angle - np.sin(angle)) / (angle ** 3)
    return np.eye(3) + a * k + b * (k @ k)


def _left_jacobian_inverse(omega: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(omega))
    k = hat(omega)
    if angle < _SMALL_ANGLE:
        return np.eye(3) - 0.5 * k + (k @ k) / 12.0
    half = angle / 2.0
    coeff = (1.0 - half / np.tan(half)) / (angle * angle)
    return np.eye(3) - 0.5 * k + coeff * (k @ k)


@dataclass(frozen=True, eq=False)
class Pose3:
    """Rigid transform: 3x3 orthonormal rotation plus translation in metres."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        trans = np.asarray(self.translation, dtype=float).reshape(3)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @staticmethod
    def identity() -> "Pose3":
        return Pose3(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose3":
        return Pose3(np.asarray(m, dtype=float)[:3, :3], np.asarray(m, dtype=float)[:3, 3])

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


def exp_se3(xi: np.ndarray) -> Pose3:
    """Exponential map from a twist to a pose.

    Parameters
    ----------
    xi : (6,) array
        Twist ``(rho, omega)``: translational part first, rotational second.

    Returns
    -------
    Pose3
        Rotation ``exp_so3(omega)`` and translation ``V(omega) @ rho``; the
        identity at ``xi = 0``, and translation exactly ``rho`` when
        ``omega = 0``.
    """
    xi = np.asarray(xi, dtype=float)
    rho, omega = xi[:3], xi[3:]
    return Pose3(exp_so3(omega), _left_jacobian(omega) @ rho)


def log_se3(pose: Pose3) -> np.ndarray:
    """Twist ``(rho, omega)`` of a pose; inverse of :func:`exp_se3`.

    Principal branch ``|omega| <= pi``; at exactly pi either sign of the
    axis is a valid logarithm and whichever the arccos branch produces is
    returned.
    """
    omega = log_so3(pose.rotation)
    rho = _left_jacobian_inverse(omega) @ pose.translation
    return np.concatenate([rho, omega])


def compose(a: Pose3, b: Pose3) -> Pose3:
    """Pose composition a * b (apply b first, then a)."""
    return Pose3(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(pose: Pose3) -> Pose3:
    """Inverse pose: (R, t) -> (R^T, -R^T t)."""
    rot_t = pose.rotation.T
    return Pose3(rot_t, -rot_t @ pose.translation)


def transform_point(pose: Pose3, point: np.ndarray) -> np.ndarray:
    """Apply a pose to one point or to an (n, 3) block of points."""
    point = np.asarray(point, dtype=float)
    if point.ndim == 1:
        return pose.rotation @ point + pose.translation
    return point @ pose.rotation.T + pose.translation


def adjoint(pose: Pose3) -> np.ndarray:
    """Adjoint of SE(3), mapping twists across a frame change.

    With translation-first ordering the block form is
    ``[[R, hat(t) R], [0, R]]``; it carries covariance between frames as
    ``Sigma' = Adj Sigma Adj^T`` and has unit determinant.
    """
    adj = np.zeros((6, 6))
    adj[:3, :3] = pose.rotation
    adj[:3, 3:] = hat(pose.translation) @ pose.rotation
    adj[3:, 3:] = pose.rotation
    return adj


def perturb(pose: Pose3, delta: np.ndarray) -> Pose3:
    """Left-multiplicative update exp(delta) * T used by the estimator."""
    return compose(exp_se3(delta), pose)


def rotation_angle(rot: np.ndarray) -> float:
    """Geodesic rotation angle in radians."""
    return float(np.arccos(np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)))
