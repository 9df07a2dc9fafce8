"""Rectified stereo projection model, its inverse, and analytic Jacobians.

The rig is assumed rectified: the right camera is displaced from the left
by a purely horizontal baseline, so corresponding pixels share a row and
depth follows from disparity.  General extrinsics, lens distortion and
rolling shutter are out of scope.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose3, hat, transform_point


class BehindCamera(ValueError):
    """Point depth at or below the near cutoff; the candidate must be culled."""


class DegenerateDisparity(ValueError):
    """Disparity too small to triangulate (point effectively at infinity)."""


@dataclass(frozen=True)
class CameraRig:
    """Rectified stereo intrinsics.

    Attributes
    ----------
    fx, fy : float
        Focal lengths in pixels.
    cx, cy : float
        Principal point in pixels; must lie within the image.
    baseline : float
        Stereo baseline in metres (purely horizontal).
    width, height : int
        Image size in pixels.
    depth_min : float
        Near-plane cutoff in metres; projection below it raises BehindCamera.
    disparity_min : float
        Smallest triangulable disparity in pixels.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float
    width: int = 640
    height: int = 480
    depth_min: float = 0.1
    disparity_min: float = 0.25

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0 or self.baseline <= 0:
            raise ValueError("focal lengths and baseline must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image bounds")


@dataclass(frozen=True, eq=False)
class StereoObservation:
    """Measured (u_left, v, u_right) pixel triple with its noise covariance."""

    pixels: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        pix = np.asarray(self.pixels, dtype=float).reshape(3)
        q = np.asarray(self.noise, dtype=float).reshape(3, 3)
        if pix[0] <= pix[2]:
            raise ValueError(f"disparity {pix[0] - pix[2]:.4f} px is not positive")
        if not np.allclose(q, q.T, atol=1e-9):
            raise ValueError("noise covariance is not symmetric")
        np.linalg.cholesky(q)  # SPD or it raises
        object.__setattr__(self, "pixels", pix)
        object.__setattr__(self, "noise", q)


def project_stereo(rig: CameraRig, pose: Pose3, p_w: np.ndarray) -> np.ndarray:
    """Project a world point into (u_left, v, u_right) pixel coordinates.

    Parameters
    ----------
    rig : CameraRig
    pose : Pose3
        Camera-from-world transform.
    p_w : (3,) array
        World-frame point in metres.

    Returns
    -------
    (3,) array
        ``(fx*x/z + cx, fy*y/z + cy, fx*(x - b)/z + cx)`` for the
        camera-frame point ``(x, y, z)``.  The left and right rows share
        the v coordinate exactly (rectified epipolar constraint).

    Raises
    ------
    BehindCamera
        If the camera-frame depth is at or below ``rig.depth_min``.
    """
    p_c = transform_point(pose, p_w)
    x, y, z = p_c
    if z <= rig.depth_min:
        raise BehindCamera(f"depth {z:.4f} m <= {rig.depth_min} m")
    return np.array(
        [
            rig.fx * x / z + rig.cx,
            rig.fy * y / z + rig.cy,
            rig.fx * (x - rig.baseline) / z + rig.cx,
        ]
    )


def triangulate(rig: CameraRig, pose: Pose3, obs: np.ndarray) -> np.ndarray:
    """Invert the stereo projection back to a world-frame point.

    ``obs`` is an (u_left, v, u_right) pixel triple.  Depth follows from
    disparity as ``z = fx * b / d``; the result satisfies
    ``project_stereo(rig, pose, triangulate(rig, pose, obs)) == obs`` to
    within 1e-9 px for valid disparities.

    Raises
    ------
    DegenerateDisparity
        If ``u_left - u_right <= rig.disparity_min``.
    """
    u_l, v, u_r = np.asarray(obs, dtype=float)
    d = u_l - u_r
    if d <= rig.disparity_min:
        raise DegenerateDisparity(f"disparity {d:.4f} px <= {rig.disparity_min} px")
    z = rig.fx * rig.baseline / d
    x = (u_l - rig.cx) * z / rig.fx
    y = (v - rig.cy) * z / rig.fy
    p_c = np.array([x, y, z])
    # Camera frame back to world frame.
    return pose.rotation.T @ (p_c - pose.translation)


def _projection_jacobian(rig: CameraRig, p_c: np.ndarray) -> np.ndarray:
    """d(pixel triple)/d(camera-frame point), a 3x3 matrix."""
    x, y, z = p_c
    inv_z = 1.0 / z
    inv_z2 = inv_z * inv_z
    return np.array(
        [
            [rig.fx * inv_z, 0.0, -rig.fx * x * inv_z2],
            [0.0, rig.fy * inv_z, -rig.fy * y * inv_z2],
            [rig.fx * inv_z, 0.0, -rig.fx * (x - rig.baseline) * inv_z2],
        ]
    )


def jacobian_wrt_pose(rig: CameraRig, pose: Pose3, p_w: np.ndarray) -> np.ndarray:
    """3x6 derivative of the pixel triple w.r.t. the pose perturbation.

    The perturbation is left-multiplicative on the camera-from-world pose
    with translation-first twist ordering, so the camera-frame point moves
    as ``delta_p_c = rho - hat(p_c) omega`` and the Jacobian is
    ``dpix/dp_c @ [I | -hat(p_c)]``.

    Raises
    ------
    BehindCamera
        If the point does not project.
    """
    p_c = transform_point(pose, p_w)
    if p_c[2] <= rig.depth_min:
        raise BehindCamera(f"depth {p_c[2]:.4f} m <= {rig.depth_min} m")
    dpix = _projection_jacobian(rig, p_c)
    jac = np.empty((3, 6))
    jac[:, :3] = dpix
    jac[:, 3:] = dpix @ (-hat(p_c))
    return jac


def jacobian_wrt_point(rig: CameraRig, pose: Pose3, p_w: np.ndarray) -> np.ndarray:
    """3x3 derivative of the pixel triple w.r.t. the world point."""
    p_c = transform_point(pose, p_w)
    if p_c[2] <= rig.depth_min:
        raise BehindCamera(f"depth {p_c[2]:.4f} m <= {rig.depth_min} m")
    return _projection_jacobian(rig, p_c) @ pose.rotation


def project_stereo_batch(rig: CameraRig, pose: Pose3, points: np.ndarray) -> np.ndarray:
    """Vectorized :func:`project_stereo` over an (n, 3) block of world points.

    Raises BehindCamera if any point fails the depth cutoff; use
    :func:`depths` to mask first when that is expected.
    """
    p_c = transform_point(pose, np.atleast_2d(points))
    z = p_c[:, 2]
    if np.any(z <= rig.depth_min):
        raise BehindCamera("batch contains points at or below the depth cutoff")
    out = np.empty_like(p_c)
    out[:, 0] = rig.fx * p_c[:, 0] / z + rig.cx
    out[:, 1] = rig.fy * p_c[:, 1] / z + rig.cy
    out[:, 2] = rig.fx * (p_c[:, 0] - rig.baseline) / z + rig.cx
    return out


def jacobian_wrt_pose_batch(rig: CameraRig, pose: Pose3, points: np.ndarray) -> np.ndarray:
    """Vectorized :func:`jacobian_wrt_pose`, returning (n, 3, 6)."""
    points = np.atleast_2d(points)
    p_c = transform_point(pose, points)
    x, y, z = p_c[:, 0], p_c[:, 1], p_c[:, 2]
    if np.any(z <= rig.depth_min):
        raise BehindCamera("batch contains points at or below the depth cutoff")
    n = points.shape[0]
    inv_z = 1.0 / z
    inv_z2 = inv_z * inv_z
    dpix = np.zeros((n, 3, 3))
    dpix[:, 0, 0] = rig.fx * inv_z
    dpix[:, 0, 2] = -rig.fx * x * inv_z2
    dpix[:, 1, 1] = rig.fy * inv_z
    dpix[:, 1, 2] = -rig.fy * y * inv_z2
    dpix[:, 2, 0] = rig.fx * inv_z
    dpix[:, 2, 2] = -rig.fx * (x - rig.baseline) * inv_z2
    # d p_c / d twist = [I | -hat(p_c)] per point.
    neg_hat = np.zeros((n, 3, 3))
    neg_hat[:, 0, 1] = z
    neg_hat[:, 0, 2] = -y
    neg_hat[:, 1, 0] = -z
    neg_hat[:, 1, 2] = x
    neg_hat[:, 2, 0] = y
    neg_hat[:, 2, 1] = -x
    jac = np.empty((n, 3, 6))
    jac[:, :, :3] = dpix
    jac[:, :, 3:] = dpix @ neg_hat
    return jac


def depths(pose: Pose3, points: np.ndarray) -> np.ndarray:
    """Camera-frame depths of an (n, 3) block of world points."""
    return transform_point(pose, np.atleast_2d(points))[:, 2]


def in_frustum(rig: CameraRig, pose: Pose3, p_w: np.ndarray) -> bool:
    """True when the point projects inside both images with usable disparity."""
    try:
        u_l, v, u_r = project_stereo(rig, pose, p_w)
    except BehindCamera:
        return False
    if u_l - u_r <= rig.disparity_min:
        return False
    return 0.0 <= v < rig.height and 0.0 <= u_l < rig.width and 0.0 <= u_r < rig.width
