"""Stereo visual-odometry pose estimator.

A deliberately minimal filter: motion prediction composes the pose with a
relative increment and inflates the covariance through the frame-change
adjoint; the measurement update runs iterated Gauss-Newton on the stacked
stereo reprojection residuals together with the motion prior, and the
posterior covariance is the inverse of the Gauss-Newton information
matrix.  This is the filter-frame view the selection math is defined in;
a full smoothing backend is intentionally out of scope.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import geometry
from .camera import (
    BehindCamera,
    CameraRig,
    StereoObservation,
    jacobian_wrt_pose_batch,
    project_stereo_batch,
)
from .geometry import Pose3
from .world import Landmark

Measurement = tuple[StereoObservation, Landmark]


class DivergedUpdate(RuntimeError):
    """Gauss-Newton failed to reduce the residual for several iterations."""


@dataclass(frozen=True, eq=False)
class PoseBelief:
    """Camera-from-world pose with its 6x6 covariance.

    The covariance lives in the left-perturbation tangent space with
    translation-first ordering, matching the geometry conventions.
    """

    pose: Pose3
    covariance: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float).reshape(6, 6)
        scale = max(1.0, float(np.abs(cov).max()))
        if not np.allclose(cov, cov.T, atol=1e-9 * scale):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True, eq=False)
class MotionPrior:
    """Relative pose increment (new-from-old camera frame) and its noise."""

    increment: Pose3
    noise: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "noise", np.asarray(self.noise, dtype=float).reshape(6, 6))


def information_update(prior_cov: np.ndarray, jacobians: Sequence[np.ndarray],
                       noises: Sequence[np.ndarray]) -> np.ndarray:
    """Posterior covariance from prior covariance and linearized measurements.

    inv(inv(prior) + sum J^T Q^-1 J), symmetrized.  A zero Jacobian
    contributes nothing and leaves the covariance unchanged.
    """
    info = np.linalg.inv(prior_cov)
    for jac, noise in zip(jacobians, noises):
        jac = np.atleast_2d(np.asarray(jac, dtype=float))
        info = info + jac.T @ np.linalg.solve(noise, jac)
    post = np.linalg.inv(info)
    return 0.5 * (post + post.T)


class StereoEstimator:
    """Predict/update machinery over PoseBelief values.

    Parameters
    ----------
    rig : CameraRig
    max_iterations : int
        Gauss-Newton iteration cap.
    step_tol : float
        Convergence threshold on the twist-step norm.
    max_cost_increases : int
        Consecutive failed (cost-increasing) iterations tolerated before
        DivergedUpdate is raised.
    """

    def __init__(self, rig: CameraRig, max_iterations: int = 10,
                 step_tol: float = 1e-8, max_cost_increases: int = 5):
        self.rig = rig
        self.max_iterations = max_iterations
        self.step_tol = step_tol
        self.max_cost_increases = max_cost_increases

    def predict(self, belief: PoseBelief, prior: MotionPrior) -> PoseBelief:
        """Compose the motion increment and inflate the covariance.

        The previous-frame covariance is carried into the new frame by the
        increment's adjoint (unit determinant, so it never loses entropy)
        and the process noise is added on top; with nonzero noise the pose
        entropy strictly grows.
        """
        pose = geometry.compose(prior.increment, belief.pose)
        adj = geometry.adjoint(prior.increment)
        cov = adj @ belief.covariance @ adj.T + prior.noise
        return PoseBelief(pose, 0.5 * (cov + cov.T))

    def update(self, belief: PoseBelief, measurements: Sequence[Measurement]) -> PoseBelief:
        """Fuse stereo measurements of known landmarks into the belief.

        Iterated Gauss-Newton on the stacked reprojection residuals plus
        the prior term; a step that raises the total cost (or pushes a
        landmark behind the camera) is halved up to 8 times, and
        ``max_cost_increases`` consecutive failed iterations raise
        DivergedUpdate.  The posterior covariance is the inverse of the
        information matrix at the final linearization point, so its
        entropy never exceeds the prior's.
        """
        if not measurements:
            raise ValueError("need at least one measurement")
        prior_pose = belief.pose
        prior_info = np.linalg.inv(belief.covariance)
        points = np.vstack([lm.position for _, lm in measurements])
        pixels = np.vstack([obs.pixels for obs, _ in measurements])
        weights = np.stack([np.linalg.inv(obs.noise) for obs, _ in measurements])

        def total_cost(pose: Pose3) -> float:
            xi = geometry.log_se3(geometry.compose(pose, geometry.inverse(prior_pose)))
            residual = pixels - project_stereo_batch(self.rig, pose, points)
            return 0.5 * float(xi @ prior_info @ xi) + 0.5 * float(
                np.einsum("ni,nij,nj->", residual, weights, residual))

        pose = prior_pose
        cost = total_cost(pose)
        failures = 0
        info = prior_info
        for _ in range(self.max_iterations):
            xi = geometry.log_se3(geometry.compose(pose, geometry.inverse(prior_pose)))
            residual = pixels - project_stereo_batch(self.rig, pose, points)
            jac = jacobian_wrt_pose_batch(self.rig, pose, points)
            weighted = weights @ jac  # (n, 3, 6)
            info = prior_info + np.einsum("nia,nib->ab", jac, weighted)
            grad = np.einsum("nia,ni->a", weighted, residual) - prior_info @ xi
            step = np.linalg.solve(info, grad)
            # grad is the negative cost gradient, so this is the decrease
            # the quadratic model promises.  The model is only accurate to
            # the linearization error, so once the promised drop falls
            # below a relative function tolerance the iteration has
            # converged even if no trial step strictly lowers the cost.
            predicted_drop = 0.5 * float(step @ grad)
            if np.linalg.norm(step) < self.step_tol or \
                    predicted_drop <= 1e-9 * (1.0 + abs(cost)):
                break
            # Halve the step until the cost drops.  An iteration where no
            # trial helps but the best trial is within float-level noise
            # of the current cost has converged; one where every trial is
            # genuinely worse counts as a failure.
            improved = False
            best_delta = np.inf
            trial_step = step
            for _ in range(8):
                try:
                    trial_pose = geometry.perturb(pose, trial_step)
                    trial_cost = total_cost(trial_pose)
                except BehindCamera:
                    trial_cost = np.inf
                if trial_cost < cost:
                    pose, cost = trial_pose, trial_cost
                    improved = True
                    break
                best_delta = min(best_delta, trial_cost - cost)
                trial_step = 0.5 * trial_step
            if improved:
                failures = 0
            elif best_delta <= 1e-6 * (1.0 + abs(cost)):
                break
            else:
                failures += 1
                if failures >= self.max_cost_increases:
                    raise DivergedUpdate(
                        f"cost stuck at {cost:.3g} after {failures} failed iterations")
        cov = np.linalg.inv(info)
        return PoseBelief(pose, 0.5 * (cov + cov.T))

    def update_single(self, belief: PoseBelief, measurement: Measurement) -> PoseBelief:
        """Single-measurement update (the greedy selection inner loop)."""
        return self.update(belief, [measurement])
