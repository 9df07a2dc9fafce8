"""Uncertainty-aware feature selection for stereo visual odometry.

Features are kept when the information their measurement carries about
the camera pose outweighs the uncertainty in what they are: the score is
mutual information with the pose minus the entropy of a Monte-Carlo
class belief, both in bits.  The package bundles the scoring machinery,
a stereo pose estimator, a simulated VO loop, and evaluation tooling.
"""
__version__ = "0.1.0"

from .camera import BehindCamera, CameraRig, DegenerateDisparity, StereoObservation
from .estimator import DivergedUpdate, MotionPrior, PoseBelief, StereoEstimator
from .geometry import Pose3, compose, exp_se3, inverse, log_se3, transform_point
from .infotheory import (
    InvalidDistribution,
    NotPositiveDefinite,
    discrete_entropy,
    discrete_mutual_information,
    gaussian_entropy,
    gaussian_mutual_information,
)
from .selection import (
    CandidateFeature,
    CandidateScore,
    RejectionReason,
    SelectionConfig,
    Strategy,
    select_batch,
    select_greedy,
    sivo_score,
)
from .semantics import (
    TAXONOMY,
    Mobility,
    SemanticBelief,
    SemanticClass,
    aggregate_mc,
    classification_entropy,
    is_admissible,
)
from .sim import (
    DropoutSimConfig,
    EstimatorDiverged,
    NoiseConfig,
    Scenario,
    TrajectoryConfig,
    WorldConfig,
    generate_trajectory,
    generate_world,
    load_scenario,
    observe_frame,
    run_sequence,
)
from .world import Landmark

__all__ = [
    "__version__",
    "BehindCamera", "CameraRig", "DegenerateDisparity", "StereoObservation",
    "DivergedUpdate", "MotionPrior", "PoseBelief", "StereoEstimator",
    "Pose3", "compose", "exp_se3", "inverse", "log_se3", "transform_point",
    "InvalidDistribution", "NotPositiveDefinite",
    "discrete_entropy", "discrete_mutual_information",
    "gaussian_entropy", "gaussian_mutual_information",
    "CandidateFeature", "CandidateScore", "RejectionReason",
    "SelectionConfig", "Strategy", "select_batch", "select_greedy", "sivo_score",
    "TAXONOMY", "Mobility", "SemanticBelief", "SemanticClass",
    "aggregate_mc", "classification_entropy", "is_admissible",
    "DropoutSimConfig", "EstimatorDiverged", "NoiseConfig", "Scenario",
    "TrajectoryConfig", "WorldConfig", "generate_trajectory", "generate_world",
    "load_scenario", "observe_frame", "run_sequence",
    "Landmark",
]
