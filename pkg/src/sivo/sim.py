"""Deterministic synthetic stereo-VO worlds.

Generates landmark fields with semantic classes, ground-truth camera
trajectories, noisy stereo observations, and simulated Monte-Carlo
classification samples, then drives the predict/select/update loop over
them.  Randomness is counter-based: every draw comes from a generator
seeded by (seed, stream, frame, landmark id), so results never depend on
iteration order and identical seeds reproduce bit-identical runs.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import geometry
from .camera import (
    BehindCamera,
    CameraRig,
    StereoObservation,
    jacobian_wrt_pose,
    project_stereo,
)
from .estimator import DivergedUpdate, MotionPrior, PoseBelief, StereoEstimator
from .geometry import Pose3
from .selection import (
    CandidateFeature,
    CandidateScore,
    SelectionConfig,
    Strategy,
    select_batch,
    select_greedy,
)
from .semantics import (
    DYNAMIC_IDS,
    STATIC_IDS,
    TAXONOMY,
    Mobility,
    SemanticBelief,
    aggregate_mc,
)
from .world import Landmark

# Stream tags keeping the independent random purposes apart.
_STREAM_WORLD = 1
_STREAM_ODOMETRY = 2
_STREAM_PIXELS = 3
_STREAM_MC = 4

# Assumed measurement covariances must stay invertible even in noiseless
# runs, so the simulator never hands the estimator a sigma below this.
_PIXEL_SIGMA_FLOOR = 1e-6


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


class EstimatorDiverged(RuntimeError):
    """The measurement update diverged; carries the frame index."""

    def __init__(self, frame: int, cause: Exception):
        super().__init__(f"estimator diverged at frame {frame}: {cause}")
        self.frame = frame


@dataclass(frozen=True, eq=False)
class WorldConfig:
    """Landmark field description.

    ``class_weights`` (length 15, summing to 1) sets the relative mixture
    within each mobility group; ``dynamic_fraction`` then fixes how much
    total probability the dynamic-class group gets.  Omitted weights mean
    uniform within each group.
    """

    count: int
    bounds: np.ndarray  # (3, 2) min/max per world axis, metres
    dynamic_fraction: float = 0.0
    class_weights: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("need at least one landmark")
        if not 0.0 <= self.dynamic_fraction <= 1.0:
            raise ValueError("dynamic fraction must be in [0, 1]")
        object.__setattr__(self, "bounds", np.asarray(self.bounds, dtype=float).reshape(3, 2))
        if self.class_weights is not None:
            w = np.asarray(self.class_weights, dtype=float).reshape(len(TAXONOMY))
            if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
                raise ValueError("class weights must be non-negative and sum to 1")
            object.__setattr__(self, "class_weights", w)


@dataclass(frozen=True)
class TrajectoryConfig:
    shape: str  # "straight" | "loop" | "figure8"
    length_m: float
    frames: int
    profile: str = "constant"  # or "ease" for a smooth ramp

    def __post_init__(self):
        if self.frames < 2:
            raise ValueError("need at least two frames")
        if self.shape not in ("straight", "loop", "figure8"):
            raise ValueError(f"unknown trajectory shape {self.shape!r}")
        if self.profile not in ("constant", "ease"):
            raise ValueError(f"unknown speed profile {self.profile!r}")


@dataclass(frozen=True)
class DropoutSimConfig:
    """Stand-in for a segmentation network run with dropout at test time.

    ``kappa`` concentrations control how certain the simulated classifier
    is, per mobility group: large kappa gives near-one-hot samples (low
    classification entropy), kappa near the class count is close to
    uniform.  ``mislabel_rate`` is the chance a landmark's samples
    concentrate on a wrong class entirely.
    """

    samples: int = 6
    kappa_static: float = 500.0
    kappa_dynamic: float = 500.0
    mislabel_rate: float = 0.0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("need at least one MC sample")
        if not (np.isfinite(self.kappa_static) and self.kappa_static > 0
                and np.isfinite(self.kappa_dynamic) and self.kappa_dynamic > 0):
            raise ValueError("concentrations must be finite and positive")
        if not 0.0 <= self.mislabel_rate < 1.0:
            raise ValueError("mislabel rate must be in [0, 1)")


@dataclass(frozen=True)
class NoiseConfig:
    """Measurement/process/initial noise scales for a simulated run."""

    pixel_sigma: float = 1.0
    process_sigma_translation: float = 0.02
    process_sigma_rotation: float = 0.002
    initial_sigma_translation: float = 1e-4
    initial_sigma_rotation: float = 1e-5

    def pixel_cov(self) -> np.ndarray:
        return (self.pixel_sigma ** 2) * np.eye(3)

    def process_cov(self) -> np.ndarray:
        return np.diag([self.process_sigma_translation ** 2] * 3
                       + [self.process_sigma_rotation ** 2] * 3)

    def initial_cov(self) -> np.ndarray:
        # Floored so the initial covariance stays invertible.
        st = max(self.initial_sigma_translation, 1e-9)
        sr = max(self.initial_sigma_rotation, 1e-9)
        return np.diag([st ** 2] * 3 + [sr ** 2] * 3)


def _effective_class_weights(cfg: WorldConfig) -> np.ndarray:
    """Mixture over all classes honoring the configured dynamic fraction."""
    if cfg.class_weights is None:
        w = np.full(len(TAXONOMY), 1.0 / len(TAXONOMY))
    else:
        w = cfg.class_weights.copy()
    eff = np.zeros_like(w)
    static = np.array(STATIC_IDS)
    dynamic = np.array(DYNAMIC_IDS)
    static_mass = float(w[static].sum())
    dynamic_mass = float(w[dynamic].sum())
    if static_mass > 0.0:
        eff[static] = w[static] * (1.0 - cfg.dynamic_fraction) / static_mass
    else:
        eff[static] = (1.0 - cfg.dynamic_fraction) / len(static)
    if dynamic_mass > 0.0:
        eff[dynamic] = w[dynamic] * cfg.dynamic_fraction / dynamic_mass
    else:
        eff[dynamic] = cfg.dynamic_fraction / len(dynamic)
    return eff / eff.sum()


def generate_world(cfg: WorldConfig) -> list[Landmark]:
    """Sample a deterministic landmark field from the config."""
    rng = _rng(cfg.seed, _STREAM_WORLD)
    lo, hi = cfg.bounds[:, 0], cfg.bounds[:, 1]
    positions = rng.uniform(lo, hi, size=(cfg.count, 3))
    class_ids = rng.choice(len(TAXONOMY), size=cfg.count, p=_effective_class_weights(cfg))
    return [Landmark(i, positions[i], TAXONOMY[int(class_ids[i])]) for i in range(cfg.count)]


def generate_trajectory(cfg: TrajectoryConfig) -> list[Pose3]:
    """Ground-truth camera-from-world poses along the configured path.

    The camera starts at the world origin heading +z (x right, y down)
    and follows a planar path: zero curvature for "straight", one full
    circle for "loop", and two opposite-curvature circles for "figure8".
    """
    u = np.linspace(0.0, 1.0, cfg.frames)
    if cfg.profile == "ease":
        u = 3.0 * u ** 2 - 2.0 * u ** 3
    arclens = cfg.length_m * u

    if cfg.shape == "straight":
        curvature = lambda s: 0.0
    elif cfg.shape == "loop":
        curvature = lambda s: 2.0 * np.pi / cfg.length_m
    else:  # figure8: one full turn each way
        curvature = lambda s: (4.0 * np.pi / cfg.length_m if s < cfg.length_m / 2.0
                               else -4.0 * np.pi / cfg.length_m)

    poses = []
    heading = 0.0
    center = np.zeros(3)
    prev_s = 0.0
    for s in arclens:
        ds = s - prev_s
        if ds > 0.0:
            kappa = curvature(0.5 * (prev_s + s))
            if abs(kappa) < 1e-12:
                center = center + ds * np.array([np.sin(heading), 0.0, np.cos(heading)])
            else:
                new_heading = heading + kappa * ds
                center = center + np.array(
                    [np.cos(heading) - np.cos(new_heading), 0.0,
                     np.sin(new_heading) - np.sin(heading)]) / kappa
                heading = new_heading
        prev_s = s
        # World-from-camera axes: x right, y down, z = heading.
        r_wc = np.column_stack([
            np.array([np.cos(heading), 0.0, -np.sin(heading)]),
            np.array([0.0, 1.0, 0.0]),
            np.array([np.sin(heading), 0.0, np.cos(heading)]),
        ])
        r_cw = r_wc.T
        poses.append(Pose3(r_cw, -r_cw @ center))
    return poses


def simulate_mc_samples(landmark: Landmark, cfg: DropoutSimConfig,
                        seed: int, frame: int = 0) -> SemanticBelief:
    """Simulated MC-dropout output for one landmark at one frame.

    Draws ``cfg.samples`` probability vectors from a Dirichlet whose mean
    concentrates on the (possibly mislabeled) true class.  The mean mixes
    a one-hot with the uniform as w*onehot + (1-w)*uniform with
    w = kappa / (kappa + 6C), which makes classification entropy fall
    monotonically toward 0 as kappa grows and approach log2 C as kappa
    drops toward the class count.
    """
    if landmark.true_class is None:
        raise ValueError("landmark has no ground-truth class to simulate from")
    rng = _rng(seed, _STREAM_MC, frame, landmark.id)
    n_classes = len(TAXONOMY)
    label = landmark.true_class.id
    if cfg.mislabel_rate > 0.0 and rng.uniform() < cfg.mislabel_rate:
        others = [c.id for c in TAXONOMY if c.id != label]
        label = int(rng.choice(others))
    kappa = (cfg.kappa_static if landmark.true_class.mobility is Mobility.STATIC
             else cfg.kappa_dynamic)
    w = kappa / (kappa + 6.0 * n_classes)
    mean = np.full(n_classes, (1.0 - w) / n_classes)
    mean[label] += w
    samples = rng.dirichlet(kappa * mean, size=cfg.samples)
    return aggregate_mc(samples)


def _one_hot_belief(class_id: int) -> SemanticBelief:
    onehot = np.zeros(len(TAXONOMY))
    onehot[class_id] = 1.0
    return aggregate_mc([onehot])


def observe_frame(world: Sequence[Landmark], rig: CameraRig, true_pose: Pose3,
                  noise: np.ndarray, seed: int, frame: int = 0,
                  dropout: Optional[DropoutSimConfig] = None) -> list[CandidateFeature]:
    """Noisy stereo candidates for every landmark visible from a pose.

    Landmarks behind the camera or outside either image are excluded, as
    are those whose noisy disparity falls below the triangulation cutoff.
    Pixel noise is drawn with covariance ``noise``, keyed by landmark id;
    predictions and Jacobians are linearized at ``true_pose``.  Without a
    dropout config each candidate carries its exact one-hot class belief.
    """
    noise = np.asarray(noise, dtype=float).reshape(3, 3)
    points = np.vstack([lm.position for lm in world])
    p_c = geometry.transform_point(true_pose, points)
    z = p_c[:, 2]
    visible = z > rig.depth_min
    if not np.any(visible):
        return []
    pix = np.full((len(world), 3), np.nan)
    zv = z[visible]
    pix[visible, 0] = rig.fx * p_c[visible, 0] / zv + rig.cx
    pix[visible, 1] = rig.fy * p_c[visible, 1] / zv + rig.cy
    pix[visible, 2] = rig.fx * (p_c[visible, 0] - rig.baseline) / zv + rig.cx
    visible &= (
        (pix[:, 0] >= 0) & (pix[:, 0] < rig.width)
        & (pix[:, 2] >= 0) & (pix[:, 2] < rig.width)
        & (pix[:, 1] >= 0) & (pix[:, 1] < rig.height)
        & (pix[:, 0] - pix[:, 2] > rig.disparity_min)
    )

    # One id-indexed noise panel per frame: landmark k always gets row k,
    # so culling or reordering other landmarks never shifts anyone's draw.
    try:
        scale = np.linalg.cholesky(noise)
        assumed = noise
    except np.linalg.LinAlgError:
        # Noise-free runs: draws vanish but the assumed covariance the
        # estimator inverts still needs to be definite.
        scale = np.zeros((3, 3))
        assumed = noise + (_PIXEL_SIGMA_FLOOR ** 2) * np.eye(3)
    draws = _rng(seed, _STREAM_PIXELS, frame).standard_normal((len(world), 3))
    observations = pix + draws @ scale.T

    candidates = []
    for idx in np.flatnonzero(visible):
        obs = observations[idx]
        if obs[0] - obs[2] <= rig.disparity_min:
            continue  # noise pushed the disparity below the usable cutoff
        lm = world[idx]
        if dropout is None:
            belief = _one_hot_belief(lm.true_class.id)
        else:
            belief = simulate_mc_samples(lm, dropout, seed, frame)
        jac = np.empty((3, 6))
        dpix = np.array([
            [rig.fx / z[idx], 0.0, -rig.fx * p_c[idx, 0] / z[idx] ** 2],
            [0.0, rig.fy / z[idx], -rig.fy * p_c[idx, 1] / z[idx] ** 2],
            [rig.fx / z[idx], 0.0, -rig.fx * (p_c[idx, 0] - rig.baseline) / z[idx] ** 2],
        ])
        jac[:, :3] = dpix
        jac[:, 3:] = dpix @ (-geometry.hat(p_c[idx]))
        candidates.append(CandidateFeature(
            landmark=lm, predicted=pix[idx], jacobian=jac,
            noise=assumed, belief=belief, observation=obs))
    return candidates


def relinearize(candidates: Sequence[CandidateFeature], rig: CameraRig,
                pose: Pose3) -> list[CandidateFeature]:
    """Re-evaluate predictions and Jacobians at the estimator's pose.

    Candidates whose landmark no longer clears the depth cutoff get None
    prediction/Jacobian and will be rejected as BehindCamera; their
    observations are kept untouched.
    """
    out = []
    for cand in candidates:
        try:
            predicted = project_stereo(rig, pose, cand.landmark.position)
            jac = jacobian_wrt_pose(rig, pose, cand.landmark.position)
        except BehindCamera:
            predicted, jac = None, None
        out.append(replace(cand, predicted=predicted, jacobian=jac))
    return out


@dataclass(frozen=True, eq=False)
class SequenceResult:
    """Everything a simulated run produced.

    ``registry`` is the map-point registry: ids of every landmark that was
    selected at least once across the sequence.
    """

    true_poses: tuple[Pose3, ...]
    poses: tuple[Pose3, ...]
    beliefs: tuple[PoseBelief, ...]
    reports: tuple[tuple[CandidateScore, ...], ...]
    registry: frozenset[int]

    @property
    def map_points(self) -> int:
        return len(self.registry)


def run_sequence(world: Sequence[Landmark], trajectory: TrajectoryConfig,
                 rig: CameraRig, selection: SelectionConfig, noise: NoiseConfig,
                 seed: int, dropout: Optional[DropoutSimConfig] = None) -> SequenceResult:
    """Drive the full predict/observe/select/update loop over a trajectory.

    Per frame: predict through the (noisy) odometry increment, observe the
    world from the true pose, relinearize the candidates at the estimate,
    run the configured selection strategy, and update the belief with the
    selected measurements.  Raises EstimatorDiverged with the offending
    frame index if the update falls apart.
    """
    true_poses = generate_trajectory(trajectory)
    estimator = StereoEstimator(rig)
    belief = PoseBelief(true_poses[0], noise.initial_cov())
    process_cov = noise.process_cov()
    pixel_cov = noise.pixel_cov()
    process_scale = np.array([noise.process_sigma_translation] * 3
                             + [noise.process_sigma_rotation] * 3)

    est_poses: list[Pose3] = []
    beliefs: list[PoseBelief] = []
    reports: list[tuple[CandidateScore, ...]] = []
    registry: set[int] = set()

    for k, true_pose in enumerate(true_poses):
        if k > 0:
            true_rel = geometry.compose(true_pose, geometry.inverse(true_poses[k - 1]))
            wiggle = _rng(seed, _STREAM_ODOMETRY, k).standard_normal(6) * process_scale
            increment = geometry.compose(geometry.exp_se3(wiggle), true_rel)
            belief = estimator.predict(belief, MotionPrior(increment, process_cov))

        raw = observe_frame(world, rig, true_pose, pixel_cov, seed, k, dropout)
        candidates = relinearize(raw, rig, belief.pose)

        try:
            if selection.strategy is Strategy.DAVISON_GREEDY:
                latest = belief

                def updater(b: PoseBelief, cand: CandidateFeature) -> PoseBelief:
                    nonlocal latest
                    obs = StereoObservation(cand.observation, cand.noise)
                    latest = estimator.update_single(b, (obs, cand.landmark))
                    return latest

                scores = select_greedy(belief, candidates, selection, updater)
                belief = latest
            else:
                scores = select_batch(belief, candidates, selection)
                chosen = [(StereoObservation(c.observation, c.noise), c.landmark)
                          for c, s in zip(candidates, scores) if s.selected]
                if chosen:
                    belief = estimator.update(belief, chosen)
        except DivergedUpdate as err:
            raise EstimatorDiverged(k, err) from err

        registry.update(s.candidate_id for s in scores if s.selected)
        est_poses.append(belief.pose)
        beliefs.append(belief)
        reports.append(tuple(scores))

    return SequenceResult(
        true_poses=tuple(true_poses),
        poses=tuple(est_poses),
        beliefs=tuple(beliefs),
        reports=tuple(reports),
        registry=frozenset(registry),
    )


@dataclass(frozen=True, eq=False)
class Scenario:
    """A fully resolved experiment description."""

    world: WorldConfig
    trajectory: TrajectoryConfig
    dropout: DropoutSimConfig
    selection: SelectionConfig
    noise: NoiseConfig
    rig: CameraRig
    seed: int
    strategies: tuple[Strategy, ...] = field(default=(Strategy.KAESS_BATCH,))


def load_scenario(path) -> Scenario:
    """Parse a TOML scenario file into a Scenario.

    Required tables: [world], [trajectory], [camera]; optional: [dropout],
    [selection], [noise].  A top-level ``seed`` feeds every stream and
    defaults to 0.
    """
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    seed = int(data.get("seed", 0))

    wd = data["world"]
    world = WorldConfig(
        count=int(wd["landmarks"]),
        bounds=np.asarray(wd["bounds"], dtype=float),
        dynamic_fraction=float(wd.get("dynamic_fraction", 0.0)),
        class_weights=(np.asarray(wd["class_weights"], dtype=float)
                       if "class_weights" in wd else None),
        seed=int(wd.get("seed", seed)),
    )
    td = data["trajectory"]
    trajectory = TrajectoryConfig(
        shape=str(td["shape"]),
        length_m=float(td["length_m"]),
        frames=int(td["frames"]),
        profile=str(td.get("profile", "constant")),
    )
    cd = data["camera"]
    rig = CameraRig(
        fx=float(cd["fx"]), fy=float(cd["fy"]),
        cx=float(cd["cx"]), cy=float(cd["cy"]),
        baseline=float(cd["baseline"]),
        width=int(cd.get("width", 640)), height=int(cd.get("height", 480)),
        depth_min=float(cd.get("depth_min", 0.1)),
        disparity_min=float(cd.get("disparity_min", 0.25)),
    )
    dd = data.get("dropout", {})
    dropout = DropoutSimConfig(
        samples=int(dd.get("samples", 6)),
        kappa_static=float(dd.get("kappa_static", 500.0)),
        kappa_dynamic=float(dd.get("kappa_dynamic", dd.get("kappa_static", 500.0))),
        mislabel_rate=float(dd.get("mislabel_rate", 0.0)),
    )
    sd = data.get("selection", {})
    names = sd.get("strategies", [sd.get("strategy", "sivo-batch")])
    strategies = tuple(Strategy(name) for name in names)
    selection = SelectionConfig(
        threshold_bits=float(sd.get("threshold_bits", 2.0)),
        strategy=strategies[0],
        mc_samples=dropout.samples,
        max_selected=(int(sd["max_selected"]) if "max_selected" in sd else None),
    )
    nd = data.get("noise", {})
    noise = NoiseConfig(
        pixel_sigma=float(nd.get("pixel_sigma", 1.0)),
        process_sigma_translation=float(nd.get("process_sigma_translation", 0.02)),
        process_sigma_rotation=float(nd.get("process_sigma_rotation", 0.002)),
        initial_sigma_translation=float(nd.get("initial_sigma_translation", 1e-4)),
        initial_sigma_rotation=float(nd.get("initial_sigma_rotation", 1e-5)),
    )
    return Scenario(world=world, trajectory=trajectory, dropout=dropout,
                    selection=selection, noise=noise, rig=rig, seed=seed,
                    strategies=strategies)
