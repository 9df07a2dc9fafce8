"""World synthesis, trajectory shapes, and the closed simulation loop."""
import math
import textwrap

import numpy as np
import pytest

from sivo import geometry
from sivo.camera import CameraRig
from sivo.selection import SelectionConfig, Strategy
from sivo.semantics import DYNAMIC_IDS, TAXONOMY, Mobility
from sivo.sim import (
    DropoutSimConfig,
    NoiseConfig,
    TrajectoryConfig,
    WorldConfig,
    generate_trajectory,
    generate_world,
    load_scenario,
    observe_frame,
    run_sequence,
    simulate_mc_samples,
)
from sivo.world import Landmark

RIG = CameraRig(fx=500.0, fy=500.0, cx=320.0, cy=240.0, baseline=0.5)
_BOUNDS = np.array([[-10.0, 10.0], [-3.0, 3.0], [-5.0, 25.0]])


def _camera_center(pose):
    return -pose.rotation.T @ pose.translation


# --------------------------------------------------------------------- world


def test_generate_world_deterministic():
    cfg = WorldConfig(count=50, bounds=_BOUNDS, dynamic_fraction=0.3, seed=9)
    a = generate_world(cfg)
    b = generate_world(cfg)
    assert all(np.array_equal(x.position, y.position) and x.true_class is y.true_class
               for x, y in zip(a, b))
    assert [lm.id for lm in a] == list(range(50))


def test_generate_world_respects_bounds():
    cfg = WorldConfig(count=500, bounds=_BOUNDS, seed=1)
    pos = np.vstack([lm.position for lm in generate_world(cfg)])
    assert np.all(pos >= _BOUNDS[:, 0]) and np.all(pos <= _BOUNDS[:, 1])


def test_generate_world_dynamic_fraction_mixture():
    # binomial 3-sigma band around the requested fraction
    n = 10_000
    cfg = WorldConfig(count=n, bounds=_BOUNDS, dynamic_fraction=0.5, seed=4)
    frac = np.mean([lm.true_class.mobility is Mobility.DYNAMIC
                    for lm in generate_world(cfg)])
    assert abs(frac - 0.5) < 3.0 * math.sqrt(0.25 / n)


def test_generate_world_class_weights_restrict_support():
    weights = np.zeros(15)
    weights[2] = 0.5   # building
    weights[11] = 0.5  # car
    cfg = WorldConfig(count=2000, bounds=_BOUNDS, dynamic_fraction=0.5,
                      class_weights=weights, seed=2)
    ids = {lm.true_class.id for lm in generate_world(cfg)}
    assert ids == {2, 11}


def test_world_config_validation():
    with pytest.raises(ValueError):
        WorldConfig(count=0, bounds=_BOUNDS)
    with pytest.raises(ValueError):
        WorldConfig(count=1, bounds=_BOUNDS, dynamic_fraction=1.5)
    with pytest.raises(ValueError):
        WorldConfig(count=1, bounds=_BOUNDS, class_weights=np.full(15, 0.1))


# ---------------------------------------------------------------- trajectory


def test_straight_trajectory_endpoints():
    cfg = TrajectoryConfig(shape="straight", length_m=60.0, frames=80)
    poses = generate_trajectory(cfg)
    assert len(poses) == 80
    assert np.allclose(poses[0].matrix(), np.eye(4), atol=1e-12)
    assert np.allclose(_camera_center(poses[-1]), [0.0, 0.0, 60.0], atol=1e-9)
    # heading never changes on a straight path
    for pose in poses:
        assert np.allclose(pose.rotation, np.eye(3), atol=1e-12)


def test_loop_trajectory_closes():
    # odd frame count so the far side of the circle is sampled exactly
    cfg = TrajectoryConfig(shape="loop", length_m=40.0, frames=91)
    poses = generate_trajectory(cfg)
    assert np.allclose(_camera_center(poses[-1]), np.zeros(3), atol=1e-9)
    assert np.allclose(poses[-1].rotation, np.eye(3), atol=1e-9)
    # the circle's diameter matches the configured length
    centers = np.vstack([_camera_center(p) for p in poses])
    assert np.isclose(centers[:, 0].max(), 40.0 / math.pi, atol=1e-9)
    assert np.allclose(centers[:, 1], 0.0)  # planar


def test_figure8_trajectory_closes_twice():
    cfg = TrajectoryConfig(shape="figure8", length_m=80.0, frames=201)
    poses = generate_trajectory(cfg)
    mid = _camera_center(poses[100])
    assert np.allclose(mid, np.zeros(3), atol=1e-6)  # crossover point
    assert np.allclose(_camera_center(poses[-1]), np.zeros(3), atol=1e-9)
    centers = np.vstack([_camera_center(p) for p in poses])
    # lobes on both sides of the start line
    assert centers[:, 0].max() > 1.0 and centers[:, 0].min() < -1.0


def test_ease_profile_same_endpoints_slower_start():
    const = generate_trajectory(
        TrajectoryConfig(shape="straight", length_m=30.0, frames=40))
    eased = generate_trajectory(
        TrajectoryConfig(shape="straight", length_m=30.0, frames=40, profile="ease"))
    assert np.allclose(_camera_center(eased[-1]), _camera_center(const[-1]))
    first_const = np.linalg.norm(_camera_center(const[1]))
    first_eased = np.linalg.norm(_camera_center(eased[1]))
    assert first_eased < first_const  # ramping in from rest


def test_trajectory_config_validation():
    with pytest.raises(ValueError):
        TrajectoryConfig(shape="straight", length_m=10.0, frames=1)
    with pytest.raises(ValueError):
        TrajectoryConfig(shape="spiral", length_m=10.0, frames=5)
    with pytest.raises(ValueError):
        TrajectoryConfig(shape="loop", length_m=10.0, frames=5, profile="warp")


# ------------------------------------------------------------ mc simulation


def _mc_stats(kappa, n, samples=6, seed=123):
    entropies, hits = [], 0
    for i in range(n):
        lm = Landmark(id=i, position=np.zeros(3), true_class=TAXONOMY[i % 9])
        cfg = DropoutSimConfig(samples=samples, kappa_static=kappa,
                               kappa_dynamic=kappa)
        belief = simulate_mc_samples(lm, cfg, seed=seed)
        entropies.append(belief.entropy_bits)
        hits += belief.argmax_class.id == lm.true_class.id
    return float(np.mean(entropies)), hits / n


def test_mc_kappa_near_class_count_is_almost_uniform():
    mean_entropy, _ = _mc_stats(kappa=15.0, n=100)
    assert mean_entropy > 0.9 * math.log2(15)


def test_mc_moderate_kappa_still_classifies_correctly():
    _, accuracy = _mc_stats(kappa=50.0, n=1000)
    assert accuracy >= 0.99


def test_mc_operating_point_entropy_near_one_bit():
    mean_entropy, accuracy = _mc_stats(kappa=500.0, n=100)
    assert 0.9 < mean_entropy < 1.4
    assert accuracy == 1.0


def test_mc_huge_kappa_is_certain():
    mean_entropy, accuracy = _mc_stats(kappa=1e6, n=100)
    assert mean_entropy < 0.01
    assert accuracy == 1.0


def test_mc_samples_deterministic_per_key():
    lm = Landmark(id=7, position=np.zeros(3), true_class=TAXONOMY[3])
    cfg = DropoutSimConfig(samples=6)
    a = simulate_mc_samples(lm, cfg, seed=5, frame=2)
    b = simulate_mc_samples(lm, cfg, seed=5, frame=2)
    c = simulate_mc_samples(lm, cfg, seed=5, frame=3)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_mc_mislabel_substitutes_other_classes():
    cfg = DropoutSimConfig(samples=4, kappa_static=1e5, kappa_dynamic=1e5,
                           mislabel_rate=0.9)
    wrong = 0
    for i in range(200):
        lm = Landmark(id=i, position=np.zeros(3), true_class=TAXONOMY[0])
        belief = simulate_mc_samples(lm, cfg, seed=11)
        wrong += belief.argmax_class.id != 0
    assert 150 <= wrong <= 200  # ~90% of 200, generous binomial slack


def test_mc_requires_ground_truth_class():
    lm = Landmark(id=0, position=np.zeros(3))
    with pytest.raises(ValueError):
        simulate_mc_samples(lm, DropoutSimConfig(), seed=0)


def test_dropout_config_validation():
    with pytest.raises(ValueError):
        DropoutSimConfig(samples=0)
    with pytest.raises(ValueError):
        DropoutSimConfig(kappa_static=0.0)
    with pytest.raises(ValueError):
        DropoutSimConfig(mislabel_rate=1.0)


# --------------------------------------------------------------- observation


def _grid_world(n=40, z=8.0, spread=2.0, seed=0):
    rng = np.random.default_rng(seed)
    return [Landmark(i, np.array([rng.uniform(-spread, spread),
                                  rng.uniform(-1.0, 1.0),
                                  z + rng.uniform(-2.0, 2.0)]),
                     TAXONOMY[i % 9]) for i in range(n)]


def test_observe_frame_noise_free_is_exact():
    world = _grid_world()
    pose = geometry.Pose3.identity()
    cands = observe_frame(world, RIG, pose, np.zeros((3, 3)), seed=1)
    assert len(cands) > 0
    for cand in cands:
        assert np.array_equal(cand.observation, cand.predicted)
        # assumed covariance stays invertible even in noiseless runs
        np.linalg.cholesky(cand.noise)


def test_observe_frame_noise_covariance_matches():
    # thousands of landmarks at the same spot = thousands of draws of the
    # same pixel noise; their sample covariance must match the config
    n = 100_000
    world = [Landmark(i, np.array([0.0, 0.0, 8.0]), TAXONOMY[0])
             for i in range(n)]
    noise = np.diag([1.0, 0.5, 2.0])
    cands = observe_frame(world, RIG, geometry.Pose3.identity(), noise, seed=3)
    deltas = np.vstack([c.observation - c.predicted for c in cands])
    assert len(cands) > 0.99 * n  # a few may fall below the disparity cutoff
    empirical = np.cov(deltas, rowvar=False)
    assert np.linalg.norm(empirical - noise) / np.linalg.norm(noise) < 0.05


def test_observe_frame_culls_invisible():
    world = [
        Landmark(0, np.array([0.0, 0.0, 8.0]), TAXONOMY[0]),     # fine
        Landmark(1, np.array([0.0, 0.0, -5.0]), TAXONOMY[0]),    # behind
        Landmark(2, np.array([0.0, 0.0, 0.05]), TAXONOMY[0]),    # below depth_min
        Landmark(3, np.array([50.0, 0.0, 8.0]), TAXONOMY[0]),    # off image
        Landmark(4, np.array([0.0, 0.0, 2000.0]), TAXONOMY[0]),  # no disparity
    ]
    cands = observe_frame(world, RIG, geometry.Pose3.identity(),
                          np.zeros((3, 3)), seed=0)
    assert [c.landmark.id for c in cands] == [0]


def test_observe_frame_empty_when_nothing_visible():
    world = [Landmark(0, np.array([0.0, 0.0, -8.0]), TAXONOMY[0])]
    assert observe_frame(world, RIG, geometry.Pose3.identity(),
                         np.zeros((3, 3)), seed=0) == []


def test_observe_frame_deterministic_and_frame_keyed():
    world = _grid_world()
    noise = np.eye(3)
    pose = geometry.Pose3.identity()
    a = observe_frame(world, RIG, pose, noise, seed=5, frame=1)
    b = observe_frame(world, RIG, pose, noise, seed=5, frame=1)
    c = observe_frame(world, RIG, pose, noise, seed=5, frame=2)
    assert all(np.array_equal(x.observation, y.observation) for x, y in zip(a, b))
    assert any(not np.array_equal(x.observation, y.observation)
               for x, y in zip(a, c))


def test_observe_frame_noise_keyed_by_landmark_not_visibility():
    # moving the camera changes who is visible, but never which noise draw
    # a surviving landmark receives
    world = _grid_world(n=30)
    noise = np.eye(3)
    near = geometry.Pose3.identity()
    shifted = geometry.Pose3(np.eye(3), np.array([4.0, 0.0, 0.0]))
    a = {c.landmark.id: c.observation - c.predicted
         for c in observe_frame(world, RIG, near, noise, seed=5, frame=0)}
    b = {c.landmark.id: c.observation - c.predicted
         for c in observe_frame(world, RIG, shifted, noise, seed=5, frame=0)}
    shared = set(a) & set(b)
    assert shared and shared != set(a)  # the shift did cull someone
    for lid in shared:
        assert np.allclose(a[lid], b[lid], atol=1e-12)


def test_observe_frame_one_hot_beliefs_without_dropout():
    world = _grid_world()
    cands = observe_frame(world, RIG, geometry.Pose3.identity(),
                          np.zeros((3, 3)), seed=0)
    for cand in cands:
        assert cand.belief.entropy_bits == 0.0
        assert cand.belief.argmax_class is cand.landmark.true_class


# ----------------------------------------------------------------- sequences


def _tiny_setup(dynamic_fraction=0.0, seed=3):
    world = generate_world(WorldConfig(
        count=90, bounds=np.array([[-8.0, 8.0], [-3.0, 3.0], [-4.0, 28.0]]),
        dynamic_fraction=dynamic_fraction, seed=seed))
    trajectory = TrajectoryConfig(shape="straight", length_m=18.0, frames=12)
    return world, trajectory


def test_run_sequence_bitwise_repeatable():
    world, trajectory = _tiny_setup(dynamic_fraction=0.25)
    config = SelectionConfig(threshold_bits=2.0)
    noise = NoiseConfig()
    a = run_sequence(world, trajectory, RIG, config, noise, seed=17)
    b = run_sequence(world, trajectory, RIG, config, noise, seed=17)
    for pa, pb in zip(a.poses, b.poses):
        assert np.array_equal(pa.matrix(), pb.matrix())
    assert a.registry == b.registry


def test_run_sequence_noise_free_all_features_tracks_exactly():
    # exact odometry + exact pixels: the filter has nothing to correct
    world, trajectory = _tiny_setup()
    config = SelectionConfig(threshold_bits=0.0, strategy=Strategy.ALL_FEATURES)
    noise = NoiseConfig(pixel_sigma=0.0, process_sigma_translation=0.0,
                        process_sigma_rotation=0.0)
    result = run_sequence(world, trajectory, RIG, config, noise, seed=0)
    final_err = np.linalg.norm(
        _camera_center(result.poses[-1]) - _camera_center(result.true_poses[-1]))
    assert final_err < 1e-6


def test_run_sequence_sivo_equals_mi_when_semantics_degenerate():
    # zero classification entropy and no dynamic classes: the semantic
    # term is identically zero, so both strategies pick the same features
    # and produce bit-identical trajectories
    world, trajectory = _tiny_setup(dynamic_fraction=0.0)
    noise = NoiseConfig()
    sivo = run_sequence(world, trajectory, RIG,
                        SelectionConfig(threshold_bits=1.5), noise, seed=8)
    mi = run_sequence(world, trajectory, RIG,
                      SelectionConfig(threshold_bits=1.5, strategy=Strategy.MI_ONLY),
                      noise, seed=8)
    assert sivo.registry == mi.registry
    for pa, pb in zip(sivo.poses, mi.poses):
        assert np.array_equal(pa.matrix(), pb.matrix())


def test_run_sequence_shapes_and_registry():
    world, trajectory = _tiny_setup(dynamic_fraction=0.2)
    config = SelectionConfig(threshold_bits=2.0)
    result = run_sequence(world, trajectory, RIG, config, NoiseConfig(), seed=2,
                          dropout=DropoutSimConfig(samples=6))
    n = trajectory.frames
    assert len(result.poses) == len(result.beliefs) == len(result.reports) == n
    assert len(result.true_poses) == n
    assert result.map_points == len(result.registry)
    world_ids = {lm.id for lm in world}
    assert result.registry <= world_ids
    selected_ids = {s.candidate_id
                    for frame in result.reports for s in frame if s.selected}
    assert selected_ids == result.registry
    dynamic_ids = {lm.id for lm in world if lm.true_class.id in DYNAMIC_IDS}
    assert not result.registry & dynamic_ids  # perfect semantics: no leakage


def test_run_sequence_greedy_strategy_runs():
    world, trajectory = _tiny_setup(dynamic_fraction=0.2)
    config = SelectionConfig(threshold_bits=2.0, strategy=Strategy.DAVISON_GREEDY,
                             max_selected=4)
    result = run_sequence(world, trajectory, RIG, config, NoiseConfig(), seed=2)
    per_frame = [sum(s.selected for s in frame) for frame in result.reports]
    assert max(per_frame) <= 4
    assert sum(per_frame) > 0


# ----------------------------------------------------------------- scenarios


def test_load_scenario_round_trip(tmp_path):
    text = textwrap.dedent("""\
        seed = 21

        [world]
        landmarks = 64
        bounds = [[-5.0, 5.0], [-2.0, 2.0], [0.0, 30.0]]
        dynamic_fraction = 0.4

        [trajectory]
        shape = "loop"
        length_m = 45.0
        frames = 33
        profile = "ease"

        [camera]
        fx = 400.0
        fy = 410.0
        cx = 300.0
        cy = 200.0
        baseline = 0.4
        disparity_min = 5.0

        [dropout]
        samples = 9
        kappa_static = 800.0

        [selection]
        strategies = ["all", "sivo-greedy"]
        threshold_bits = 1.25
        max_selected = 40

        [noise]
        pixel_sigma = 0.7
    """)
    path = tmp_path / "scenario.toml"
    path.write_text(text)
    sc = load_scenario(path)
    assert sc.seed == 21
    assert sc.world.count == 64 and sc.world.seed == 21
    assert sc.world.dynamic_fraction == 0.4
    assert sc.trajectory.shape == "loop" and sc.trajectory.profile == "ease"
    assert sc.rig.fy == 410.0 and sc.rig.disparity_min == 5.0
    assert sc.rig.width == 640  # default preserved
    assert sc.dropout.samples == 9
    assert sc.dropout.kappa_dynamic == 800.0  # follows kappa_static
    assert sc.selection.threshold_bits == 1.25
    assert sc.selection.mc_samples == 9
    assert sc.selection.max_selected == 40
    assert sc.strategies == (Strategy.ALL_FEATURES, Strategy.DAVISON_GREEDY)
    assert sc.selection.strategy is Strategy.ALL_FEATURES
    assert sc.noise.pixel_sigma == 0.7
    assert sc.noise.process_sigma_translation == 0.02  # default


def test_bundled_scenarios_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "scenarios"
    names = {p.name for p in root.glob("*.toml")}
    assert {"loop.toml", "straight.toml", "figure8.toml"} <= names
    for path in sorted(root.glob("*.toml")):
        sc = load_scenario(path)
        assert sc.trajectory.frames >= 2
