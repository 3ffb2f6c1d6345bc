import numpy as np
import pytest

from extgraph import sim
from extgraph.geom import Pose, angular_distance
from extgraph.tracking import Tracker, TrackerConfig, track_sequence


def _run(name, frames=None, noise=None, seed=0, **cfg):
    p = sim.preset(name, frames)
    scene = sim.generate_scene(p.scene, seed)
    traj = sim.generate_trajectory(p.trajectory)
    obs = sim.run_sequence(scene, traj, p.camera, noise or sim.NoiseSpec(), seed)
    results, graph = track_sequence(obs, TrackerConfig(**cfg), origin=traj[0])
    return obs, results, graph


def _max_errors(obs, results):
    rot = max(angular_distance(r.pose.rotation, f.gt_pose.rotation) for r, f in zip(results, obs))
    pos = max(np.linalg.norm(r.pose.translation - f.gt_pose.translation) for r, f in zip(results, obs))
    return rot, pos


@pytest.fixture(scope="module")
def manhattan():
    return _run("manhattan")


def test_first_frame_repeated_gives_identity():
    p = sim.preset("manhattan", 2)
    scene = sim.generate_scene(p.scene, 0)
    f0 = sim.observe(scene, sim.generate_trajectory(p.trajectory)[0], p.camera)
    t = Tracker()
    t.track(f0)
    r = t.track(f0)
    assert angular_distance(r.pose.rotation, np.eye(3)) < 1e-12
    assert np.linalg.norm(r.pose.translation) < 1e-12
    assert r.rotation_source == "egraph" and r.reference == 0


def test_noise_free_manhattan_exact(manhattan):
    obs, results, _ = manhattan
    assert len(results) == 100
    rot, pos = _max_errors(obs, results)
    assert rot <= 1e-9 and pos <= 1e-9
    assert all(r.failure is None for r in results)


def test_manhattan_depth_one(manhattan):
    _, results, graph = manhattan
    assert max(r.depth for r in results) == 1
    assert {r.rotation_source for r in results[1:]} == {"egraph"}
    assert all(e.a == 0 for e in graph.edges.values() if e.b == 1)


def test_noise_free_general_exact():
    obs, results, _ = _run("general", 60)
    rot, pos = _max_errors(obs, results)
    assert rot <= 1e-9 and pos <= 1e-9


def test_pure_rotation_tracked():
    obs, results, _ = _run("pure-rotation")
    assert all(r.rotation_source in ("anchor", "egraph") for r in results)
    rot, _ = _max_errors(obs, results)
    assert rot <= 1e-9
    origin = obs[0].gt_pose.translation
    assert max(np.linalg.norm(r.pose.translation - origin) for r in results) <= 1e-9


def test_chain_mode_exact_and_deep():
    obs, results, _ = _run("manhattan", 30, reference="chain")
    rot, pos = _max_errors(obs, results)
    assert rot <= 1e-9 and pos <= 1e-9
    assert [r.depth for r in results] == list(range(30))
    assert {r.rotation_source for r in results[1:]} == {"chain"}


def test_corridor_falls_back_to_points_in_turn():
    obs, results, graph = _run("corridor")
    rot, pos = _max_errors(obs, results)
    assert rot <= 1e-9 and pos <= 1e-6
    fallback = [r for r in results if r.failure == "rotation-unavailable"]
    assert all(r.rotation_source == "points" for r in fallback)
    assert len(fallback) < 10


def test_sign_flipped_observations_same_poses(manhattan):
    obs, results, _ = manhattan
    rng = np.random.default_rng(3)
    flipped = [f.with_direction_signs(rng.choice((-1, 1), len(f.directions) + len(f.planes))) for f in obs]
    res2, _ = track_sequence(flipped, origin=obs[0].gt_pose)
    for a, b in zip(results, res2):
        assert angular_distance(a.pose.rotation, b.pose.rotation) <= 1e-12


def test_noisy_manhattan_reasonable():
    obs, results, _ = _run("manhattan", 60, sim.NoiseSpec(direction_deg=0.2, plane_distance_m=0.005), seed=2)
    rot, pos = _max_errors(obs, results)
    assert np.degrees(rot) < 1.5 and pos < 0.1


def test_keyframe_every_frame():
    _, results, graph = _run("manhattan", 10, every_frame_keyframe=True)
    assert len(graph.keyframes) == 10
    assert [r.keyframe for r in results[1:]] == list(range(1, 10))


def test_origin_composes():
    p = sim.preset("manhattan", 3)
    scene = sim.generate_scene(p.scene, 0)
    obs = sim.run_sequence(scene, sim.generate_trajectory(p.trajectory), p.camera)
    g = Pose(np.eye(3), np.array([1.0, 2.0, 3.0]))
    results, _ = track_sequence(obs, origin=g)
    np.testing.assert_array_equal(results[0].pose.translation, (1, 2, 3))
