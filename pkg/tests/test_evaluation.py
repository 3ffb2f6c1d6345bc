import numpy as np
import pytest
from hypothesis import given, settings

from extgraph.geom import DegenerateGeometryError, Pose, angular_distance, rot_z
from extgraph.evaluation import (
    AssociationError,
    Trajectory,
    TrajectoryFormatError,
    align_se3,
    are_mean,
    associate,
    ate_rmse,
    evaluate,
    format_tum,
    parse_tum,
    read_tum,
    relative_errors,
    rpe,
    write_tum,
)

from oracles import are_oracle, ate_oracle, kabsch_scipy, random_rotations, rodrigues, rpe_oracle
from strategies import rotations, seeds, vec3


def _traj(rots, pos, stamps=None):
    n = len(rots)
    stamps = np.arange(n) / 30.0 if stamps is None else np.asarray(stamps, float)
    return Trajectory(stamps, np.asarray(rots, float), np.asarray(pos, float))


def _random_traj(seed, n=10):
    rng = np.random.default_rng(seed)
    return _traj(random_rotations(n, seed), rng.normal(size=(n, 3)))


def _pairs(est, gt):
    return associate(est, gt)


# association -------------------------------------------------------------------------

def test_associate_identical_stamps():
    gt = _random_traj(0)
    assert len(associate(gt, gt)) == 10


def test_associate_offset_beyond_max_dt():
    gt = _random_traj(0)
    est = Trajectory(gt.stamps + 0.5, gt.rotations, gt.positions)
    with pytest.raises(AssociationError):
        associate(est, gt, max_dt=0.02)


def test_associate_half_rate():
    gt = _random_traj(0, 20)
    idx = np.arange(0, 20, 2)
    est = Trajectory(gt.stamps[idx] + 0.001, gt.rotations[idx], gt.positions[idx])
    pairs = associate(est, gt, max_dt=0.01)
    assert len(pairs) == 10
    np.testing.assert_array_equal(pairs.gt.positions, gt.positions[idx])


def test_associate_each_pose_used_once():
    gt = _traj([np.eye(3)] * 2, np.zeros((2, 3)), [0.0, 0.01])
    est = _traj([np.eye(3)], np.zeros((1, 3)), [0.004])
    pairs = associate(est, gt, max_dt=0.02)
    assert len(pairs) == 1 and pairs.gt.stamps[0] == 0.0


def test_trajectory_rejects_unsorted():
    with pytest.raises(ValueError):
        _traj([np.eye(3)] * 2, np.zeros((2, 3)), [1.0, 0.5])


# alignment ---------------------------------------------------------------------------

def test_align_identity_and_shift():
    gt = _random_traj(1)
    g = align_se3(gt.positions, gt.positions)
    np.testing.assert_allclose(g.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(g.translation, 0, atol=1e-12)
    g = align_se3(gt.positions, gt.positions + (1, 0, 0))
    np.testing.assert_allclose(g.translation, (1, 0, 0), atol=1e-12)


@given(rotations, vec3, seeds)
def test_align_recovers_rigid_perturbation(r, t, seed):
    p = np.random.default_rng(seed).normal(size=(8, 3))
    g = align_se3(p, p @ r.T + t)
    assert angular_distance(g.rotation, r) < 1e-9
    np.testing.assert_allclose(g.translation, t, atol=1e-9)


def test_align_degenerate():
    line = np.outer(np.arange(5.0), (1, 1, 0))
    with pytest.raises(DegenerateGeometryError):
        align_se3(line, line)
    with pytest.raises(DegenerateGeometryError):
        align_se3(np.zeros((2, 3)), np.zeros((2, 3)))


# ATE / ARE ----------------------------------------------------------------------------

def test_ate_examples():
    gt = _random_traj(2)
    assert ate_rmse(_pairs(gt, gt)) < 1e-12
    shifted = Trajectory(gt.stamps, gt.rotations, gt.positions + 0.1)
    assert ate_rmse(_pairs(shifted, gt)) < 1e-12  # alignment absorbs constants
    gt2 = _traj([np.eye(3)] * 2, [[0, 0, 0], [1, 0, 0]])
    est2 = _traj([np.eye(3)] * 2, [[0, 0, 0], [1, 0.2, 0]])
    assert ate_rmse(_pairs(est2, gt2), Pose.identity()) == pytest.approx(0.1 * np.sqrt(2), abs=1e-15)


def test_are_examples():
    gt = _random_traj(3)
    assert are_mean(_pairs(gt, gt)) < 1e-9
    off = Trajectory(gt.stamps, np.einsum("ij,njk->nik", rot_z(np.radians(1)), gt.rotations), gt.positions)
    assert are_mean(_pairs(off, gt), Pose.identity()) == pytest.approx(1.0, abs=1e-12)
    mixed = _traj([np.eye(3), rot_z(np.radians(2))], np.zeros((2, 3)))
    ident = _traj([np.eye(3)] * 2, np.zeros((2, 3)))
    assert are_mean(_pairs(mixed, ident), Pose.identity()) == pytest.approx(1.0, abs=1e-12)


def test_are_first_mode_anchors_on_first_pair():
    gt = _random_traj(4)
    g = Pose(rodrigues((1, 1, 1), 0.7), np.array([2.0, 0, 0]))
    moved = gt.transformed(g)
    assert are_mean(_pairs(moved, gt), mode="first") < 1e-12


@given(seeds)
@settings(max_examples=30)
def test_metrics_match_oracle(seed):
    rng = np.random.default_rng(seed)
    gt = _random_traj(seed)
    est_rot = np.array([rodrigues(rng.normal(size=3), rng.normal(0, 0.05)) @ r for r in gt.rotations])
    est = _traj(est_rot, gt.positions + rng.normal(0, 0.1, size=(10, 3)))
    pairs = _pairs(est, gt)
    assert ate_rmse(pairs) == pytest.approx(ate_oracle(est.positions, gt.positions), abs=1e-9)
    r_align, _ = kabsch_scipy(est.positions, gt.positions)
    assert are_mean(pairs) == pytest.approx(are_oracle(est.rotations, gt.rotations, r_align), abs=1e-9)
    for delta in (1, 3):
        ours = rpe(pairs, delta)
        ref = rpe_oracle(est.rotations, est.positions, gt.rotations, gt.positions, delta)
        assert ours[0] == pytest.approx(ref[0], abs=1e-9)
        assert ours[1] == pytest.approx(ref[1], abs=1e-9)


# RPE ------------------------------------------------------------------------------------

def test_rpe_perfect_and_constant_offset():
    gt = _random_traj(5)
    assert rpe(_pairs(gt, gt)) == pytest.approx((0, 0), abs=1e-12)
    moved = gt.transformed(Pose(rodrigues((0, 1, 0), 0.4), np.array([1.0, 2, 3])))
    assert rpe(_pairs(moved, gt), 2) == pytest.approx((0, 0), abs=1e-9)


def test_rpe_kink_only_in_crossing_windows():
    gt = _random_traj(6)
    k = 5
    kink = Pose(rot_z(np.radians(1)), np.zeros(3))
    est = Trajectory(gt.stamps,
                     np.array([r if i < k else kink.rotation @ r for i, r in enumerate(gt.rotations)]),
                     np.array([p if i < k else kink.rotation @ p for i, p in enumerate(gt.positions)]))
    for delta in (1, 3):
        te, re = relative_errors(_pairs(est, gt), delta)
        crossing = np.array([i < k <= i + delta for i in range(10 - delta)])
        assert np.all(re[crossing] > 0.1)
        np.testing.assert_allclose(re[~crossing], 0, atol=1e-9)
        np.testing.assert_allclose(te[~crossing], 0, atol=1e-9)


def test_rpe_bad_delta():
    gt = _random_traj(7, 3)
    with pytest.raises(ValueError):
        relative_errors(_pairs(gt, gt), 0)
    with pytest.raises(ValueError):
        relative_errors(_pairs(gt, gt), 3)


def test_evaluate_report():
    gt = _random_traj(8)
    rep = evaluate(gt, gt, deltas=(1, 2))
    s = rep.summary()
    assert s["pairs"] == 10 and set(s["rpe"]) == {"1", "2"}
    assert s["ate_rmse"] < 1e-12 and s["are_mean"] < 1e-9
    assert rep.frames_csv().splitlines()[0] == "timestamp,position_error_m,rotation_error_deg"
    assert len(rep.frames_csv().splitlines()) == 11


# TUM ------------------------------------------------------------------------------------

def test_tum_identity_line():
    assert format_tum(_traj([np.eye(3)], [[0, 0, 0]], [0.0])) == "0.000000 0 0 0 0 0 0 1\n"


@given(seeds)
@settings(max_examples=20)
def test_tum_roundtrip(seed):
    rng = np.random.default_rng(seed)
    stamps = np.cumsum(rng.integers(1, 10**6, size=10)) / 1e6
    t = Trajectory(stamps, random_rotations(10, seed), rng.normal(0, 50, size=(10, 3)))
    back = parse_tum(format_tum(t))
    np.testing.assert_allclose(back.stamps, t.stamps, atol=1e-9)
    np.testing.assert_allclose(back.positions, t.positions, atol=1e-9)
    for a, b in zip(back.rotations, t.rotations):
        assert angular_distance(a, b) <= 1e-9


def test_tum_comments_and_commas(tmp_path):
    path = tmp_path / "t.tum"
    path.write_text("# timestamp tx ty tz qx qy qz qw\n\n1.0,0,0,0,0,0,0,1\n2.0 1 0 0 0 0 0 1\n")
    t = read_tum(path)
    assert len(t) == 2
    write_tum(tmp_path / "u.tum", t)
    assert (tmp_path / "u.tum").read_text().splitlines()[1] == "2.000000 1 0 0 0 0 0 1"


@pytest.mark.parametrize("text, line", [
    ("0 0 0 0 0 0 0 1\n1 0 0 0 0 0 1\n", 2),
    ("# c\n0 0 0 x 0 0 0 1\n", 2),
    ("0 0 0 0 0 0 0 0\n", 1),
    ("1 0 0 0 0 0 0 1\n1 0 0 0 0 0 0 1\n", 2),
])
def test_tum_malformed_names_line(text, line):
    with pytest.raises(TrajectoryFormatError) as err:
        parse_tum(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)
