import numpy as np
import pytest
from hypothesis import assume, given

from extgraph.geom import rot_z
from extgraph.landmarks import (
    DEFAULT_TH_VD,
    DirectionLandmark,
    DirectionObservation,
    camera_plane,
    canonicalize,
    cluster_directions,
    fuse,
    match_direction,
    to_world,
    world_plane,
)

from oracles import perpendicular_unit, rodrigues
from strategies import rotations, unit3, vec3


def test_canonicalize_examples():
    v, s = canonicalize((0, 0, 1))
    np.testing.assert_array_equal(v, (0, 0, 1))
    assert s == 1
    v, s = canonicalize((-1, 0, 0))
    np.testing.assert_array_equal(v, (1, 0, 0))
    assert s == -1


@given(unit3)
def test_canonicalize_idempotent(v):
    c, s = canonicalize(v)
    c2, s2 = canonicalize(c)
    np.testing.assert_array_equal(c, c2)
    assert s2 == 1
    np.testing.assert_array_equal(c, s * v)


@given(unit3)
def test_canonicalize_is_sign_blind(v):
    np.testing.assert_array_equal(canonicalize(v)[0], canonicalize(-v)[0])


def test_to_world_examples():
    np.testing.assert_array_equal(to_world((1, 0, 0), np.eye(3)), (1, 0, 0))
    np.testing.assert_allclose(to_world((1, 0, 0), rot_z(np.pi / 2)), (0, 1, 0), atol=1e-15)


@given(unit3, rotations)
def test_to_world_preserves_norm(v, r):
    assert abs(np.linalg.norm(to_world(v, r)) - 1) < 1e-12


# association --------------------------------------------------------------------

def test_match_exact_and_negated():
    lms = [DirectionLandmark.create(0, (1, 0, 0)), DirectionLandmark.create(1, (0, 1, 0))]
    m = match_direction((0, 1, 0), lms)
    assert (m.landmark_id, m.sign, m.residual) == (1, 1, 0.0)
    m = match_direction((0, -1, 0), lms)
    assert (m.landmark_id, m.sign) == (1, -1)


def test_match_threshold_boundary():
    lm = [DirectionLandmark.create(0, (1, 0, 0))]
    inside = rot_z(np.radians(4.9)) @ np.array([1.0, 0, 0])
    outside = rot_z(np.radians(5.1)) @ np.array([1.0, 0, 0])
    assert match_direction(inside, lm, DEFAULT_TH_VD) is not None
    assert match_direction(outside, lm, DEFAULT_TH_VD) is None
    assert match_direction(-outside, lm, DEFAULT_TH_VD) is None


def test_match_picks_closest():
    lms = [DirectionLandmark.create(0, rot_z(np.radians(3)) @ [1, 0, 0]),
           DirectionLandmark.create(1, rot_z(np.radians(-1)) @ [1, 0, 0])]
    assert match_direction((1, 0, 0), lms).landmark_id == 1


def test_match_rejects_bad_threshold():
    with pytest.raises(ValueError):
        match_direction((1, 0, 0), [], th_vd=0.0)


# fusion -------------------------------------------------------------------------

def test_fuse_same_direction():
    lm = DirectionLandmark.create(3, (0.6, 0.8, 0))
    out = fuse(lm, lm.dir_w, +1)
    np.testing.assert_allclose(out.dir_w, lm.dir_w, atol=1e-15)
    assert out.support_count == 2 and out.id == 3


def test_fuse_equal_weight_bisector():
    a = np.array([1.0, 0, 0])
    b = rot_z(np.radians(2)) @ a
    out = fuse(DirectionLandmark.create(0, a), b, +1)
    # closed-form bisector of two unit vectors at angle 2 deg
    np.testing.assert_allclose(out.dir_w, [np.cos(np.radians(1)), np.sin(np.radians(1)), 0], atol=1e-12)


@given(unit3, unit3)
def test_fuse_sign_convention(a, b):
    lm = DirectionLandmark.create(0, a)
    assume(lm.dir_w @ b > -0.5)  # fusing an opposite vector with sign +1 is a caller error
    np.testing.assert_allclose(fuse(lm, -b, -1).dir_w, fuse(lm, b, +1).dir_w, atol=1e-12)


# clustering ---------------------------------------------------------------------

def test_cluster_identical_copies():
    d = np.array([0.0, 0.6, 0.8])
    res = cluster_directions([d] * 50, np.radians(3))
    assert len(res.groups) == 1 and res.unclustered == []
    np.testing.assert_allclose(res.groups[0].direction, d, atol=1e-12)
    assert len(res.groups[0].members) == 50


def test_cluster_single_sample():
    res = cluster_directions([DirectionObservation(np.array([1.0, 0, 0]))], np.radians(3))
    assert res.groups == [] and res.unclustered == [0]


def test_cluster_empty():
    res = cluster_directions([], 0.1)
    assert res.groups == [] and res.unclustered == []


def _noisy_bundle(truth, n, sigma, rng):
    out = []
    for _ in range(n):
        axis = perpendicular_unit(truth, rng)
        v = rodrigues(axis, rng.normal(0, sigma)) @ truth
        out.append(v if rng.random() < 0.5 else -v)  # random sign
    return out


def test_cluster_two_noisy_bundles_monte_carlo():
    sigma, tol = np.radians(1), np.radians(3)
    ok = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        t1 = rng.normal(size=3)
        t1 /= np.linalg.norm(t1)
        t2 = perpendicular_unit(t1, rng)
        samples = _noisy_bundle(t1, 50, sigma, rng) + _noisy_bundle(t2, 50, sigma, rng)
        rng.shuffle(samples)
        res = cluster_directions(samples, tol, seed=seed)
        if len(res.groups) != 2:
            continue
        errs = [min(np.degrees(np.arccos(min(1.0, abs(g.direction @ t)))) for g in res.groups) for t in (t1, t2)]
        ok += max(errs) <= 0.5
    assert ok >= 95


@given(vec3)
def test_cluster_deterministic_when_exhaustive(shift):
    rng = np.random.default_rng(0)
    samples = rng.normal(size=(12, 3)) + shift
    a = cluster_directions(samples, 0.3, iterations=50, seed=1)
    b = cluster_directions(samples, 0.3, iterations=50, seed=2)
    assert [g.members for g in a.groups] == [g.members for g in b.groups]
    assert a.unclustered == b.unclustered


# plane transfer ----------------------------------------------------------------

@given(rotations, vec3, unit3, vec3)
def test_plane_roundtrip(r, t, n, p_on):
    d_w = -float(n @ p_on)
    n_c, d_c = camera_plane(n, d_w, r, t)
    assert d_c >= 0
    n_w2, d_w2 = world_plane(n_c, d_c, r, t)
    s = np.sign(n_w2 @ n)
    np.testing.assert_allclose(s * n_w2, n, atol=1e-12)
    assert s * d_w2 == pytest.approx(d_w, abs=1e-9)
    # a world point on the plane satisfies the camera-frame equation
    p_c = r.T @ (p_on - t)
    assert n_c @ p_c + d_c == pytest.approx(0, abs=1e-9)
