import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from extgraph.geom import (
    RankDeficiencyError,
    angular_distance,
    rotation_orthogonal_case,
)
from extgraph.pose import (
    PlanePair,
    RelativeMotion,
    TranslationDegenerateError,
    Weights,
    procrustes_rotation,
    refine_translation,
    rotation_from_matches,
    rotation_from_points,
    translation_cost,
    translation_direction_from_bearings,
    translation_from_points,
)

from oracles import kabsch_scipy, perpendicular_unit, random_rotations, rodrigues, vector_angle
from strategies import rotations, seeds, unit3, vec3


def _pairs(r_gt, dk):
    return [(r_gt @ d, d) for d in dk]


def _perturb(v, sigma, rng):
    return rodrigues(perpendicular_unit(v, rng), rng.normal(0, sigma)) @ v


# rotation from directions ------------------------------------------------------------

@given(rotations, unit3, unit3)
def test_two_pairs_exact(r_gt, a, b):
    assume(np.linalg.norm(np.cross(a, b)) > 0.05)
    r = rotation_from_matches(_pairs(r_gt, [a, b]))
    assert angular_distance(r, r_gt) <= 1e-12


def test_three_orthogonal_pairs_equal_orthogonal_case():
    r_gt = rodrigues((1, -2, 0.5), 2.0)
    dk = random_rotations(1, seed=3)[0].T
    pairs = _pairs(r_gt, dk)
    np.testing.assert_allclose(rotation_from_matches(pairs),
                               rotation_orthogonal_case([p[0] for p in pairs], dk), atol=1e-12)


def test_four_noisy_pairs_monte_carlo():
    sigma = np.radians(0.2)
    good = 0
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        r_gt = random_rotations(1, seed=seed)[0]
        dk = rng.normal(size=(4, 3))
        dk /= np.linalg.norm(dk, axis=1, keepdims=True)
        pairs = [(_perturb(r_gt @ d, sigma, rng), _perturb(d, sigma, rng)) for d in dk]
        try:
            err = np.degrees(angular_distance(rotation_from_matches(pairs), r_gt))
        except RankDeficiencyError:
            continue
        good += err <= 0.5
    assert good >= 950


def test_three_dependent_pairs_fall_back_to_procrustes():
    r_gt = rodrigues((0, 0, 1), 0.4)
    dk = [np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([1.0, 1, 0]) / np.sqrt(2)]
    assert angular_distance(rotation_from_matches(_pairs(r_gt, dk)), r_gt) < 1e-12


def test_rotation_needs_two_directions():
    with pytest.raises(RankDeficiencyError):
        rotation_from_matches([((1, 0, 0), (1, 0, 0))])
    with pytest.raises(RankDeficiencyError):
        rotation_from_matches([((1, 0, 0), (1, 0, 0)), ((2, 0, 0), (2, 0, 0))])
    with pytest.raises(RankDeficiencyError):
        rotation_from_matches([((1, 0, 0), (1, 0, 0))] * 4)


@given(rotations, seeds)
def test_procrustes_matches_scipy(r_gt, seed):
    rng = np.random.default_rng(seed)
    dk = rng.normal(size=(6, 3))
    dj = dk @ r_gt.T + 0.01 * rng.normal(size=(6, 3))
    r_ref, _ = kabsch_scipy(dk - dk.mean(0), dj - dj.mean(0))
    ours = procrustes_rotation(dj - dj.mean(0), dk - dk.mean(0))
    np.testing.assert_allclose(ours, r_ref, atol=1e-9)


# translation from points -------------------------------------------------------------

def test_translation_single_pair():
    np.testing.assert_array_equal(translation_from_points(np.eye(3), [(1, 1, 1)], [(2, 3, 4)]), (1, 2, 3))


@given(rotations, vec3, seeds)
def test_translation_exact_and_mean(r, t, seed):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(3, 3))
    np.testing.assert_allclose(translation_from_points(r, p, p @ r.T + t), t, atol=1e-12)
    noisy = p @ r.T + t + rng.normal(size=(3, 3))
    np.testing.assert_allclose(translation_from_points(r, p, noisy), (noisy - p @ r.T).mean(0), atol=1e-12)


@given(rotations, vec3, seeds)
def test_rotation_from_points(r, t, seed):
    p = np.random.default_rng(seed).normal(size=(5, 3))
    assert angular_distance(rotation_from_points(p, p @ r.T + t), r) < 1e-9


def test_rotation_from_points_collinear():
    p = np.outer(np.arange(4.0), (1, 2, 3))
    with pytest.raises(RankDeficiencyError):
        rotation_from_points(p, p)


# translation direction ----------------------------------------------------------------

def _bearing_pair(r, t, n, rng):
    """Points in front of both cameras, returned as unit bearings (x, x')."""
    xs, x2s = [], []
    while len(xs) < n:
        p = rng.uniform(-2, 2, 3) + (0, 0, 5)
        p2 = r @ p + t
        if p[2] > 0.5 and p2[2] > 0.5:
            xs.append(p / np.linalg.norm(p))
            x2s.append(p2 / np.linalg.norm(p2))
    return np.array(xs), np.array(x2s)


@given(seeds, st.floats(0.05, 1.0))
def test_bearing_translation_two_exact(seed, scale):
    rng = np.random.default_rng(seed)
    r = rodrigues(rng.normal(size=3), rng.uniform(0, 0.3))
    t = rng.normal(size=3) * scale
    x, x2 = _bearing_pair(r, t, 2, rng)
    rows = np.cross(x @ r.T, x2)
    assume(np.linalg.svd(rows, compute_uv=False)[1] > 1e-3)
    t_hat = translation_direction_from_bearings(r, x, x2)
    assert vector_angle(t_hat, t) <= 1e-9


def test_bearing_translation_pure_rotation_degenerate():
    rng = np.random.default_rng(0)
    r = rodrigues((0, 1, 0), 0.3)
    x, x2 = _bearing_pair(r, np.zeros(3), 5, rng)
    with pytest.raises(TranslationDegenerateError):
        translation_direction_from_bearings(r, x, x2)


def test_bearing_translation_error_shrinks_with_pairs():
    sigma = 2e-3
    errs = {2: [], 10: []}
    for seed in range(300):
        rng = np.random.default_rng(seed)
        r = rodrigues(rng.normal(size=3), 0.2)
        t = rng.normal(size=3)
        x, x2 = _bearing_pair(r, t, 10, rng)
        x2 = x2 + sigma * rng.normal(size=x2.shape)
        for n in errs:
            try:
                t_hat = translation_direction_from_bearings(r, x[:n], x2[:n])
            except TranslationDegenerateError:
                continue
            errs[n].append(vector_angle(t_hat, t))
    assert np.median(errs[10]) < np.median(errs[2])


def test_epipolar_constraint_holds():
    rng = np.random.default_rng(4)
    r = rodrigues((1, 1, 0), 0.2)
    t = np.array([0.3, -0.1, 0.2])
    x, x2 = _bearing_pair(r, t, 6, rng)
    e = RelativeMotion(r, t).essential()
    np.testing.assert_allclose(np.einsum("ij,jk,ik->i", x2, e, x), 0, atol=1e-12)


# refinement ----------------------------------------------------------------------------

def test_refine_from_perturbed_start():
    rng = np.random.default_rng(1)
    r = rodrigues((0, 0, 1), 0.5)
    t = np.array([0.4, -1.0, 2.0])
    p = rng.normal(size=(20, 3))
    res = refine_translation(r, t + (0.1, 0, 0), points=(p, p @ r.T + t))
    assert np.linalg.norm(res.t - t) <= 1e-6
    assert res.converged and res.cost <= res.initial_cost


def test_refine_stationary_at_truth():
    r = np.eye(3)
    t = np.array([1.0, 2.0, 3.0])
    p = np.random.default_rng(2).normal(size=(5, 3))
    res = refine_translation(r, t, points=(p, p + t))
    np.testing.assert_allclose(res.t, t, atol=1e-14)
    assert res.iterations == 0


def _orthogonal_planes(r, t):
    pairs = []
    for n, d in [((1, 0, 0), -2.0), ((0, 1, 0), 1.5), ((0, 0, 1), -4.0)]:
        n = np.array(n, float)
        n2 = r @ n
        pairs.append(PlanePair(n, d, n2, d - n2 @ t))  # d' = d - n'.t
    return pairs


@given(rotations, vec3)
def test_three_planes_fix_translation(r, t):
    res = refine_translation(r, np.zeros(3), planes=_orthogonal_planes(r, t))
    assert np.linalg.norm(res.t - t) <= 1e-9


def test_two_planes_are_underdetermined():
    with pytest.raises(RankDeficiencyError):
        refine_translation(np.eye(3), np.zeros(3), planes=_orthogonal_planes(np.eye(3), np.ones(3))[:2])


def test_weights_scale_cost():
    p = np.zeros((1, 3))
    c1 = translation_cost(np.eye(3), (1, 0, 0), points=(p, p))
    c2 = translation_cost(np.eye(3), (1, 0, 0), points=(p, p), weights=Weights(point=4.0))
    assert c1 == 1.0 and c2 == 4.0
