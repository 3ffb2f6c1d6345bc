"""Direction and plane landmarks: sign canonicalization, association and fusion.

Vanishing directions and plane normals are only defined up to sign. Every
stored direction is kept in a canonical sign (first significant component
positive) and each association reports which sign the measurement had.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Literal, Sequence

import numpy as np

from .geom import MIN_SINE, as_vec3, normalize

Kind = Literal["vanishing", "plane-normal"]
Source = Literal["line-bundle", "lone-line", "plane"]

SIGN_EPS = 1e-9
DEFAULT_TH_VD = 1.0 - np.cos(np.radians(5.0))
PD_LIFETIME = 10  # keyframes


def canonicalize(v) -> tuple[np.ndarray, int]:
    """Return ``(sign * v, sign)`` with the first component above ``SIGN_EPS``
    in magnitude made positive."""
    v = as_vec3(v)
    for c in v:
        if abs(c) > SIGN_EPS:
            sign = 1 if c > 0 else -1
            return v * sign + 0.0, sign
    return v + 0.0, 1


def to_world(dir_c, r_wc) -> np.ndarray:
    """Rotate a camera-frame direction into the world frame. Translation plays no part."""
    return np.asarray(r_wc, dtype=float) @ as_vec3(dir_c)


def angle_between_lines(a, b) -> float:
    """Unsigned angle in ``[0, pi/2]`` between the lines spanned by ``a`` and ``b``."""
    a = as_vec3(a)
    b = as_vec3(b)
    c = (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])
    return math.atan2(math.sqrt(c[0] ** 2 + c[1] ** 2 + c[2] ** 2), abs(float(a @ b)))


def match_angle(th_vd: float) -> float:
    """Largest angle accepted by an association threshold on the cosine."""
    return float(np.arccos(1.0 - th_vd))


@dataclass(frozen=True)
class DirectionObservation:
    dir_c: np.ndarray
    kind: Kind = "vanishing"
    source: Source = "line-bundle"


@dataclass(frozen=True)
class DirectionLandmark:
    id: int
    dir_w: np.ndarray
    support_count: int = 1
    kind: Kind = "vanishing"

    @classmethod
    def create(cls, id: int, dir_w, kind: Kind = "vanishing", support_count: int = 1):
        d, _ = canonicalize(normalize(dir_w))
        return cls(id, d, support_count, kind)


@dataclass(frozen=True)
class PotentialDirection:
    id: int
    dir_w: np.ndarray
    born_at: int
    dir_c: np.ndarray | None = None  # measurement in the birth keyframe, same sign as dir_w

    @classmethod
    def create(cls, id: int, dir_w, born_at: int, dir_c=None):
        d, sign = canonicalize(normalize(dir_w))
        c = None if dir_c is None else sign * as_vec3(dir_c)
        return cls(id, d, born_at, c)


@dataclass(frozen=True)
class PlaneLandmark:
    """Plane ``n . p + d = 0`` in world coordinates.

    ``direction_id`` links the plane to the direction landmark of its normal;
    parallel planes share that landmark.
    """

    id: int
    n_w: np.ndarray
    d_w: float
    direction_id: int | None = None


@dataclass(frozen=True)
class MatchResult:
    landmark_id: int
    sign: int
    residual: float  # radians


def match_direction(
    dir_w,
    landmarks: Iterable[DirectionLandmark | PotentialDirection],
    th_vd: float = DEFAULT_TH_VD,
) -> MatchResult | None:
    """Associate a world-frame direction with the closest stored direction.

    A landmark qualifies when ``|cos - 1| < th_vd`` (same sign) or
    ``|cos + 1| < th_vd`` (opposite sign). The qualifying landmark with the
    smallest angular residual wins; ties keep the earliest landmark.
    """
    if not 0.0 < th_vd < 1.0:
        raise ValueError(f"th_vd must lie in (0, 1), got {th_vd}")
    v = normalize(dir_w)
    best: MatchResult | None = None
    for lm in landmarks:
        c = float(v @ lm.dir_w)
        if abs(c - 1.0) < th_vd:
            sign = 1
        elif abs(c + 1.0) < th_vd:
            sign = -1
        else:
            continue
        residual = angle_between_lines(v, lm.dir_w)
        if best is None or residual < best.residual:
            best = MatchResult(lm.id, sign, residual)
    return best


def fuse(landmark: DirectionLandmark, dir_w, sign: int) -> DirectionLandmark:
    """Merge a matched measurement into a landmark by weighted spherical mean.

    The result is re-canonicalized. Near an axis a small leading component can
    change sign under noise, so the fused direction may come back negated;
    callers holding sign-aligned copies must check ``new.dir_w @ old.dir_w``.
    """
    merged = landmark.support_count * landmark.dir_w + sign * normalize(dir_w)
    d, _ = canonicalize(normalize(merged))
    return replace(landmark, dir_w=d, support_count=landmark.support_count + 1)


@dataclass(frozen=True)
class DirectionGroup:
    direction: np.ndarray
    members: tuple[int, ...]


@dataclass(frozen=True)
class ClusterResult:
    groups: list[DirectionGroup]
    unclustered: list[int]


def _as_direction_array(samples) -> np.ndarray:
    rows = [s.dir_c if isinstance(s, DirectionObservation) else s for s in samples]
    if not rows:
        return np.zeros((0, 3))
    arr = np.asarray(rows, dtype=float).reshape(-1, 3)
    return arr / np.linalg.norm(arr, axis=1, keepdims=True)


def _signed_mean(dirs: np.ndarray, idx: np.ndarray, ref: np.ndarray) -> np.ndarray:
    sub = dirs[idx]
    signs = np.where(sub @ ref < 0, -1.0, 1.0)
    return normalize((signs[:, None] * sub).sum(axis=0))


def cluster_directions(
    samples: Sequence,
    angle_tol: float,
    iterations: int = 100,
    seed=0,
    max_refinements: int = 20,
) -> ClusterResult:
    """Greedy RANSAC grouping of sign-ambiguous 3D directions.

    Each round draws single-sample hypotheses, keeps the one with most samples
    within ``angle_tol`` (as lines, sign ignored), then refines the
    representative as the sign-aligned mean of its inliers until the inlier set
    is stable. Groups of one are reported as unclustered. When ``iterations``
    covers every remaining sample, all of them are tried in order and the
    result does not depend on ``seed``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    dirs = _as_direction_array(samples)
    n = len(dirs)
    if n == 0:
        return ClusterResult([], [])
    rng = np.random.default_rng(seed)
    cos_tol = np.cos(angle_tol)
    remaining = np.arange(n)
    groups: list[DirectionGroup] = []
    unclustered: list[int] = []

    def inliers_of(ref, pool):
        return pool[np.abs(dirs[pool] @ ref) >= cos_tol]

    while len(remaining) >= 2:
        if iterations >= len(remaining):
            hypotheses = remaining
        else:
            hypotheses = rng.choice(remaining, size=iterations, replace=False)
        hits = np.abs(dirs[hypotheses] @ dirs[remaining].T) >= cos_tol
        k = int(np.argmax(hits.sum(axis=1)))  # first hypothesis among the best
        ref, members = dirs[hypotheses[k]], remaining[hits[k]]
        if len(members) < 2:
            break
        rep = _signed_mean(dirs, members, ref)
        for _ in range(max_refinements):
            updated = inliers_of(rep, remaining)
            if len(updated) == 0:
                break
            if np.array_equal(updated, members):
                break
            members = updated
            rep = _signed_mean(dirs, members, rep)
        members = inliers_of(rep, members)  # enforce the tolerance if refinement stopped early
        if len(members) < 2:
            unclustered.extend(int(i) for i in members)
            remaining = remaining[~np.isin(remaining, members)]
            continue
        rep, _ = canonicalize(rep)
        groups.append(DirectionGroup(rep, tuple(int(i) for i in members)))
        remaining = remaining[~np.isin(remaining, members)]
    unclustered.extend(int(i) for i in remaining)
    return ClusterResult(groups, sorted(unclustered))


def spans_two_directions(dirs: Sequence, min_sine: float = MIN_SINE) -> bool:
    """True when at least two of ``dirs`` are non-parallel."""
    arr = _as_direction_array(dirs)
    for i in range(len(arr)):
        for j in range(i + 1, len(arr)):
            if np.linalg.norm(np.cross(arr[i], arr[j])) >= min_sine:
                return True
    return False


def world_plane(n_c, d_c: float, r_wc, t_wc) -> tuple[np.ndarray, float]:
    """Transfer a camera-frame plane ``n_c . p + d_c = 0`` to the world frame."""
    n_w = np.asarray(r_wc, dtype=float) @ normalize(n_c)
    return n_w, float(d_c - n_w @ as_vec3(t_wc))


def camera_plane(n_w, d_w: float, r_wc, t_wc) -> tuple[np.ndarray, float]:
    """World plane expressed in a camera frame, oriented so that ``d >= 0``."""
    r_wc = np.asarray(r_wc, dtype=float)
    n_c = r_wc.T @ normalize(n_w)
    d_c = float(d_w + normalize(n_w) @ as_vec3(t_wc))
    if d_c < 0:
        n_c, d_c = -n_c, -d_c
    return n_c + 0.0, d_c
