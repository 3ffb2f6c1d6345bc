"""Decoupled pose solvers.

Rotation comes from matched direction sets alone. Translation is solved
afterwards with the rotation held fixed, either in closed form from 3D point
pairs, up to scale from two bearing pairs, or by damped least squares over
point, plane and line residuals.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geom import (
    MIN_SINE,
    RankDeficiencyError,
    DegenerateGeometryError,
    as_vec3,
    complete_basis,
    gram_schmidt,
    normalize,
    rotation_from_bases,
    skew,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RelativeMotion:
    """``P' = R P + t``."""

    R: np.ndarray
    t: np.ndarray

    def essential(self) -> np.ndarray:
        return skew(self.t) @ self.R


def _pairs_array(matches) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw (unnormalized) direction arrays and weights; zero vectors rejected."""
    dj, dk, w = [], [], []
    for m in matches:
        if len(m) == 2:
            a, b = m
            weight = 1.0
        else:
            a, b, weight = m
        normalize(a), normalize(b)  # validation only
        dj.append(as_vec3(a))
        dk.append(as_vec3(b))
        w.append(float(weight))
    return np.array(dj).reshape(-1, 3), np.array(dk).reshape(-1, 3), np.array(w)


def procrustes_rotation(dj, dk, weights=None) -> np.ndarray:
    """Weighted orthogonal Procrustes: rotation ``R`` minimizing
    ``sum w_i |dj_i - R dk_i|^2`` with ``det R = +1``."""
    dj = np.asarray(dj, dtype=float).reshape(-1, 3)
    dk = np.asarray(dk, dtype=float).reshape(-1, 3)
    w = np.ones(len(dj)) if weights is None else np.asarray(weights, dtype=float)
    h = (dj * w[:, None]).T @ dk
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    return u @ np.diag((1.0, 1.0, d)) @ vt


def rotation_from_matches(matches: Sequence, min_sine: float = MIN_SINE) -> np.ndarray:
    """Rotation ``R`` with ``dir_j = R dir_k`` from matched direction pairs.

    ``matches`` holds ``(dir_j, dir_k)`` or ``(dir_j, dir_k, weight)`` tuples.
    Two pairs use the cross-product completed basis on both sides; three
    independent pairs use Gram-Schmidt in the given order; anything else
    (more than three pairs, or three pairs that are not independent) falls back
    to weighted Procrustes, which needs two non-parallel directions.
    """
    dj, dk, w = _pairs_array(matches)
    n = len(dj)
    if n < 2:
        raise RankDeficiencyError(f"need at least 2 matched directions, got {n}", index=n)
    if n == 2:
        return rotation_from_bases(
            complete_basis(dj[0], dj[1], min_sine), complete_basis(dk[0], dk[1], min_sine)
        )
    if n == 3:
        try:
            return rotation_from_bases(
                gram_schmidt(*dj, min_sine=min_sine), gram_schmidt(*dk, min_sine=min_sine)
            )
        except RankDeficiencyError:
            pass
    # the basis paths above are scale-invariant; Procrustes needs unit vectors
    dj = dj / np.linalg.norm(dj, axis=1, keepdims=True)
    dk = dk / np.linalg.norm(dk, axis=1, keepdims=True)
    if not _has_two_independent(dj, min_sine):
        raise RankDeficiencyError("fewer than 2 independent directions", index=1)
    return procrustes_rotation(dj, dk, w)


def _has_two_independent(d: np.ndarray, min_sine: float) -> bool:
    for i in range(len(d)):
        if np.any(np.linalg.norm(np.cross(d[i], d[i + 1 :]), axis=1) >= min_sine):
            return True
    return False


def rotation_from_points(p, p2) -> np.ndarray:
    """Kabsch rotation between centred 3D point sets with ``p2 ~ R p + t``."""
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    p2 = np.asarray(p2, dtype=float).reshape(-1, 3)
    if len(p) < 3:
        raise RankDeficiencyError("need at least 3 point correspondences", index=len(p))
    a = p - p.mean(axis=0)
    b = p2 - p2.mean(axis=0)
    s = np.linalg.svd(a, compute_uv=False)
    if s[1] <= 1e-9 * max(s[0], 1.0):
        raise RankDeficiencyError("point correspondences are collinear")
    return procrustes_rotation(b, a)


def translation_from_points(R, p, p2) -> np.ndarray:
    """Least-squares ``t`` for ``p2 = R p + t``: the mean of ``p2 - R p``."""
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    p2 = np.asarray(p2, dtype=float).reshape(-1, 3)
    if len(p) == 0 or len(p) != len(p2):
        raise ValueError("need one or more equal-length correspondence lists")
    return (p2 - p @ np.asarray(R, dtype=float).T).mean(axis=0)


class TranslationDegenerateError(DegenerateGeometryError):
    pass


def translation_direction_from_bearings(R, x, x2, tol: float = 1e-9) -> np.ndarray:
    """Unit translation direction from bearing pairs with known rotation.

    Each pair gives one linear constraint ``t . ((R x) x x') = 0``. The
    solution is the null vector of the stacked rows, signed so that the
    triangulated depths are positive in both views.

    Raises
    ------
    TranslationDegenerateError
        When the rows do not span two dimensions, e.g. under pure rotation
        where every row vanishes.
    """
    R = np.asarray(R, dtype=float)
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    x2 = np.asarray(x2, dtype=float).reshape(-1, 3)
    if len(x) < 2 or len(x) != len(x2):
        raise ValueError("need at least 2 bearing pairs")
    rx = x @ R.T
    rows = np.cross(rx, x2)
    _, s, vt = np.linalg.svd(rows)
    if s[1] <= tol:
        raise TranslationDegenerateError(
            f"epipolar rows are rank deficient (singular values {s[0]:.3g}, {s[1]:.3g})"
        )
    t = vt[-1]
    # alpha x' = gamma R x + t  ->  [R x, -x'] [gamma, alpha]^T = -t
    votes = 0
    for a, b in zip(rx, x2):
        depth, *_ = np.linalg.lstsq(np.column_stack((a, -b)), -t, rcond=None)
        votes += int(np.sign(depth[0]) + np.sign(depth[1]))
    return normalize(-t if votes < 0 else t)


@dataclass(frozen=True)
class PlanePair:
    """Plane ``(n, d)`` in the source frame and its measurement ``(n2, d2)`` in
    the target frame, both in ``n . p + d = 0`` form."""

    n: np.ndarray
    d: float
    n2: np.ndarray
    d2: float


@dataclass(frozen=True)
class LinePair:
    """Source-frame segment endpoints matched to a target-frame 3D line."""

    p1: np.ndarray
    p2: np.ndarray
    point: np.ndarray
    direction: np.ndarray


@dataclass
class Weights:
    """Information weights per residual class (inverse variances)."""

    point: float = 1.0
    plane: float = 1.0
    line: float = 1.0


@dataclass(frozen=True)
class TranslationResult:
    t: np.ndarray
    cost: float
    initial_cost: float
    iterations: int
    converged: bool


def _stack(R, points, planes, lines, weights: Weights):
    """Linear residual model ``r(t) = b + J t``, already scaled by sqrt weights."""
    bs, js = [], []
    if points is not None:
        p, p2 = points
        p = np.asarray(p, dtype=float).reshape(-1, 3)
        p2 = np.asarray(p2, dtype=float).reshape(-1, 3)
        if len(p):
            s = np.sqrt(weights.point)
            bs.append(s * (p2 - p @ R.T).ravel())
            js.append(np.tile(-s * np.eye(3), (len(p), 1)))
    for pl in planes or ():
        s = np.sqrt(weights.plane)
        n2 = normalize(pl.n2)
        rn = R @ normalize(pl.n)
        n, d = pl.n, pl.d
        if n2 @ rn < 0:  # opposite orientation conventions
            rn, n, d = -rn, -np.asarray(n), -d
        # d2 = d - n2 . t
        bs.append(s * np.array([1.0 - n2 @ rn, pl.d2 - d]))
        js.append(s * np.vstack((np.zeros(3), n2)))
    for ln in lines or ():
        s = np.sqrt(weights.line)
        u = normalize(ln.direction)
        proj = np.eye(3) - np.outer(u, u)
        for e in (ln.p1, ln.p2):
            bs.append(s * proj @ (R @ as_vec3(e) - as_vec3(ln.point)))
            js.append(s * proj)
    if not bs:
        return np.zeros(0), np.zeros((0, 3))
    return np.concatenate(bs), np.vstack(js)


def translation_cost(R, t, points=None, planes=None, lines=None, weights: Weights | None = None) -> float:
    b, j = _stack(np.asarray(R, dtype=float), points, planes, lines, weights or Weights())
    r = b + j @ as_vec3(t)
    return float(r @ r)


def refine_translation(
    R,
    t0,
    points=None,
    planes: Sequence[PlanePair] | None = None,
    lines: Sequence[LinePair] | None = None,
    weights: Weights | None = None,
    max_iterations: int = 50,
    damping: float = 1e-4,
    step_tol: float = 1e-10,
) -> TranslationResult:
    """Levenberg-Marquardt over translation with the rotation fixed.

    Point residual ``p2 - R p - t``; plane residual
    ``(1 - n2 . R n, d2 - (d - n2 . t))``; line residual is the perpendicular
    offset of each transformed endpoint from the target line. Damping grows
    x10 on a rejected step and shrinks /3 on an accepted one.

    Raises
    ------
    RankDeficiencyError
        When the stacked residuals do not constrain all three axes.
    """
    R = np.asarray(R, dtype=float)
    weights = weights or Weights()
    b, jac = _stack(R, points, planes, lines, weights)
    if len(b) == 0:
        raise RankDeficiencyError("no residuals supplied", index=0)
    jtj = jac.T @ jac
    eig = np.linalg.eigvalsh(jtj)
    if eig[0] <= 1e-9 * max(eig[-1], 1e-300):
        raise RankDeficiencyError("residuals leave translation under-determined")

    def cost_of(t):
        r = b + jac @ t
        return float(r @ r)

    t = as_vec3(t0).copy()
    cost = initial = cost_of(t)
    lam = damping
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        g = jac.T @ (b + jac @ t)
        step = -np.linalg.solve(jtj + lam * np.diag(np.diag(jtj)), g)
        if np.linalg.norm(step) < step_tol:
            converged = True
            it -= 1
            break
        trial = cost_of(t + step)
        if trial < cost:
            t, cost = t + step, trial
            lam /= 3.0
        else:
            lam *= 10.0
    else:
        log.debug("refine_translation stopped at max_iterations with cost %.3g", cost)
    return TranslationResult(t, cost, initial, it, converged)
