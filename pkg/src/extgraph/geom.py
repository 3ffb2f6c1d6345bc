"""Core 3D geometry: orthonormal bases from direction sets and the closed-form
rotation between two such bases.

Vectors are plain ``numpy`` arrays of shape ``(3,)`` and rotations are
``(3, 3)`` arrays. :class:`OrthonormalBasis` and :class:`Pose` are small
immutable wrappers used where the invariants matter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

UNIT_TOL = 1e-9
EXACT_TOL = 1e-12
MIN_SINE = 1e-3  # ~0.057 deg; below this the third axis is noise
ZERO_NORM = 1e-12


class DegenerateGeometryError(ValueError):
    """Raised when a geometric construction has no well-defined answer."""


class RankDeficiencyError(DegenerateGeometryError):
    """A direction set does not span the required number of dimensions.

    ``index`` is the position of the first vector that failed the check.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class NearParallelError(RankDeficiencyError):
    pass


class NonOrthogonalError(DegenerateGeometryError):
    pass


def as_vec3(v) -> np.ndarray:
    if type(v) is np.ndarray and v.shape == (3,) and v.dtype == np.float64:
        arr = v
    else:
        arr = np.asarray(v, dtype=float).reshape(3)
    if not math.isfinite(arr[0] + arr[1] + arr[2]):
        raise ValueError(f"non-finite vector: {arr}")
    return arr


def normalize(v) -> np.ndarray:
    v = as_vec3(v)
    n = np.sqrt(v @ v)
    if n <= ZERO_NORM:
        raise DegenerateGeometryError("cannot normalize a zero-length vector")
    return v / n


def skew(v) -> np.ndarray:
    x, y, z = as_vec3(v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def project(u, v) -> np.ndarray:
    """Orthogonal projection of ``v`` onto the line spanned by ``u``."""
    u = as_vec3(u)
    v = as_vec3(v)
    uu = float(u @ u)
    if np.sqrt(uu) <= ZERO_NORM:
        raise DegenerateGeometryError("projection onto a zero-length vector")
    return (float(u @ v) / uu) * u


@dataclass(frozen=True)
class OrthonormalBasis:
    """Right-handed orthonormal triple; ``matrix`` has the vectors as columns."""

    e0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.column_stack((self.e0, self.e1, self.e2))

    @classmethod
    def from_matrix(cls, m) -> "OrthonormalBasis":
        m = np.asarray(m, dtype=float)
        check_rotation(m)
        return cls(m[:, 0].copy(), m[:, 1].copy(), m[:, 2].copy())

    def validate(self) -> None:
        check_rotation(self.matrix)


def gram_schmidt(v0, v1, v2, min_sine: float = MIN_SINE) -> OrthonormalBasis:
    """Orthonormalize three directions in order.

    ``e0`` is parallel to ``v0`` and ``span(e0, e1) == span(v0, v1)``. When the
    result is left-handed ``e2`` is negated so the basis is a rotation.

    Raises
    ------
    RankDeficiencyError
        If some ``v_m`` makes an angle whose sine is below ``min_sine`` with the
        span of the vectors before it. ``err.index`` names the culprit.
    """
    vs = [as_vec3(v0), as_vec3(v1), as_vec3(v2)]
    es: list[np.ndarray] = []
    for m, v in enumerate(vs):
        norm_v = np.linalg.norm(v)
        if norm_v <= ZERO_NORM:
            raise RankDeficiencyError(f"v{m} has zero length", index=m)
        u = v.copy()
        for e in es:
            u = u - project(e, u)
        norm_u = np.linalg.norm(u)
        if norm_u / norm_v < min_sine:
            raise RankDeficiencyError(
                f"v{m} lies within {np.degrees(np.arcsin(min(norm_u / norm_v, 1.0))):.3g} deg "
                f"of span(v0..v{m - 1})",
                index=m,
            )
        es.append(u / norm_u)
    if np.linalg.det(np.column_stack(es)) < 0:
        es[2] = -es[2]
    return OrthonormalBasis(*es)


def complete_basis(v0, v1, min_sine: float = MIN_SINE) -> OrthonormalBasis:
    """Basis from two non-parallel directions, third axis from their cross product."""
    v0 = as_vec3(v0)
    v1 = as_vec3(v1)
    n0, n1 = np.linalg.norm(v0), np.linalg.norm(v1)
    if n0 <= ZERO_NORM or n1 <= ZERO_NORM:
        raise NearParallelError("zero-length direction", index=0 if n0 <= ZERO_NORM else 1)
    sine = np.linalg.norm(np.cross(v0, v1)) / (n0 * n1)
    if sine < min_sine:
        raise NearParallelError(
            f"directions are {np.degrees(np.arcsin(min(sine, 1.0))):.3g} deg apart", index=1
        )
    return gram_schmidt(v0, v1, np.cross(v0, v1), min_sine=min_sine)


def rotation_from_bases(bj: OrthonormalBasis, bk: OrthonormalBasis) -> np.ndarray:
    """Rotation taking frame-k coordinates to frame-j coordinates: ``E_j E_k^T``."""
    return bj.matrix @ bk.matrix.T


def rotation_orthogonal_case(vj, vk, tol: float = 1e-6) -> np.ndarray:
    """Rotation between two mutually orthogonal direction triples.

    Each triple is only normalized column-wise; no projection is needed because
    the cross terms vanish. A left-handed triple has its third column negated,
    matching :func:`gram_schmidt`.
    """

    def _columns(vs, label):
        vs = [as_vec3(v) for v in vs]
        if len(vs) != 3:
            raise ValueError(f"{label}: expected three vectors")
        cols = [normalize(v) for v in vs]
        for a in range(3):
            for b in range(a + 1, 3):
                if abs(cols[a] @ cols[b]) > tol:
                    raise NonOrthogonalError(
                        f"{label}: v{a}.v{b} = {cols[a] @ cols[b]:.3g} exceeds {tol:g}"
                    )
        m = np.column_stack(cols)
        if np.linalg.det(m) < 0:
            m[:, 2] = -m[:, 2]
        return m

    return _columns(vj, "vj") @ _columns(vk, "vk").T


def check_rotation(r, tol: float = UNIT_TOL) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    if not np.allclose(r.T @ r, np.eye(3), atol=tol, rtol=0):
        raise ValueError("matrix is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise ValueError("rotation determinant is not +1")
    return r


def angular_distance(r1, r2) -> float:
    """Geodesic angle in radians between two rotations, in ``[0, pi]``.

    Computed with ``atan2(sin, cos)`` instead of ``arccos`` of the trace so that
    tiny angles keep full precision.
    """
    d = np.asarray(r1, dtype=float).T @ np.asarray(r2, dtype=float)
    cos = (np.trace(d) - 1.0) / 2.0
    sin = 0.5 * np.linalg.norm([d[2, 1] - d[1, 2], d[0, 2] - d[2, 0], d[1, 0] - d[0, 1]])
    return float(np.arctan2(sin, np.clip(cos, -1.0, 1.0)))


def rotation_angle(r) -> float:
    return angular_distance(np.eye(3), r)


def axis_angle(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about ``axis`` by ``angle`` radians."""
    k = normalize(axis)
    kx = skew(k)
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def rot_x(angle: float) -> np.ndarray:
    return axis_angle((1.0, 0.0, 0.0), angle)


def rot_y(angle: float) -> np.ndarray:
    return axis_angle((0.0, 1.0, 0.0), angle)


def rot_z(angle: float) -> np.ndarray:
    return axis_angle((0.0, 0.0, 1.0), angle)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation (via a random unit quaternion)."""
    q = rng.normal(size=4)
    return quaternion_to_rotation(q / np.linalg.norm(q))


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def canonical_quaternion(q) -> np.ndarray:
    """Unit quaternion ``(qw, qx, qy, qz)`` with ``qw >= 0``.

    When ``qw`` is zero the first non-zero vector component is made positive.
    """
    q = np.asarray(q, dtype=float).reshape(4)
    q = q / np.linalg.norm(q)
    for c in q:
        if abs(c) > UNIT_TOL:
            if c < 0:
                q = -q
            break
    return q + 0.0


def rotation_to_quaternion(r) -> np.ndarray:
    """Rotation matrix to canonical ``(qw, qx, qy, qz)``."""
    x, y, z, w = _ScipyRotation.from_matrix(check_rotation(r)).as_quat()
    return canonical_quaternion((w, x, y, z))


def quaternion_to_rotation(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float).reshape(4)
    return _ScipyRotation.from_quat((x, y, z, w)).as_matrix()


def orthonormalize_rotation(r) -> np.ndarray:
    """Nearest rotation in the Frobenius sense."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag((1.0, 1.0, d)) @ vt


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping local coordinates into the parent frame:
    ``p_parent = rotation @ p_local + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def make(cls, rotation, translation=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(np.array(rotation, dtype=float), as_vec3(translation).copy())

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -(rt @ self.translation))

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m
