"""Trajectory metrics (ATE, ARE, RPE), rigid alignment and TUM file I/O."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .geom import (
    DegenerateGeometryError,
    Pose,
    angular_distance,
    check_rotation,
    quaternion_to_rotation,
    rotation_to_quaternion,
)


class TrajectoryFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class AssociationError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    stamps: np.ndarray  # (N,)
    rotations: np.ndarray  # (N, 3, 3)
    positions: np.ndarray  # (N, 3)

    def __post_init__(self):
        if len(self.stamps) != len(self.rotations) or len(self.stamps) != len(self.positions):
            raise ValueError("stamps, rotations and positions must have equal length")
        if np.any(np.diff(self.stamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    @classmethod
    def from_poses(cls, stamps: Sequence[float], poses: Sequence[Pose]) -> "Trajectory":
        return cls(
            np.asarray(stamps, dtype=float),
            np.array([p.rotation for p in poses]).reshape(-1, 3, 3),
            np.array([p.translation for p in poses]).reshape(-1, 3),
        )

    def __len__(self) -> int:
        return len(self.stamps)

    def pose(self, i: int) -> Pose:
        return Pose(self.rotations[i], self.positions[i])

    def transformed(self, g: Pose) -> "Trajectory":
        """Apply ``g`` on the left of every pose."""
        return Trajectory(
            self.stamps.copy(),
            np.einsum("ij,njk->nik", g.rotation, self.rotations),
            self.positions @ g.rotation.T + g.translation,
        )


@dataclass(frozen=True)
class TrajectoryPairs:
    """Time-associated estimate/ground-truth poses."""

    stamps: np.ndarray
    est: Trajectory
    gt: Trajectory

    def __len__(self) -> int:
        return len(self.stamps)


def associate(est: Trajectory, gt: Trajectory, max_dt: float = 0.02) -> TrajectoryPairs:
    """Greedy nearest-timestamp pairing; each pose is used at most once."""
    if len(est) == 0 or len(gt) == 0:
        raise AssociationError("cannot associate an empty trajectory")
    dt = np.abs(est.stamps[:, None] - gt.stamps[None, :])
    cand = np.argwhere(dt <= max_dt)
    order = np.argsort(dt[cand[:, 0], cand[:, 1]], kind="stable")
    used_e, used_g, pairs = set(), set(), []
    for i, j in cand[order]:
        if i in used_e or j in used_g:
            continue
        used_e.add(i)
        used_g.add(j)
        pairs.append((i, j))
    if not pairs:
        raise AssociationError(f"no timestamps agree within max_dt={max_dt}")
    pairs.sort()
    ie = np.array([p[0] for p in pairs])
    ig = np.array([p[1] for p in pairs])
    sub = lambda t, idx: Trajectory(t.stamps[idx], t.rotations[idx], t.positions[idx])  # noqa: E731
    return TrajectoryPairs(est.stamps[ie], sub(est, ie), sub(gt, ig))


def align_se3(est_positions, gt_positions) -> Pose:
    """Rigid ``g`` minimizing ``sum |gt_i - (R est_i + t)|^2`` (no scale)."""
    p = np.asarray(est_positions, dtype=float).reshape(-1, 3)
    q = np.asarray(gt_positions, dtype=float).reshape(-1, 3)
    if len(p) < 3:
        raise DegenerateGeometryError("alignment needs at least 3 positions")
    mp, mq = p.mean(axis=0), q.mean(axis=0)
    a, b = p - mp, q - mq
    s = np.linalg.svd(a, compute_uv=False)
    if s[1] <= 1e-9 * max(s[0], 1e-12):
        raise DegenerateGeometryError("positions are collinear; rotation about the line is free")
    u, _, vt = np.linalg.svd(b.T @ a)
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    r = u @ np.diag((1.0, 1.0, d)) @ vt
    return Pose(r, mq - r @ mp)


def _alignment(pairs: TrajectoryPairs, alignment: Pose | None) -> Pose:
    return align_se3(pairs.est.positions, pairs.gt.positions) if alignment is None else alignment


def position_errors(pairs: TrajectoryPairs, alignment: Pose | None = None) -> np.ndarray:
    g = _alignment(pairs, alignment)
    aligned = pairs.est.positions @ g.rotation.T + g.translation
    return np.linalg.norm(aligned - pairs.gt.positions, axis=1)


def ate_rmse(pairs: TrajectoryPairs, alignment: Pose | None = None) -> float:
    """Position RMSE after rigid alignment (computed when not given)."""
    e = position_errors(pairs, alignment)
    return float(np.sqrt(np.mean(e**2)))


AreMode = Literal["align", "first"]


def rotation_errors(pairs: TrajectoryPairs, alignment: Pose | None = None,
                    mode: AreMode = "align") -> np.ndarray:
    """Per-pose rotation error in degrees.

    ``align`` pre-multiplies each estimate by the trajectory alignment
    rotation; ``first`` anchors on the first pair instead.
    """
    if mode == "first":
        ra = pairs.gt.rotations[0] @ pairs.est.rotations[0].T
    else:
        ra = _alignment(pairs, alignment).rotation
    return np.degrees([
        angular_distance(ra @ re, rg) for re, rg in zip(pairs.est.rotations, pairs.gt.rotations)
    ])


def are_mean(pairs: TrajectoryPairs, alignment: Pose | None = None, mode: AreMode = "align") -> float:
    return float(np.mean(rotation_errors(pairs, alignment, mode)))


def are_rmse(pairs: TrajectoryPairs, alignment: Pose | None = None, mode: AreMode = "align") -> float:
    return float(np.sqrt(np.mean(rotation_errors(pairs, alignment, mode) ** 2)))


def relative_errors(pairs: TrajectoryPairs, delta: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Per-window translation (m) and rotation (deg) errors of relative motions."""
    if delta < 1:
        raise ValueError("delta must be >= 1")
    n = len(pairs)
    if n <= delta:
        raise ValueError(f"need more than {delta} pairs for delta={delta}, got {n}")
    te, re = [], []
    for i in range(n - delta):
        q = pairs.gt.pose(i).inverse() @ pairs.gt.pose(i + delta)
        p = pairs.est.pose(i).inverse() @ pairs.est.pose(i + delta)
        e = q.inverse() @ p
        te.append(np.linalg.norm(e.translation))
        re.append(np.degrees(angular_distance(np.eye(3), e.rotation)))
    return np.array(te), np.array(re)


def rpe(pairs: TrajectoryPairs, delta: int = 1) -> tuple[float, float]:
    """RMSE of relative-motion translation (m) and rotation (deg) errors."""
    te, re = relative_errors(pairs, delta)
    return float(np.sqrt(np.mean(te**2))), float(np.sqrt(np.mean(re**2)))


@dataclass
class MetricReport:
    ate_rmse: float
    are_mean: float
    are_rmse: float
    are_mean_first: float
    rpe: dict[int, tuple[float, float]]
    pairs: int
    stamps: list[float] = field(repr=False, default_factory=list)
    position_errors: list[float] = field(repr=False, default_factory=list)
    rotation_errors: list[float] = field(repr=False, default_factory=list)

    def summary(self) -> dict:
        d = asdict(self)
        for k in ("stamps", "position_errors", "rotation_errors"):
            d.pop(k)
        d["rpe"] = {str(k): {"translation_m": v[0], "rotation_deg": v[1]} for k, v in self.rpe.items()}
        return d

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    def frames_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp", "position_error_m", "rotation_error_deg"])
        for row in zip(self.stamps, self.position_errors, self.rotation_errors):
            w.writerow([f"{row[0]:.6f}", repr(float(row[1])), repr(float(row[2]))])
        return buf.getvalue()


def evaluate(est: Trajectory, gt: Trajectory, max_dt: float = 0.02,
             deltas: Sequence[int] = (1,)) -> MetricReport:
    pairs = associate(est, gt, max_dt)
    g = align_se3(pairs.est.positions, pairs.gt.positions)
    pos = position_errors(pairs, g)
    rot = rotation_errors(pairs, g)
    rpes = {d: rpe(pairs, d) for d in deltas if len(pairs) > d}
    return MetricReport(
        ate_rmse=float(np.sqrt(np.mean(pos**2))),
        are_mean=float(np.mean(rot)),
        are_rmse=float(np.sqrt(np.mean(rot**2))),
        are_mean_first=are_mean(pairs, mode="first"),
        rpe=rpes,
        pairs=len(pairs),
        stamps=pairs.stamps.tolist(),
        position_errors=pos.tolist(),
        rotation_errors=rot.tolist(),
    )


def _fmt(x: float) -> str:
    return np.format_float_positional(float(x) + 0.0, trim="-")


def format_tum(traj: Trajectory) -> str:
    lines = []
    for s, r, p in zip(traj.stamps, traj.rotations, traj.positions):
        qw, qx, qy, qz = rotation_to_quaternion(r)
        lines.append(" ".join([f"{s:.6f}", *(_fmt(v) for v in (*p, qx, qy, qz, qw))]))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_tum(text: str) -> Trajectory:
    stamps, rots, pos = [], [], []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.replace(",", " ").split()
        if len(fields) != 8:
            raise TrajectoryFormatError(f"expected 8 fields, got {len(fields)}", n)
        try:
            vals = [float(v) for v in fields]
        except ValueError as exc:
            raise TrajectoryFormatError(str(exc), n) from None
        q = np.array([vals[7], vals[4], vals[5], vals[6]])
        if not np.all(np.isfinite(vals)) or np.linalg.norm(q) < 1e-12:
            raise TrajectoryFormatError("non-finite value or zero quaternion", n)
        if stamps and vals[0] <= stamps[-1]:
            raise TrajectoryFormatError("timestamps must be strictly increasing", n)
        stamps.append(vals[0])
        pos.append(vals[1:4])
        rots.append(quaternion_to_rotation(q / np.linalg.norm(q)))
    return Trajectory(np.array(stamps), np.array(rots).reshape(-1, 3, 3), np.array(pos).reshape(-1, 3))


def read_tum(path) -> Trajectory:
    return parse_tum(Path(path).read_text())


def write_tum(path, traj: Trajectory) -> None:
    Path(path).write_text(format_tum(traj))


__all__ = [
    "AssociationError",
    "MetricReport",
    "Trajectory",
    "TrajectoryFormatError",
    "TrajectoryPairs",
    "align_se3",
    "are_mean",
    "are_rmse",
    "associate",
    "ate_rmse",
    "check_rotation",
    "evaluate",
    "format_tum",
    "parse_tum",
    "read_tum",
    "relative_errors",
    "rotation_errors",
    "rpe",
    "write_tum",
]
