"""Per-frame measurement bundle shared by the simulator, tracker and file I/O."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geom import Pose
from .landmarks import DirectionObservation


@dataclass(frozen=True)
class PlaneObservation:
    """Camera-frame plane ``n_c . p + d_c = 0`` with ``d_c >= 0``."""

    n_c: np.ndarray
    d_c: float


@dataclass(frozen=True)
class FrameObservation:
    """Everything a tracker may read about one frame.

    ``direction_truth`` and ``plane_truth`` hold the generating scene element of
    each direction and plane measurement. They exist for test oracles and are
    never read by estimators. Point ids act as the output of a feature matcher.
    """

    index: int
    timestamp: float
    directions: tuple[DirectionObservation, ...] = ()
    planes: tuple[PlaneObservation, ...] = ()
    point_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    points_c: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    bearings: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    gt_pose: Pose | None = None
    direction_truth: tuple[int, ...] = ()
    plane_truth: tuple[int, ...] = ()

    def with_direction_signs(self, signs) -> "FrameObservation":
        """Copy with direction ``i`` multiplied by ``signs[i]`` and plane normal
        ``j`` by ``signs[len(directions) + j]`` (``d_c`` follows the normal)."""
        signs = list(signs)
        nd = len(self.directions)
        dirs = tuple(
            replace(o, dir_c=o.dir_c * s) for o, s in zip(self.directions, signs[:nd])
        )
        planes = tuple(
            PlaneObservation(p.n_c * s, p.d_c * s) for p, s in zip(self.planes, signs[nd:])
        )
        return replace(self, directions=dirs, planes=planes)

    def to_dict(self) -> dict:
        d = {
            "index": self.index,
            "timestamp": self.timestamp,
            "directions": [
                {"dir_c": o.dir_c.tolist(), "kind": o.kind, "source": o.source}
                for o in self.directions
            ],
            "planes": [{"n_c": p.n_c.tolist(), "d_c": p.d_c} for p in self.planes],
            "point_ids": self.point_ids.tolist(),
            "points_c": self.points_c.tolist(),
            "bearings": self.bearings.tolist(),
            "direction_truth": list(self.direction_truth),
            "plane_truth": list(self.plane_truth),
        }
        if self.gt_pose is not None:
            d["gt_pose"] = {
                "rotation": self.gt_pose.rotation.tolist(),
                "translation": self.gt_pose.translation.tolist(),
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FrameObservation":
        gt = d.get("gt_pose")
        return cls(
            index=int(d["index"]),
            timestamp=float(d["timestamp"]),
            directions=tuple(
                DirectionObservation(np.array(o["dir_c"], dtype=float), o["kind"], o["source"])
                for o in d.get("directions", [])
            ),
            planes=tuple(
                PlaneObservation(np.array(p["n_c"], dtype=float), float(p["d_c"]))
                for p in d.get("planes", [])
            ),
            point_ids=np.array(d.get("point_ids", []), dtype=int),
            points_c=np.array(d.get("points_c", []), dtype=float).reshape(-1, 3),
            bearings=np.array(d.get("bearings", []), dtype=float).reshape(-1, 3),
            gt_pose=None if gt is None else Pose.make(gt["rotation"], gt["translation"]),
            direction_truth=tuple(d.get("direction_truth", [])),
            plane_truth=tuple(d.get("plane_truth", [])),
        )
