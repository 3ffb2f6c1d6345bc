"""Frame-by-frame tracking on top of the extensibility graph.

Rotation is taken from the keyframe that shares most direction landmarks with
the current frame (anchor first on ties), composed with that keyframe's pose.
Translation is then recovered with the rotation held fixed, from point
correspondences with the most recent overlapping frame and from matched plane
landmarks. The ``chain`` reference mode replaces the keyframe lookup with the
previous frame, the usual frame-to-frame baseline.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np

from .geom import DegenerateGeometryError, Pose
from .graph import (
    EGraph,
    FrameAssociation,
    FrameStats,
    init_graph,
    insert_keyframe,
    should_insert_keyframe,
)
from .landmarks import DEFAULT_TH_VD, spans_two_directions
from .observations import FrameObservation
from .pose import (
    PlanePair,
    Weights,
    refine_translation,
    rotation_from_matches,
    rotation_from_points,
    translation_from_points,
)

log = logging.getLogger(__name__)

RotationSource = Literal["anchor", "egraph", "chain", "points", "hold"]
TranslationSource = Literal["anchor", "points", "refined", "planes", "hold"]


@dataclass
class TrackerConfig:
    th_vd: float = DEFAULT_TH_VD
    reference: Literal["egraph", "chain"] = "egraph"
    keyframe_max_gap: int = 20
    keyframe_min_ratio: float = 0.85
    every_frame_keyframe: bool = False
    min_point_overlap: int = 2
    refine: bool = True
    weights: Weights = field(default_factory=Weights)
    plane_distance_tol: float = 0.2


@dataclass(frozen=True)
class FrameResult:
    index: int
    timestamp: float
    pose: Pose
    rotation_source: RotationSource
    translation_source: TranslationSource
    reference: int | None = None
    keyframe: int | None = None
    failure: str | None = None
    depth: int = 0  # noisy rotation estimates composed between this frame and the anchor


@dataclass
class _Previous:
    frame: FrameObservation
    pose: Pose
    matched: dict[int, np.ndarray]


def _shared_points(ids_a, ids_b):
    common, ia, ib = np.intersect1d(ids_a, ids_b, return_indices=True)
    return common, ia, ib


def _reference_keyframe(graph: EGraph, matched: dict[int, np.ndarray]):
    """Keyframe with the most shared, non-degenerate landmarks; lowest id on ties."""
    best, best_shared = None, ()
    for kf in graph.keyframes.values():
        shared = tuple(sorted(kf.directions.keys() & matched.keys()))
        if len(shared) < 2 or len(shared) <= len(best_shared):
            continue
        if not spans_two_directions([kf.directions[i] for i in shared]):
            continue
        best, best_shared = kf, shared
    return best, best_shared


def track_frame(graph: EGraph, frame: FrameObservation, previous: _Previous,
                config: TrackerConfig | None = None,
                recent: Iterable[_Previous] = ()) -> tuple[FrameResult, FrameAssociation]:
    """Estimate the world pose of one frame against an initialised graph.

    Returns the result and the landmark association computed at the final
    rotation, which :func:`insert_keyframe` can reuse.
    """
    config = config or TrackerConfig()
    failure = None

    # rotation prediction for data association
    r_pred = previous.pose.rotation
    common, ia, ib = _shared_points(frame.point_ids, previous.frame.point_ids)
    point_rotation = None
    if len(common) >= 3:
        try:
            r_rel = rotation_from_points(frame.points_c[ia], previous.frame.points_c[ib])
            point_rotation = previous.pose.rotation @ r_rel
            r_pred = point_rotation
        except DegenerateGeometryError:
            pass
    assoc = graph.associate(frame, Pose(r_pred, previous.pose.translation))
    matched = assoc.matched()

    rotation, source, ref = None, "hold", None
    if config.reference == "chain":
        shared = tuple(sorted(previous.matched.keys() & matched.keys()))
        if len(shared) >= 2 and spans_two_directions([previous.matched[i] for i in shared]):
            r_rel = rotation_from_matches([(previous.matched[i], matched[i]) for i in shared])
            rotation, source = previous.pose.rotation @ r_rel, "chain"
    else:
        kf, shared = _reference_keyframe(graph, matched)
        if kf is not None:
            r_rel = rotation_from_matches([(kf.directions[i], matched[i]) for i in shared])
            rotation, source, ref = kf.pose.rotation @ r_rel, "egraph", kf.id
    if rotation is None:
        failure = "rotation-unavailable"
        if point_rotation is not None:
            rotation, source = point_rotation, "points"
        else:
            rotation = previous.pose.rotation
    assoc = graph.associate(frame, Pose(rotation, previous.pose.translation))

    translation, t_source = _translation(graph, frame, rotation, previous, recent, assoc, config)
    if t_source == "hold":
        failure = failure or "translation-degenerate"
    pose = Pose(rotation, translation)
    # planes are transferred to the world with the final translation
    assoc = graph.associate(frame, pose)
    return FrameResult(frame.index, frame.timestamp, pose, source, t_source, ref, None, failure), assoc


def _translation(graph, frame, rotation, previous, recent, assoc, config):
    point_src = point_dst = None
    for cand in (previous, *recent):
        common, ia, ib = _shared_points(frame.point_ids, cand.frame.point_ids)
        if len(common) >= config.min_point_overlap:
            point_src = frame.points_c[ia]
            point_dst = cand.pose.apply(cand.frame.points_c[ib])
            break
    planes = [
        PlanePair(p.n_c, p.d_c, graph.planes[p.target].n_w, graph.planes[p.target].d_w)
        for p in assoc.planes
        if p.target is not None
    ]
    if point_src is not None:
        t0 = translation_from_points(rotation, point_src, point_dst)
        source = "points"
    else:
        t0 = previous.pose.translation
        source = "planes"
    if not config.refine and source == "points":
        return t0, source
    try:
        res = refine_translation(
            rotation, t0,
            points=None if point_src is None else (point_src, point_dst),
            planes=planes, weights=config.weights,
        )
    except DegenerateGeometryError:
        return (t0, "points") if source == "points" else (previous.pose.translation, "hold")
    return res.t, ("refined" if source == "points" else "planes")


class Tracker:
    """Stateful driver: initialises the graph, tracks frames and applies the
    keyframe policy. Poses are reported in the anchor frame composed with
    ``origin``."""

    def __init__(self, config: TrackerConfig | None = None, origin: Pose | None = None):
        self.config = config or TrackerConfig()
        self.origin = origin or Pose.identity()
        self.graph: EGraph | None = None
        self.results: list[FrameResult] = []
        self._previous: _Previous | None = None
        self._recent_keyframes: list[_Previous] = []
        self._since_keyframe = 0
        self._kf_depth: dict[int, int] = {}
        self._prev_depth = 0

    def track(self, frame: FrameObservation) -> FrameResult:
        cfg = self.config
        if self.graph is None:
            self.graph = init_graph(frame, th_vd=cfg.th_vd, plane_distance_tol=cfg.plane_distance_tol)
            pose = Pose.identity()
            result = FrameResult(frame.index, frame.timestamp, self.origin @ pose, "anchor", "anchor", None, 0)
            prev = _Previous(frame, pose, dict(self.graph.keyframes[0].directions))
            self._previous = prev
            self._recent_keyframes = [prev]
            self._kf_depth = {0: 0}
            self._prev_depth = 0
            self.results.append(result)
            return result

        result, assoc = track_frame(self.graph, frame, self._previous, cfg,
                                    recent=reversed(self._recent_keyframes))
        self._since_keyframe += 1
        last = self.graph.keyframes[len(self.graph.keyframes) - 1]
        stats = FrameStats(self._since_keyframe, self._tracked_ratio(frame, assoc, last),
                           assoc.has_new_landmark)
        local = result.pose
        prev = _Previous(frame, local, assoc.matched())
        if result.rotation_source == "egraph":
            depth = self._kf_depth[result.reference] + 1
        else:
            depth = self._prev_depth + 1
        kf_id = None
        if cfg.every_frame_keyframe or should_insert_keyframe(stats, cfg.keyframe_max_gap, cfg.keyframe_min_ratio):
            insert_keyframe(self.graph, frame, local, assoc)
            kf_id = len(self.graph.keyframes) - 1
            self._kf_depth[kf_id] = depth
            prev.matched = dict(self.graph.keyframes[kf_id].directions)
            self._since_keyframe = 0
            self._recent_keyframes = (self._recent_keyframes + [prev])[-5:]
        self._previous = prev
        self._prev_depth = depth
        result = FrameResult(result.index, result.timestamp, self.origin @ local, result.rotation_source,
                             result.translation_source, result.reference, kf_id, result.failure, depth)
        self.results.append(result)
        return result

    @staticmethod
    def _tracked_ratio(frame, assoc, keyframe) -> float:
        total = len(keyframe.point_ids) + len(keyframe.directions)
        if total == 0:
            return 0.0
        tracked = len(np.intersect1d(frame.point_ids, keyframe.point_ids))
        tracked += len(keyframe.directions.keys() & assoc.matched().keys())
        return min(tracked / total, 1.0)

    def run(self, frames: Iterable[FrameObservation]) -> list[FrameResult]:
        for f in frames:
            self.track(f)
        return self.results


def track_sequence(frames: Iterable[FrameObservation], config: TrackerConfig | None = None,
                   origin: Pose | None = None) -> tuple[list[FrameResult], EGraph]:
    tracker = Tracker(config, origin)
    results = tracker.run(frames)
    return results, tracker.graph
