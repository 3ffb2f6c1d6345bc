"""Extensibility graph: keyframes connected through shared global directions.

Two keyframes get an edge as soon as they observe two or more common,
non-parallel direction landmarks (vanishing directions or plane normals). The
edge rotation is computed from the two keyframes' own camera-frame
measurements, so it does not depend on the poses estimated in between and the
keyframes need not overlap.
"""
from __future__ import annotations

import heapq
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np

from .geom import MIN_SINE, Pose, normalize
from .landmarks import (
    DEFAULT_TH_VD,
    PD_LIFETIME,
    DirectionLandmark,
    Kind,
    PlaneLandmark,
    PotentialDirection,
    angle_between_lines,
    cluster_directions,
    fuse,
    match_angle,
    match_direction,
    spans_two_directions,
    to_world,
    world_plane,
)
from .observations import FrameObservation
from .pose import rotation_from_matches

log = logging.getLogger(__name__)

PLANE_DISTANCE_TOL = 0.2  # meters
COVISIBILITY_MIN_SHARED = 15


@dataclass(frozen=True)
class FrameDirection:
    """A per-frame direction after merging parallel measurements.

    ``potential`` marks a lone line that has no parallel partner in its frame.
    """

    dir_c: np.ndarray
    kind: Kind
    potential: bool = False


def frame_directions(frame: FrameObservation, th_vd: float = DEFAULT_TH_VD) -> list[FrameDirection]:
    """Merge parallel direction measurements within one frame.

    Line-derived directions and plane normals are grouped separately. A group
    with two or more members becomes one direction (their sign-aligned mean); a
    lone line that stays alone is flagged as potential.
    """
    out: list[FrameDirection] = []
    tol = match_angle(th_vd)
    lines = [o for o in frame.directions if o.kind == "vanishing"]
    normals = [p.n_c for p in frame.planes]
    normals += [o.dir_c for o in frame.directions if o.kind == "plane-normal"]

    res = cluster_directions([o.dir_c for o in lines], tol, iterations=max(len(lines), 1))
    for g in res.groups:
        out.append(FrameDirection(g.direction, "vanishing"))
    for i in res.unclustered:
        out.append(FrameDirection(normalize(lines[i].dir_c), "vanishing", lines[i].source == "lone-line"))

    res = cluster_directions(normals, tol, iterations=max(len(normals), 1))
    for g in res.groups:
        out.append(FrameDirection(g.direction, "plane-normal"))
    for i in res.unclustered:
        out.append(FrameDirection(normalize(normals[i]), "plane-normal"))
    return out


@dataclass
class KeyframeNode:
    id: int
    frame_index: int
    pose: Pose
    directions: dict[int, np.ndarray] = field(default_factory=dict)
    planes: dict[int, tuple[np.ndarray, float]] = field(default_factory=dict)
    point_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    points_c: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    timestamp: float = 0.0


@dataclass(frozen=True)
class Edge:
    """``rotation`` maps keyframe ``b`` coordinates into keyframe ``a`` (``a < b``)."""

    a: int
    b: int
    shared: tuple[int, ...]
    rotation: np.ndarray
    residual: float

    @property
    def span(self) -> int:
        return self.b - self.a


@dataclass(frozen=True)
class Degeneracy:
    a: int
    b: int
    shared: tuple[int, ...]
    reason: str


@dataclass(frozen=True)
class FrameStats:
    frames_since_keyframe: int
    tracked_ratio: float
    new_landmark: bool

    def __post_init__(self):
        if not 0.0 <= self.tracked_ratio <= 1.0:
            raise ValueError(f"tracked_ratio must lie in [0, 1], got {self.tracked_ratio}")


def should_insert_keyframe(
    stats: FrameStats, max_gap: int = 20, min_tracked_ratio: float = 0.85
) -> bool:
    return (
        stats.frames_since_keyframe >= max_gap
        or stats.tracked_ratio < min_tracked_ratio
        or stats.new_landmark
    )


AssocKind = Literal["landmark", "promote", "new", "new-potential"]


@dataclass(frozen=True)
class DirectionAssociation:
    direction: FrameDirection
    dir_w: np.ndarray
    action: AssocKind
    target: int | None = None  # landmark or potential id
    sign: int = 1
    residual: float = 0.0


@dataclass(frozen=True)
class PlaneAssociation:
    n_c: np.ndarray
    d_c: float
    n_w: np.ndarray
    d_w: float
    target: int | None


@dataclass(frozen=True)
class FrameAssociation:
    directions: list[DirectionAssociation]
    planes: list[PlaneAssociation]

    def matched(self) -> dict[int, np.ndarray]:
        """Landmark id -> camera-frame measurement sign-aligned to the landmark."""
        return {
            a.target: a.sign * a.direction.dir_c
            for a in self.directions
            if a.action == "landmark"
        }

    @property
    def has_new_landmark(self) -> bool:
        return any(a.action == "new" for a in self.directions) or any(
            p.target is None for p in self.planes
        )


class EGraph:
    """Keyframe nodes, landmark nodes and rotation edges.

    The first keyframe is the world anchor with identity pose. Landmark ids
    share one counter across direction landmarks, potential directions and
    planes.
    """

    def __init__(self, th_vd: float = DEFAULT_TH_VD, plane_distance_tol: float = PLANE_DISTANCE_TOL,
                 pd_lifetime: int = PD_LIFETIME):
        self.th_vd = th_vd
        self.plane_distance_tol = plane_distance_tol
        self.pd_lifetime = pd_lifetime
        self.keyframes: dict[int, KeyframeNode] = {}
        self.directions: dict[int, DirectionLandmark] = {}
        self.potentials: dict[int, PotentialDirection] = {}
        self.planes: dict[int, PlaneLandmark] = {}
        self.edges: dict[tuple[int, int], Edge] = {}
        self.degeneracies: list[Degeneracy] = []
        self._next_id = 0

    def _new_id(self) -> int:
        self._next_id += 1
        return self._next_id - 1

    @property
    def anchor(self) -> KeyframeNode | None:
        return self.keyframes.get(0)

    def neighbours(self, k: int) -> Iterable[tuple[int, Edge]]:
        for (a, b), e in self.edges.items():
            if a == k:
                yield b, e
            elif b == k:
                yield a, e

    def associate(self, frame: FrameObservation, pose: Pose) -> FrameAssociation:
        """Match a frame's directions and planes against the stored landmarks."""
        assoc: list[DirectionAssociation] = []
        claimed: dict[int, int] = {}
        for fd in frame_directions(frame, self.th_vd):
            dir_w = to_world(fd.dir_c, pose.rotation)
            pool = [lm for lm in self.directions.values() if lm.kind == fd.kind]
            m = match_direction(dir_w, pool, self.th_vd)
            if m is not None:
                a = DirectionAssociation(fd, dir_w, "landmark", m.landmark_id, m.sign, m.residual)
                prev = claimed.get(m.landmark_id)
                if prev is None:
                    claimed[m.landmark_id] = len(assoc)
                    assoc.append(a)
                elif a.residual < assoc[prev].residual:
                    assoc[prev] = a
                continue
            if fd.kind == "vanishing":
                m = match_direction(dir_w, self.potentials.values(), self.th_vd)
                if m is not None and ("pd", m.landmark_id) not in claimed:
                    claimed[("pd", m.landmark_id)] = len(assoc)
                    assoc.append(DirectionAssociation(fd, dir_w, "promote", m.landmark_id, m.sign, m.residual))
                    continue
            assoc.append(DirectionAssociation(fd, dir_w, "new-potential" if fd.potential else "new"))

        planes = []
        for p in frame.planes:
            n_c, d_c = (p.n_c, p.d_c) if p.d_c >= 0 else (-p.n_c, -p.d_c)
            n_w, d_w = world_plane(n_c, d_c, pose.rotation, pose.translation)
            planes.append(PlaneAssociation(normalize(n_c), d_c, n_w, d_w, self._match_plane(n_w, d_w)))
        return FrameAssociation(assoc, planes)

    def _match_plane(self, n_w, d_w) -> int | None:
        tol = match_angle(self.th_vd)
        best, best_err = None, np.inf
        for pl in self.planes.values():
            if angle_between_lines(n_w, pl.n_w) >= tol:
                continue
            s = 1.0 if n_w @ pl.n_w > 0 else -1.0
            err = abs(s * d_w - pl.d_w)
            if err < self.plane_distance_tol and err < best_err:
                best, best_err = pl.id, err
        return best

    def _direction_id_for(self, n_w) -> int | None:
        pool = [lm for lm in self.directions.values() if lm.kind == "plane-normal"]
        m = match_direction(n_w, pool, self.th_vd)
        return None if m is None else m.landmark_id


def init_graph(frame: FrameObservation | None = None, th_vd: float = DEFAULT_TH_VD, **kwargs) -> EGraph:
    """Graph anchored at the first keyframe, whose pose defines the world frame."""
    graph = EGraph(th_vd=th_vd, **kwargs)
    if frame is None:
        frame = FrameObservation(index=0, timestamp=0.0)
    insert_keyframe(graph, frame, Pose.identity())
    return graph


def insert_keyframe(graph: EGraph, frame: FrameObservation, pose: Pose,
                    association: FrameAssociation | None = None) -> list[Edge]:
    """Add a keyframe, fuse its landmarks and connect it to earlier keyframes.

    Returns the edges created for the new keyframe.
    """
    kid = len(graph.keyframes)
    if kid == 0 and not np.allclose(pose.rotation, np.eye(3)):
        raise ValueError("the anchor keyframe must have identity pose")
    if association is None:
        association = graph.associate(frame, pose)
    node = KeyframeNode(
        id=kid,
        frame_index=frame.index,
        pose=pose,
        point_ids=np.asarray(frame.point_ids, dtype=int),
        points_c=np.asarray(frame.points_c, dtype=float).reshape(-1, 3),
        timestamp=frame.timestamp,
    )

    for a in association.directions:
        if a.action == "landmark":
            before = graph.directions[a.target]
            after = fuse(before, a.dir_w, a.sign)
            graph.directions[a.target] = after
            node.directions.setdefault(a.target, a.sign * a.direction.dir_c)
            if after.dir_w @ before.dir_w < 0:
                _flip_landmark(graph, node, a.target)
        elif a.action == "promote":
            pd = graph.potentials.pop(a.target)
            lm = fuse(DirectionLandmark(pd.id, pd.dir_w, 1, "vanishing"), a.dir_w, a.sign)
            graph.directions[pd.id] = lm
            node.directions[pd.id] = a.sign * a.direction.dir_c * (1.0 if lm.dir_w @ pd.dir_w > 0 else -1.0)
            born = graph.keyframes.get(pd.born_at)
            if born is not None and pd.dir_c is not None:
                born.directions[pd.id] = pd.dir_c * (1.0 if lm.dir_w @ pd.dir_w > 0 else -1.0)
        elif a.action == "new":
            lid = graph._new_id()
            lm = DirectionLandmark.create(lid, a.dir_w, a.direction.kind)
            graph.directions[lid] = lm
            node.directions[lid] = a.direction.dir_c * (1.0 if lm.dir_w @ a.dir_w > 0 else -1.0)
        else:
            lid = graph._new_id()
            graph.potentials[lid] = PotentialDirection.create(lid, a.dir_w, kid, a.direction.dir_c)

    for p in association.planes:
        pid = p.target
        if pid is None:
            pid = graph._new_id()
            graph.planes[pid] = PlaneLandmark(pid, p.n_w, p.d_w, graph._direction_id_for(p.n_w))
        node.planes[pid] = (p.n_c, p.d_c)

    expired = [i for i, pd in graph.potentials.items() if kid - pd.born_at > graph.pd_lifetime]
    for i in expired:
        del graph.potentials[i]

    graph.keyframes[kid] = node
    new_edges = []
    for other in list(graph.keyframes.values())[:-1]:
        e = connect(graph, other.id, kid)
        if e is not None:
            new_edges.append(e)
    return new_edges


def _flip_landmark(graph: EGraph, node: KeyframeNode, lid: int) -> None:
    """Keep stored camera-frame copies aligned after a landmark changed sign."""
    for kf in (*graph.keyframes.values(), node):
        if lid in kf.directions:
            kf.directions[lid] = -kf.directions[lid]


def shared_directions(graph: EGraph, a: int, b: int) -> tuple[int, ...]:
    return tuple(sorted(graph.keyframes[a].directions.keys() & graph.keyframes[b].directions.keys()))


def connect(graph: EGraph, a: int, b: int, min_shared: int = 2) -> Edge | None:
    """Create (or refresh) the edge between two keyframes if their shared
    landmarks determine a rotation. Degenerate shared sets are logged."""
    a, b = min(a, b), max(a, b)
    shared = shared_directions(graph, a, b)
    if len(shared) < min_shared:
        return None
    da = np.array([graph.keyframes[a].directions[i] for i in shared])
    db = np.array([graph.keyframes[b].directions[i] for i in shared])
    if not spans_two_directions(da, MIN_SINE) or not spans_two_directions(db, MIN_SINE):
        graph.degeneracies.append(Degeneracy(a, b, shared, "shared directions are parallel"))
        log.debug("keyframes %d-%d share only parallel directions %s", a, b, shared)
        return None
    r = rotation_from_matches(list(zip(da, db)))
    residual = float(np.mean([angle_between_lines(x, r @ y) for x, y in zip(da, db)]))
    edge = Edge(a, b, shared, r, residual)
    graph.edges[(a, b)] = edge
    return edge


def relative_rotation(graph: EGraph, a: int, b: int) -> tuple[np.ndarray, list[int]] | None:
    """Rotation from keyframe ``b`` into keyframe ``a`` along the fewest-edge path.

    Ties between equally short paths go to the smaller summed edge residual.
    Returns ``None`` when ``a`` and ``b`` are not connected.
    """
    if a not in graph.keyframes or b not in graph.keyframes:
        raise KeyError(f"unknown keyframe {a if a not in graph.keyframes else b}")
    if a == b:
        return np.eye(3), []
    best: dict[int, tuple[int, float]] = {a: (0, 0.0)}
    parent: dict[int, tuple[int, Edge]] = {}
    heap = [(0, 0.0, a)]
    while heap:
        hops, res, k = heapq.heappop(heap)
        if (hops, res) > best.get(k, (np.inf, np.inf)):
            continue
        if k == b:
            break
        for nb, e in graph.neighbours(k):
            cand = (hops + 1, res + e.residual)
            if cand < best.get(nb, (np.inf, np.inf)):
                best[nb] = cand
                parent[nb] = (k, e)
                heapq.heappush(heap, (cand[0], cand[1], nb))
    if b not in parent:
        return None
    path = [b]
    r = np.eye(3)
    k = b
    while k != a:
        prev, e = parent[k]
        # rotation from k into prev
        step = e.rotation if (e.a, e.b) == (prev, k) else e.rotation.T
        r = step @ r
        path.append(prev)
        k = prev
    path.reverse()
    return r, path


@dataclass(frozen=True)
class GraphStats:
    keyframes: int
    edge_count: int
    max_span: int
    mean_span: float
    components: int
    support_histogram: dict[int, int]


def _components(nodes: Iterable[int], pairs: Iterable[tuple[int, int]]) -> int:
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        parent[find(a)] = find(b)
    return len({find(n) for n in parent})


def graph_stats(graph: EGraph) -> GraphStats:
    spans = [e.span for e in graph.edges.values()]
    hist = Counter(lm.support_count for lm in graph.directions.values())
    return GraphStats(
        keyframes=len(graph.keyframes),
        edge_count=len(spans),
        max_span=max(spans, default=0),
        mean_span=float(np.mean(spans)) if spans else 0.0,
        components=_components(graph.keyframes, graph.edges),
        support_histogram=dict(sorted(hist.items())),
    )


def build_covisibility_graph(
    keyframes: Iterable[KeyframeNode], min_shared: int = COVISIBILITY_MIN_SHARED
) -> list[tuple[int, int, int]]:
    """Conventional covisibility edges ``(a, b, shared_point_count)``."""
    kfs = sorted(keyframes, key=lambda k: k.id)
    sets = [set(np.asarray(k.point_ids).tolist()) for k in kfs]
    edges = []
    for i in range(len(kfs)):
        for j in range(i + 1, len(kfs)):
            n = len(sets[i] & sets[j])
            if n >= min_shared:
                edges.append((kfs[i].id, kfs[j].id, n))
    return edges


def shared_point_count(graph: EGraph, a: int, b: int) -> int:
    return len(np.intersect1d(graph.keyframes[a].point_ids, graph.keyframes[b].point_ids))


def export_graph(graph: EGraph, covisibility_min_shared: int = COVISIBILITY_MIN_SHARED) -> dict:
    """JSON-ready document with keyframes, landmarks, both edge sets and spans."""
    cov = build_covisibility_graph(graph.keyframes.values(), covisibility_min_shared)
    stats = graph_stats(graph)
    return {
        "format": "extgraph-graph",
        "version": 1,
        "keyframes": [
            {
                "id": k.id,
                "frame_index": k.frame_index,
                "timestamp": k.timestamp,
                "rotation": k.pose.rotation.tolist(),
                "translation": k.pose.translation.tolist(),
                "landmarks": sorted(k.directions),
                "planes": sorted(k.planes),
                "point_ids": np.asarray(k.point_ids).tolist(),
            }
            for k in graph.keyframes.values()
        ],
        "landmarks": {
            "directions": [
                {"id": lm.id, "kind": lm.kind, "dir_w": lm.dir_w.tolist(), "support": lm.support_count}
                for lm in graph.directions.values()
            ],
            "potentials": [
                {"id": pd.id, "dir_w": pd.dir_w.tolist(), "born_at": pd.born_at}
                for pd in graph.potentials.values()
            ],
            "planes": [
                {"id": pl.id, "n_w": pl.n_w.tolist(), "d_w": pl.d_w, "direction_id": pl.direction_id}
                for pl in graph.planes.values()
            ],
        },
        "edges": [
            {
                "a": e.a,
                "b": e.b,
                "span": e.span,
                "shared": list(e.shared),
                "rotation": e.rotation.tolist(),
                "residual": e.residual,
                "shared_points": shared_point_count(graph, e.a, e.b),
            }
            for e in graph.edges.values()
        ],
        "covisibility_edges": [{"a": a, "b": b, "span": b - a, "shared_points": n} for a, b, n in cov],
        "degeneracies": [
            {"a": d.a, "b": d.b, "shared": list(d.shared), "reason": d.reason} for d in graph.degeneracies
        ],
        "stats": {
            "keyframes": stats.keyframes,
            "edge_count": stats.edge_count,
            "max_span": stats.max_span,
            "mean_span": stats.mean_span,
            "components": stats.components,
            "support_histogram": {str(k): v for k, v in stats.support_histogram.items()},
        },
    }
