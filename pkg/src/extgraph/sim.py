"""Deterministic synthetic worlds for oracle testing.

A scene is a set of bounded planes, bundles of parallel line segments and
point features. Cameras see whatever falls inside a truncated-pyramid frustum
(no occlusion between objects) and report camera-frame directions, planes,
3D points and bearings with configurable noise.

Camera convention: ``z`` forward, ``x`` right, ``y`` down; a pose maps camera
coordinates to world coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation
from scipy.spatial.transform import Slerp

from .geom import Pose, as_vec3, normalize
from .landmarks import DirectionObservation, canonicalize
from .observations import FrameObservation, PlaneObservation

Style = Literal["manhattan", "atlanta-like", "general"]
WORLD_UP = np.array([0.0, 0.0, 1.0])


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class PlaneSpec:
    """Rectangle on the plane ``normal . p + offset = 0``."""

    normal: tuple[float, float, float]
    offset: float
    center: tuple[float, float, float]
    u_axis: tuple[float, float, float]
    half_extent: tuple[float, float]
    points: int = 0

    @classmethod
    def through(cls, center, normal, u_axis, half_extent, points: int = 0) -> "PlaneSpec":
        n = normalize(normal)
        c = as_vec3(center)
        return cls(tuple(n), float(-n @ c), tuple(c), tuple(normalize(u_axis)), tuple(half_extent), points)

    def validate(self) -> None:
        n = normalize(self.normal)
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-9:
            raise SpecError("plane normal must be unit length")
        if abs(n @ as_vec3(self.center) + self.offset) > 1e-9:
            raise SpecError("plane center does not lie on the plane")
        if abs(n @ normalize(self.u_axis)) > 1e-9:
            raise SpecError("plane u_axis must be perpendicular to the normal")
        if min(self.half_extent) <= 0:
            raise SpecError("plane extents must be positive")
        if self.points < 0:
            raise SpecError("plane point count must be >= 0")

    def corners(self) -> np.ndarray:
        n = normalize(self.normal)
        u = normalize(self.u_axis)
        v = np.cross(n, u)
        a, b = self.half_extent
        c = as_vec3(self.center)
        return np.array([c + a * u + b * v, c - a * u + b * v, c - a * u - b * v, c + a * u - b * v])


@dataclass(frozen=True)
class LineBundleSpec:
    """``count`` parallel segments of ``length`` centred in an axis-aligned box."""

    direction: tuple[float, float, float]
    count: int
    center: tuple[float, float, float]
    half_size: tuple[float, float, float]
    length: float = 1.0

    def validate(self) -> None:
        normalize(self.direction)
        if self.count < 2:
            raise SpecError("a line bundle needs at least 2 lines")
        if min(self.half_size) < 0 or self.length <= 0:
            raise SpecError("bundle sizes must be positive")


@dataclass(frozen=True)
class SceneSpec:
    planes: tuple[PlaneSpec, ...] = ()
    bundles: tuple[LineBundleSpec, ...] = ()
    point_count: int = 0
    point_center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    point_half_size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    style: Style = "general"

    def validate(self) -> None:
        for p in self.planes:
            p.validate()
        for b in self.bundles:
            b.validate()
        if self.point_count < 0 or min(self.point_half_size) < 0:
            raise SpecError("point region must be non-negative")
        if self.style not in ("manhattan", "atlanta-like", "general"):
            raise SpecError(f"unknown scene style {self.style!r}")


@dataclass(frozen=True)
class Scene:
    spec: SceneSpec
    plane_truth: np.ndarray  # (P, 4): n, d
    lines: np.ndarray  # (L, 2, 3) endpoints
    line_bundle: np.ndarray  # (L,) bundle index
    direction_truth: np.ndarray  # (B, 3) canonical bundle directions
    points: np.ndarray  # (N, 3)


def generate_scene(spec: SceneSpec, seed: int = 0) -> Scene:
    spec.validate()
    rng = np.random.default_rng(seed)
    lines, owner, dirs = [], [], []
    for bi, b in enumerate(spec.bundles):
        d = normalize(b.direction)
        dirs.append(canonicalize(d)[0])
        centers = as_vec3(b.center) + rng.uniform(-1, 1, size=(b.count, 3)) * np.asarray(b.half_size)
        for c in centers:
            lines.append((c - 0.5 * b.length * d, c + 0.5 * b.length * d))
            owner.append(bi)
    pts = [as_vec3(spec.point_center) + rng.uniform(-1, 1, size=(spec.point_count, 3)) * np.asarray(spec.point_half_size)]
    for p in spec.planes:
        u = normalize(p.u_axis)
        v = np.cross(normalize(p.normal), u)
        ab = rng.uniform(-1, 1, size=(p.points, 2)) * np.asarray(p.half_extent)
        pts.append(as_vec3(p.center) + ab[:, :1] * u + ab[:, 1:] * v)
    return Scene(
        spec=spec,
        plane_truth=np.array([[*p.normal, p.offset] for p in spec.planes], dtype=float).reshape(-1, 4),
        lines=np.array(lines, dtype=float).reshape(-1, 2, 3),
        line_bundle=np.array(owner, dtype=int),
        direction_truth=np.array(dirs, dtype=float).reshape(-1, 3),
        points=np.vstack(pts),
    )


@dataclass(frozen=True)
class CameraModel:
    hfov_deg: float = 70.0
    vfov_deg: float = 55.0
    near: float = 0.1
    far: float = 12.0
    focal_px: float = 525.0

    def validate(self) -> None:
        if not 0 < self.near < self.far:
            raise SpecError("camera needs 0 < near < far")
        if not (0 < self.hfov_deg < 180 and 0 < self.vfov_deg < 180):
            raise SpecError("camera field of view must lie in (0, 180) degrees")

    def halfspaces(self) -> np.ndarray:
        """Rows ``(a, b)`` with ``a . p + b >= 0`` inside the frustum."""
        th = np.tan(np.radians(self.hfov_deg) / 2)
        tv = np.tan(np.radians(self.vfov_deg) / 2)
        return np.array([
            [0, 0, 1, -self.near],
            [0, 0, -1, self.far],
            [-1, 0, th, 0],
            [1, 0, th, 0],
            [0, -1, tv, 0],
            [0, 1, tv, 0],
        ], dtype=float)

    def contains(self, p_c) -> np.ndarray:
        p = np.asarray(p_c, dtype=float).reshape(-1, 3)
        h = self.halfspaces()
        return np.all(p @ h[:, :3].T + h[:, 3] >= 0, axis=1)


@dataclass(frozen=True)
class NoiseSpec:
    direction_deg: float = 0.0
    plane_distance_m: float = 0.0
    point_m: float = 0.0
    bearing_px: float = 0.0
    seed: int | None = None

    def validate(self) -> None:
        if min(self.direction_deg, self.plane_distance_m, self.point_m, self.bearing_px) < 0:
            raise SpecError("noise levels must be >= 0")


TrajectoryKind = Literal["waypoints", "orbit", "pure-rotation"]


@dataclass(frozen=True)
class TrajectorySpec:
    """Camera path.

    ``waypoints`` interpolates positions linearly and rotations by slerp with
    one segment per waypoint gap. ``orbit`` circles ``center`` at ``radius``
    looking at ``target`` (the centre when omitted) or outward when
    ``outward``. ``pure-rotation`` stays at ``center`` while yawing over
    ``yaw_range_deg`` with a sinusoidal pitch of ``pitch_amplitude_deg``.
    """

    kind: TrajectoryKind
    frame_count: int
    frame_rate: float = 30.0
    waypoints: tuple[Pose, ...] = ()
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    revolutions: float = 1.0
    start_angle_deg: float = 0.0
    outward: bool = False
    yaw_range_deg: tuple[float, float] = (0.0, 360.0)
    pitch_amplitude_deg: float = 0.0

    def validate(self) -> None:
        if self.frame_count < 2:
            raise SpecError("a trajectory needs at least 2 frames")
        if self.frame_rate <= 0:
            raise SpecError("frame rate must be positive")
        if self.kind == "waypoints" and len(self.waypoints) < 2:
            raise SpecError("waypoint trajectories need at least 2 waypoints")
        if self.kind == "orbit" and self.radius <= 0:
            raise SpecError("orbit radius must be positive")
        if self.kind not in ("waypoints", "orbit", "pure-rotation"):
            raise SpecError(f"unknown trajectory kind {self.kind!r}")


def look_at(eye, target, up=WORLD_UP) -> Pose:
    """Camera pose at ``eye`` with its optical axis towards ``target``."""
    eye = as_vec3(eye)
    z = normalize(as_vec3(target) - eye)
    x = np.cross(z, as_vec3(up))
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, (1.0, 0.0, 0.0))
    x = normalize(x)
    y = np.cross(z, x)
    return Pose(np.column_stack((x, y, z)), eye)


def look_dir(eye, yaw_deg: float, pitch_deg: float = 0.0) -> Pose:
    yaw, pitch = np.radians(yaw_deg), np.radians(pitch_deg)
    d = np.array([np.cos(pitch) * np.cos(yaw), np.cos(pitch) * np.sin(yaw), np.sin(pitch)])
    return look_at(eye, as_vec3(eye) + d)


def generate_trajectory(spec: TrajectorySpec) -> list[Pose]:
    spec.validate()
    n = spec.frame_count
    s = np.linspace(0.0, 1.0, n)
    if spec.kind == "waypoints":
        wps = spec.waypoints
        key_t = np.linspace(0.0, 1.0, len(wps))
        rots = _ScipyRotation.from_matrix(np.array([w.rotation for w in wps]))
        slerp = Slerp(key_t, rots)
        pos = np.array([w.translation for w in wps])
        interp = np.column_stack([np.interp(s, key_t, pos[:, k]) for k in range(3)])
        mats = slerp(s).as_matrix()
        return [Pose(mats[i], interp[i]) for i in range(n)]
    c = as_vec3(spec.center)
    if spec.kind == "orbit":
        out = []
        for si in s:
            ang = np.radians(spec.start_angle_deg) + 2 * np.pi * spec.revolutions * si
            radial = np.array([np.cos(ang), np.sin(ang), 0.0])
            eye = c + spec.radius * radial
            out.append(look_at(eye, eye + radial if spec.outward else c))
        return out
    yaw0, yaw1 = spec.yaw_range_deg
    return [
        look_dir(c, yaw0 + (yaw1 - yaw0) * si, spec.pitch_amplitude_deg * np.sin(2 * np.pi * si))
        for si in s
    ]


def perturb_direction(v, sigma_rad: float, rng: np.random.Generator) -> np.ndarray:
    """Rotate ``v`` about a uniformly random perpendicular axis by ``|N(0, sigma)|``."""
    v = normalize(v)
    if sigma_rad <= 0:
        return v
    a = rng.normal(size=3)
    axis = a - (a @ v) * v
    axis = axis / np.linalg.norm(axis)
    ang = abs(rng.normal(0.0, sigma_rad))
    return np.cos(ang) * v + np.sin(ang) * axis


def _clip_polygon(poly: np.ndarray, halfspaces: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of a convex 3D polygon."""
    pts = list(poly)
    for h in halfspaces:
        if not pts:
            break
        out = []
        vals = [h[:3] @ p + h[3] for p in pts]
        for i in range(len(pts)):
            p, q = pts[i], pts[(i + 1) % len(pts)]
            vp, vq = vals[i], vals[(i + 1) % len(pts)]
            if vp >= 0:
                out.append(p)
            if (vp >= 0) != (vq >= 0):
                out.append(p + (vp / (vp - vq)) * (q - p))
        pts = out
    return np.array(pts).reshape(-1, 3)


def _segment_visible(p: np.ndarray, q: np.ndarray, halfspaces: np.ndarray) -> bool:
    lo, hi = 0.0, 1.0
    d = q - p
    for h in halfspaces:
        vp = h[:3] @ p + h[3]
        dv = h[:3] @ d
        if abs(dv) < 1e-15:
            if vp < 0:
                return False
            continue
        r = -vp / dv
        if dv > 0:
            lo = max(lo, r)
        else:
            hi = min(hi, r)
        if lo > hi:
            return False
    return True


def observe(scene: Scene, pose: Pose, camera: CameraModel | None = None,
            noise: NoiseSpec | None = None, seed=0, index: int = 0,
            timestamp: float = 0.0) -> FrameObservation:
    camera = camera or CameraModel()
    noise = noise or NoiseSpec()
    camera.validate()
    noise.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    r_cw = pose.rotation.T
    t = pose.translation
    hs = camera.halfspaces()
    sig_dir = np.radians(noise.direction_deg)

    # line bundles
    dirs, dir_truth = [], []
    if len(scene.lines):
        ends_c = (scene.lines - t) @ pose.rotation  # row-wise R^T (p - t)
        vis = np.array([_segment_visible(a, b, hs) for a, b in ends_c])
        for bi in range(len(scene.direction_truth)):
            k = int(np.count_nonzero(vis & (scene.line_bundle == bi)))
            if k == 0:
                continue
            truth_c = r_cw @ scene.direction_truth[bi]
            dirs.append(DirectionObservation(
                perturb_direction(truth_c, sig_dir, rng), "vanishing",
                "line-bundle" if k >= 2 else "lone-line",
            ))
            dir_truth.append(bi)

    # planes
    planes, plane_truth = [], []
    for pi, spec in enumerate(scene.spec.planes):
        n_w = np.asarray(spec.normal, dtype=float)
        d_c = float(spec.offset + n_w @ t)
        if abs(d_c) < 1e-6:
            continue  # camera inside the plane sees it edge-on
        poly_c = (spec.corners() - t) @ pose.rotation
        if len(_clip_polygon(poly_c, hs)) < 3:
            continue
        n_c = r_cw @ n_w
        if d_c < 0:
            n_c, d_c = -n_c, -d_c
        n_c = perturb_direction(n_c, sig_dir, rng)
        if noise.plane_distance_m > 0:
            d_c = d_c + rng.normal(0.0, noise.plane_distance_m)
        planes.append(PlaneObservation(n_c + 0.0, d_c))
        plane_truth.append(pi)

    # points
    p_c = (scene.points - t) @ pose.rotation
    ids = np.flatnonzero(camera.contains(p_c))
    p_c = p_c[ids]
    proj = p_c[:, :2] / p_c[:, 2:3]
    if noise.bearing_px > 0:
        proj = proj + rng.normal(0.0, noise.bearing_px / camera.focal_px, size=proj.shape)
    bear = np.column_stack((proj, np.ones(len(ids))))
    bear /= np.linalg.norm(bear, axis=1, keepdims=True)
    if noise.point_m > 0:
        p_c = p_c + rng.normal(0.0, noise.point_m, size=p_c.shape)

    return FrameObservation(
        index=index,
        timestamp=timestamp,
        directions=tuple(dirs),
        planes=tuple(planes),
        point_ids=ids.astype(int),
        points_c=p_c,
        bearings=bear,
        gt_pose=pose,
        direction_truth=tuple(dir_truth),
        plane_truth=tuple(plane_truth),
    )


def renoise(frame: FrameObservation, noise: NoiseSpec, rng: np.random.Generator) -> FrameObservation:
    """Fresh direction and plane noise on a noise-free observation.

    Cheaper than :func:`observe` when the same pose is measured repeatedly,
    since visibility does not depend on noise. Points are left untouched.
    """
    sig = np.radians(noise.direction_deg)
    dirs = tuple(replace(o, dir_c=perturb_direction(o.dir_c, sig, rng)) for o in frame.directions)
    planes = []
    for p in frame.planes:
        n_c = perturb_direction(p.n_c, sig, rng)
        d_c = p.d_c + (rng.normal(0.0, noise.plane_distance_m) if noise.plane_distance_m > 0 else 0.0)
        planes.append(PlaneObservation(n_c + 0.0, d_c))
    return replace(frame, directions=dirs, planes=tuple(planes))


def frame_seed(master_seed: int, index: int) -> np.random.Generator:
    """Per-frame generator; depends only on the master seed and frame index."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


def run_sequence(scene: Scene, trajectory: Sequence[Pose], camera: CameraModel | None = None,
                 noise: NoiseSpec | None = None, seed: int = 0,
                 frame_rate: float = 30.0) -> list[FrameObservation]:
    return [
        observe(scene, pose, camera, noise, frame_seed(seed, i), index=i, timestamp=i / frame_rate)
        for i, pose in enumerate(trajectory)
    ]


# presets --------------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    scene: SceneSpec
    trajectory: TrajectorySpec
    camera: CameraModel = field(default_factory=CameraModel)


def _box_room(lo, hi, points_per_plane: int) -> list[PlaneSpec]:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    c = (lo + hi) / 2
    h = (hi - lo) / 2
    x, y, z = np.eye(3)
    return [
        PlaneSpec.through((c[0], c[1], lo[2]), z, x, (h[0], h[1]), points_per_plane),
        PlaneSpec.through((c[0], c[1], hi[2]), -z, x, (h[0], h[1]), points_per_plane),
        PlaneSpec.through((lo[0], c[1], c[2]), x, y, (h[1], h[2]), points_per_plane),
        PlaneSpec.through((hi[0], c[1], c[2]), -x, y, (h[1], h[2]), points_per_plane),
        PlaneSpec.through((c[0], lo[1], c[2]), y, x, (h[0], h[2]), points_per_plane),
        PlaneSpec.through((c[0], hi[1], c[2]), -y, x, (h[0], h[2]), points_per_plane),
    ]


def _manhattan_scene() -> SceneSpec:
    lo, hi = (0.0, 0.0, 0.0), (8.0, 6.0, 3.0)
    return SceneSpec(
        planes=tuple(_box_room(lo, hi, 150)),
        bundles=(
            LineBundleSpec((1, 0, 0), 10, (4.0, 3.0, 2.98), (2.0, 2.8, 0.0), 3.0),
            LineBundleSpec((0, 1, 0), 10, (4.0, 3.0, 2.98), (3.8, 1.5, 0.0), 3.0),
            LineBundleSpec((1, 0, 0), 10, (4.0, 3.0, 0.02), (2.0, 2.8, 0.0), 3.0),
            LineBundleSpec((0, 1, 0), 10, (4.0, 3.0, 0.02), (3.8, 1.5, 0.0), 3.0),
            LineBundleSpec((0, 0, 1), 16, (4.0, 3.0, 1.5), (3.9, 2.9, 0.3), 1.8),
        ),
        point_count=100,
        point_center=(4.0, 3.0, 1.0),
        point_half_size=(3.5, 2.5, 0.8),
        style="manhattan",
    )


def _general_scene() -> SceneSpec:
    c = np.array([0.0, 0.0, 1.5])
    planes = [
        PlaneSpec.through((0, 0, 0), (0, 0, 1), (1, 0, 0), (8.0, 8.0), 200),
        PlaneSpec.through((0, 0, 3.0), (0, 0, -1), (1, 0, 0), (8.0, 8.0), 200),
    ]
    for ang in (15.0, 100.0, 230.0, 300.0):
        a = np.radians(ang)
        out = np.array([np.cos(a), np.sin(a), 0.0])
        planes.append(PlaneSpec.through(c + 4.0 * out, -out, np.cross(WORLD_UP, out), (7.0, 1.5), 150))
    d30 = (np.cos(np.radians(30)), np.sin(np.radians(30)), 0.0)
    d75 = (np.cos(np.radians(75)), np.sin(np.radians(75)), 0.0)
    return SceneSpec(
        planes=tuple(planes),
        bundles=(
            LineBundleSpec(d30, 10, (0, 0, 2.98), (3.0, 3.0, 0.0), 3.0),
            LineBundleSpec(d75, 10, (0, 0, 2.98), (3.0, 3.0, 0.0), 3.0),
            LineBundleSpec(d30, 10, (0, 0, 0.02), (3.0, 3.0, 0.0), 3.0),
            LineBundleSpec(d75, 10, (0, 0, 0.02), (3.0, 3.0, 0.0), 3.0),
            LineBundleSpec((0.0, 0.0, 1.0), 16, (0, 0, 1.5), (3.5, 3.5, 0.3), 1.8),
        ),
        point_count=100,
        point_center=(0.0, 0.0, 1.0),
        point_half_size=(2.5, 2.5, 0.8),
        style="general",
    )


def _corridor_scene() -> SceneSpec:
    length, half_w, height = 30.0, 1.2, 2.6
    x, y, z = np.eye(3)
    cx = length / 2
    planes = (
        PlaneSpec.through((cx, 0, 0), z, x, (cx, half_w), 400),
        PlaneSpec.through((cx, 0, height), -z, x, (cx, half_w), 400),
        PlaneSpec.through((cx, -half_w, height / 2), y, x, (cx, height / 2), 600),
        PlaneSpec.through((cx, half_w, height / 2), -y, x, (cx, height / 2), 600),
        PlaneSpec.through((0, 0, height / 2), x, y, (half_w, height / 2), 60),
        PlaneSpec.through((length, 0, height / 2), -x, y, (half_w, height / 2), 60),
    )
    return SceneSpec(
        planes=planes,
        bundles=(
            # skirting and cornice lines along the corridor
            LineBundleSpec((1, 0, 0), 24, (cx, 0, height / 2), (cx - 3, half_w - 0.01, height / 2 - 0.01), 6.0),
            # door frames
            LineBundleSpec((0, 0, 1), 48, (cx, 0, 1.0), (cx - 0.5, half_w - 0.01, 0.05), 2.0),
            # ceiling light strips
            LineBundleSpec((0, 1, 0), 20, (cx, 0, height - 0.02), (cx - 0.5, 0.2, 0.0), 1.2),
        ),
        style="manhattan",
    )


def preset(name: str, frame_count: int | None = None) -> Preset:
    """Named scene + trajectory pairs: ``manhattan``, ``general``, ``corridor``,
    ``pure-rotation``."""
    if name == "manhattan":
        traj = TrajectorySpec("orbit", frame_count or 100, center=(4.0, 3.0, 1.5), radius=1.5,
                              revolutions=1.0)
        return Preset(_manhattan_scene(), traj)
    if name == "general":
        traj = TrajectorySpec("orbit", frame_count or 100, center=(0.0, 0.0, 1.5), radius=1.5,
                              revolutions=1.0)
        return Preset(_general_scene(), traj)
    if name == "corridor":
        eye_z = 1.4
        # out along one side, U-turn, back along the other side
        wps = (
            look_dir((3.0, 0.4, eye_z), 0.0),
            look_dir((24.0, 0.4, eye_z), 0.0),
            look_dir((24.5, 0.0, eye_z), 90.0),
            look_dir((24.0, -0.4, eye_z), 180.0),
            look_dir((5.0, -0.4, eye_z), 180.0),
        )
        traj = TrajectorySpec("waypoints", frame_count or 120, waypoints=wps)
        return Preset(_corridor_scene(), traj)
    if name == "pure-rotation":
        traj = TrajectorySpec("pure-rotation", frame_count or 100, center=(4.0, 3.0, 1.5),
                              yaw_range_deg=(0.0, 360.0), pitch_amplitude_deg=10.0)
        return Preset(_manhattan_scene(), traj)
    raise SpecError(f"unknown preset {name!r}")


PRESETS = ("manhattan", "general", "corridor", "pure-rotation")
