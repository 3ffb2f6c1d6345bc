"""Monte-Carlo studies: direct-edge vs chained rotation drift, and noise sweeps
comparing graph-referenced tracking with frame-to-frame chaining."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .evaluation import Trajectory, align_se3, associate, ate_rmse, are_mean
from .geom import Pose, angular_distance
from .graph import init_graph, insert_keyframe
from .landmarks import DEFAULT_TH_VD
from .sim import (NoiseSpec, Preset, generate_scene, generate_trajectory, observe, preset,
                  renoise, run_sequence)
from .tracking import TrackerConfig, track_sequence


def _task_seed(master: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(1)[0])


# drift study -----------------------------------------------------------------

@dataclass(frozen=True)
class DriftResult:
    """Per-trial rotation errors (radians), indexed by keyframe.

    ``direct[t, i]`` is the error of the edge (0, i) and ``chained[t, i]`` the
    error of composing the consecutive relative rotations (0, 1), ...,
    (i - 1, i). Column 0 is zero by definition.
    """

    direct: np.ndarray
    chained: np.ndarray

    def median_direct(self, n: int) -> float:
        return float(np.median(self.direct[:, n - 1]))

    def median_chained(self, n: int) -> float:
        return float(np.median(self.chained[:, n - 1]))


def drift_setup(keyframes: int = 50) -> Preset:
    """Manhattan room without point features, half an orbit: every keyframe
    keeps sight of at least two room directions seen by the first one."""
    p = preset("manhattan", keyframes)
    planes = tuple(replace(pl, points=0) for pl in p.scene.planes)
    scene = replace(p.scene, planes=planes, point_count=0)
    return replace(p, scene=scene, trajectory=replace(p.trajectory, revolutions=0.5))


def pair_edge_rotation(frame_a, frame_b, pose_ab: Pose, th_vd: float = DEFAULT_TH_VD) -> np.ndarray | None:
    """Edge rotation (b into a) from a two-keyframe graph, or None if the
    pair shares no usable directions. ``pose_ab`` is only used to associate."""
    graph = init_graph(frame_a, th_vd=th_vd)
    insert_keyframe(graph, frame_b, pose_ab)
    e = graph.edges.get((0, 1))
    return None if e is None else e.rotation


def _clean_frames(setup: Preset) -> list:
    scene = generate_scene(setup.scene, seed=0)
    return [observe(scene, p, setup.camera, index=i)
            for i, p in enumerate(generate_trajectory(setup.trajectory))]


def drift_trial(setup: Preset, sigma_deg: float, seed: int, clean=None) -> tuple[np.ndarray, np.ndarray]:
    """Each relative rotation is estimated from its own measurements of both
    frames, as a frame-to-frame tracker re-measures directions per image pair.

    ``clean`` optionally passes precomputed noise-free frames of ``setup``.
    """
    poses = generate_trajectory(setup.trajectory)
    noise = NoiseSpec(direction_deg=sigma_deg)
    rng = np.random.default_rng(seed)
    n = len(poses)
    if clean is None:
        clean = _clean_frames(setup)

    def measure(a, b):
        fa = renoise(clean[a], noise, rng)
        fb = renoise(clean[b], noise, rng)
        r = pair_edge_rotation(fa, fb, poses[a].inverse() @ poses[b])
        return np.full((3, 3), np.nan) if r is None else r

    direct, chained = np.zeros(n), np.zeros(n)
    acc = np.eye(3)
    for i in range(1, n):
        truth = poses[0].rotation.T @ poses[i].rotation
        r0 = measure(0, i)
        direct[i] = angular_distance(r0, truth) if np.all(np.isfinite(r0)) else np.nan
        acc = acc @ measure(i - 1, i)
        chained[i] = angular_distance(acc, truth) if np.all(np.isfinite(acc)) else np.nan
    return direct, chained


def _drift_one(args):
    return drift_trial(*args)


def drift_study(trials: int = 100, keyframes: int = 50, sigma_deg: float = 0.2, seed: int = 0,
                workers: int = 1) -> DriftResult:
    setup = drift_setup(keyframes)
    clean = _clean_frames(setup)  # identical in every trial
    tasks = [(setup, sigma_deg, _task_seed(seed, t), clean) for t in range(trials)]
    out = _map(_drift_one, tasks, workers)
    return DriftResult(np.array([o[0] for o in out]), np.array([o[1] for o in out]))


# sweep ------------------------------------------------------------------------

METHODS = ("egraph", "chain")


@dataclass(frozen=True)
class SweepCell:
    method: str
    sigma_deg: float
    length: int
    trials: int
    are_median: float
    are_q25: float
    are_q75: float
    are_q90: float
    ate_median: float
    ate_q25: float
    ate_q75: float
    ate_q90: float
    failures: int

    @staticmethod
    def header() -> list[str]:
        return list(SweepCell.__dataclass_fields__)

    def row(self) -> list:
        return [getattr(self, k) for k in self.header()]


def run_trial(preset_name: str, length: int, sigma_deg: float, plane_sigma_m: float,
              method: str, seed: int) -> tuple[float, float, int]:
    """One tracked sequence; returns (ARE deg, ATE m, failure frame count)."""
    p = preset(preset_name, length)
    scene = generate_scene(p.scene, seed=0)
    poses = generate_trajectory(p.trajectory)
    noise = NoiseSpec(direction_deg=sigma_deg, plane_distance_m=plane_sigma_m)
    frames = run_sequence(scene, poses, p.camera, noise, seed=seed,
                          frame_rate=p.trajectory.frame_rate)
    results, _ = track_sequence(frames, TrackerConfig(reference=method), origin=poses[0])
    stamps = [f.timestamp for f in frames]
    est = Trajectory.from_poses(stamps, [r.pose for r in results])
    gt = Trajectory.from_poses(stamps, poses)
    pairs = associate(est, gt, max_dt=1e-6)
    g = align_se3(pairs.est.positions, pairs.gt.positions)
    return are_mean(pairs, g), ate_rmse(pairs, g), sum(r.failure is not None for r in results)


def _run_trial(args):
    return run_trial(*args)


def _map(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def sweep(noise_grid: Sequence[float], lengths: Sequence[int], trials: int, seed: int = 0,
          preset_name: str = "manhattan", plane_sigma_m: float = 0.0,
          methods: Sequence[str] = METHODS, workers: int = 1) -> list[SweepCell]:
    """Median and quantile ARE/ATE per (method, sigma, length) cell.

    Trial ``t`` of a (sigma, length) cell uses the same observation seed for
    every method, so the methods see identical measurements.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not noise_grid or any(s < 0 for s in noise_grid):
        raise ValueError("noise grid must be a non-empty list of non-negative values")
    if not lengths or any(n < 2 for n in lengths):
        raise ValueError("lengths must be a non-empty list of values >= 2")
    bad = set(methods) - set(METHODS)
    if bad:
        raise ValueError(f"unknown methods {sorted(bad)}")
    keys, tasks = [], []
    for si, s in enumerate(noise_grid):
        for li, n in enumerate(lengths):
            for t in range(trials):
                ts = _task_seed(seed, si, li, t)
                for m in methods:
                    keys.append((m, s, n))
                    tasks.append((preset_name, n, s, plane_sigma_m, m, ts))
    out = _map(_run_trial, tasks, workers)
    cells = []
    for m in methods:
        for s in noise_grid:
            for n in lengths:
                vals = np.array([o for k, o in zip(keys, out) if k == (m, s, n)])
                are, ate = vals[:, 0], vals[:, 1]
                qa = np.quantile(are, [0.25, 0.5, 0.75, 0.9])
                qt = np.quantile(ate, [0.25, 0.5, 0.75, 0.9])
                cells.append(SweepCell(m, float(s), int(n), trials,
                                       float(qa[1]), float(qa[0]), float(qa[2]), float(qa[3]),
                                       float(qt[1]), float(qt[0]), float(qt[2]), float(qt[3]),
                                       int(vals[:, 2].sum())))
    return cells


def default_workers() -> int:
    return max(1, min(8, (os.cpu_count() or 1) - 1))


def rotation_error_budget(sigma_deg: float, depth: int = 1) -> dict:
    """First-order rotation error of a depth-``depth`` composition of edges.

    A direction perturbed by ``|N(0, sigma)|`` about a random perpendicular
    axis has tangent error variance ``sigma**2 / 2`` per axis; two noisy frames
    double it. The minimal three-direction solver takes each rotation axis
    from one such component, so an edge has per-axis variance ``sigma**2`` and
    RMS angle ``sqrt(3) * sigma``. Independent edges add in variance. The
    median of a 3D isotropic Gaussian norm is ``0.888`` of its RMS.
    """
    if sigma_deg < 0 or depth < 0:
        raise ValueError("sigma and depth must be non-negative")
    rms = np.sqrt(3.0 * depth) * sigma_deg
    return {"sigma_deg": sigma_deg, "depth": depth, "rms_deg": float(rms),
            "median_deg": float(0.888 * rms)}
