"""Command-line driver: simulate, track, eval, sweep and graph-stats.

Every command writes into one run directory together with a ``manifest.json``
holding the config hash, package versions and a SHA-256 per output file.
Files are staged under a temporary name and moved into place with
``os.replace``, so a failed run leaves no partial outputs behind.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy

from .config import ConfigError, ExperimentConfig, default_config, load_config
from .evaluation import Trajectory, evaluate, format_tum, read_tum
from .experiments import SweepCell, drift_study, rotation_error_budget, sweep
from .geom import DegenerateGeometryError
from .graph import export_graph
from .observations import FrameObservation
from .sim import generate_scene, generate_trajectory, preset, run_sequence
from .tracking import track_sequence

log = logging.getLogger("extgraph")

OUT_ROOT_ENV = "EXTGRAPH_OUT_ROOT"
OBSERVATIONS_FORMAT = "extgraph-observations"

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# output handling -----------------------------------------------------------

def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _versions() -> dict:
    from . import __version__

    return {"extgraph": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def write_outputs(out_dir: Path, files: dict[str, str], manifest: dict) -> Path:
    """Atomically write ``files`` plus a manifest with their checksums."""
    out_dir.mkdir(parents=True, exist_ok=True)
    blobs = {name: text.encode() for name, text in files.items()}
    manifest = dict(manifest, versions=_versions(),
                    outputs={name: _sha256(b) for name, b in sorted(blobs.items())})
    blobs["manifest.json"] = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()
    staged = []
    try:
        for name, data in blobs.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            staged.append((tmp, out_dir / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return out_dir


def _out_dir(args, command: str, digest: str) -> Path:
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get(OUT_ROOT_ENV, "runs"))
    return root / f"{command}-{digest[:12]}"


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else default_config()
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError([("seed", "must be >= 0")])
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


def _digest(*parts) -> str:
    return _sha256(json.dumps(parts, sort_keys=True).encode())


# commands --------------------------------------------------------------------

def cmd_simulate(args) -> Path:
    cfg = _config(args)
    p = preset(cfg.preset, cfg.frames)
    camera = cfg.camera.model()
    noise = cfg.noise.spec()
    scene = generate_scene(p.scene, seed=cfg.seed)
    poses = generate_trajectory(p.trajectory)
    frames = run_sequence(scene, poses, camera, noise, seed=cfg.seed,
                          frame_rate=p.trajectory.frame_rate)
    doc = {
        "format": OBSERVATIONS_FORMAT,
        "version": 1,
        "preset": cfg.preset,
        "seed": cfg.seed,
        "noise": cfg.noise.model_dump(),
        "frames": [f.to_dict() for f in frames],
    }
    gt = Trajectory.from_poses([f.timestamp for f in frames], poses)
    files = {
        "observations.json": json.dumps(doc, sort_keys=True) + "\n",
        "groundtruth.tum": "# timestamp tx ty tz qx qy qz qw\n" + format_tum(gt),
    }
    out = _out_dir(args, "simulate", cfg.digest())
    return write_outputs(out, files, {"command": "simulate", "config_sha256": cfg.digest(),
                                      "config": cfg.model_dump(mode="json")})


def read_observations(path) -> tuple[dict, list[FrameObservation]]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != OBSERVATIONS_FORMAT:
        raise ValueError(f"{path}: not an observation file (format must be {OBSERVATIONS_FORMAT!r})")
    frames_raw = doc.get("frames") or []
    if not frames_raw:
        raise ValueError(f"{path}: observation file contains no frames")
    try:
        frames = [FrameObservation.from_dict(f) for f in frames_raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed frame record: {exc}") from None
    return doc, frames


def _frames_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "timestamp", "rotation_source", "translation_source", "reference",
                "keyframe", "depth", "failure"])
    for r in results:
        w.writerow([r.index, f"{r.timestamp:.6f}", r.rotation_source, r.translation_source,
                    "" if r.reference is None else r.reference,
                    "" if r.keyframe is None else r.keyframe, r.depth, r.failure or ""])
    return buf.getvalue()


def cmd_track(args) -> Path:
    cfg = _config(args)
    doc, frames = read_observations(args.observations)
    origin = frames[0].gt_pose if args.anchor_gt and frames[0].gt_pose is not None else None
    results, graph = track_sequence(frames, cfg.tracker.config(), origin=origin)
    est = Trajectory.from_poses([r.timestamp for r in results], [r.pose for r in results])
    export = export_graph(graph, cfg.tracker.covisibility_min_shared)
    failures = [{"index": r.index, "cause": r.failure} for r in results if r.failure]
    for f in failures:
        log.warning("frame %d: %s", f["index"], f["cause"])
    obs_hash = _sha256(Path(args.observations).read_bytes())
    manifest = {
        "command": "track",
        "config_sha256": cfg.digest(),
        "config": cfg.model_dump(mode="json"),
        "observations_sha256": obs_hash,
        "failures": failures,
    }
    sigma = (doc.get("noise") or {}).get("direction_deg")
    if sigma is not None:
        manifest["rotation_error_budget"] = rotation_error_budget(
            float(sigma), max(r.depth for r in results))
    files = {
        "trajectory.tum": "# timestamp tx ty tz qx qy qz qw\n" + format_tum(est),
        "graph.json": json.dumps(export, indent=1, sort_keys=True) + "\n",
        "frames.csv": _frames_csv(results),
    }
    out = _out_dir(args, "track", _digest(cfg.digest(), obs_hash, args.anchor_gt))
    return write_outputs(out, files, manifest)


def cmd_eval(args) -> Path:
    cfg = _config(args)
    max_dt = cfg.eval.max_dt if args.max_dt is None else args.max_dt
    deltas = tuple(args.delta) if args.delta else cfg.eval.deltas
    if max_dt < 0 or any(d < 1 for d in deltas):
        raise UsageError("--max-dt must be >= 0 and --delta values >= 1")
    est, gt = read_tum(args.estimate), read_tum(args.groundtruth)
    report = evaluate(est, gt, max_dt=max_dt, deltas=deltas)
    summary = report.summary()
    summary["are_mode"] = cfg.eval.are_mode
    if cfg.eval.are_mode == "first":
        summary["are_reported"] = summary["are_mean_first"]
    else:
        summary["are_reported"] = summary["are_mean"]
    files = {
        "metrics.json": json.dumps(summary, indent=2, sort_keys=True) + "\n",
        "frames.csv": report.frames_csv(),
    }
    hashes = [_sha256(Path(p).read_bytes()) for p in (args.estimate, args.groundtruth)]
    out = _out_dir(args, "eval", _digest(cfg.digest(), hashes, max_dt, deltas))
    return write_outputs(out, files, {"command": "eval", "config_sha256": cfg.digest(),
                                      "inputs_sha256": hashes, "max_dt": max_dt,
                                      "deltas": list(deltas)})


def cmd_sweep(args) -> Path:
    cfg = _config(args)
    sw = cfg.sweep
    trials = sw.trials if args.trials is None else args.trials
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    workers = sw.workers if args.workers is None else args.workers
    cells = sweep(sw.noise_grid, sw.lengths, trials, seed=cfg.seed, preset_name=cfg.preset,
                  plane_sigma_m=sw.plane_sigma_m, methods=sw.methods, workers=workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SweepCell.header())
    for c in cells:
        w.writerow([repr(v) if isinstance(v, float) else v for v in c.row()])
    files = {"sweep.csv": buf.getvalue()}
    if sw.drift is not None:
        d = drift_study(sw.drift.trials, sw.drift.keyframes, sw.drift.sigma_deg,
                        seed=cfg.seed, workers=workers)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["keyframes", "direct_median_deg", "chained_median_deg"])
        for n in range(2, sw.drift.keyframes + 1):
            w.writerow([n, repr(float(np.degrees(d.median_direct(n)))),
                        repr(float(np.degrees(d.median_chained(n))))])
        files["drift.csv"] = buf.getvalue()
    out = _out_dir(args, "sweep", _digest(cfg.digest(), trials))
    # worker count does not change results, so it is not part of the hash
    return write_outputs(out, files, {"command": "sweep", "config_sha256": cfg.digest(),
                                      "config": cfg.model_dump(mode="json"), "trials": trials})


def span_rows(doc: dict) -> list[tuple[str, int, int, int, int]]:
    rows = []
    for e in doc.get("edges", []):
        rows.append(("egraph", int(e["a"]), int(e["b"]), int(e["b"]) - int(e["a"]),
                     len(e.get("shared", []))))
    for e in doc.get("covisibility_edges", []):
        rows.append(("covisibility", int(e["a"]), int(e["b"]), int(e["b"]) - int(e["a"]),
                     int(e["shared_points"])))
    return rows


def span_summary(rows) -> dict:
    out = {}
    for kind in ("egraph", "covisibility"):
        spans = [r[3] for r in rows if r[0] == kind]
        out[kind] = {
            "edges": len(spans),
            "max_span": max(spans) if spans else 0,
            "mean_span": float(np.mean(spans)) if spans else 0.0,
        }
    return out


def cmd_graph_stats(args) -> Path:
    raw = Path(args.graph).read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{args.graph}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != "extgraph-graph":
        raise ValueError(f"{args.graph}: not a graph export")
    try:
        rows = span_rows(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{args.graph}: malformed edge record: {exc}") from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["graph", "a", "b", "span", "shared"])
    w.writerows(rows)
    summary = span_summary(rows)
    summary["zero_point_overlap_egraph_edges"] = sum(
        1 for e in doc.get("edges", []) if e.get("shared_points", 1) == 0)
    files = {"spans.csv": buf.getvalue(),
             "summary.json": json.dumps(summary, indent=2, sort_keys=True) + "\n"}
    h = _sha256(raw)
    out = _out_dir(args, "graph-stats", h)
    return write_outputs(out, files, {"command": "graph-stats", "config_sha256": None,
                                      "inputs_sha256": [h]})


# entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="extgraph", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config=True, seed=True):
        if config:
            p.add_argument("--config", help="YAML experiment config")
        if seed:
            p.add_argument("--seed", type=int, help="override the config's master seed")
        p.add_argument("--out", help=f"run directory (default: ${OUT_ROOT_ENV} or ./runs)")

    p = sub.add_parser("simulate", help="generate observations and ground truth")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="estimate a trajectory from an observation file")
    p.add_argument("observations")
    p.add_argument("--anchor-gt", action="store_true",
                   help="express poses in the ground-truth frame of the first frame")
    common(p, seed=False)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="ATE / ARE / RPE between two TUM trajectories")
    p.add_argument("estimate")
    p.add_argument("groundtruth")
    p.add_argument("--max-dt", type=float, help="timestamp association tolerance (s)")
    p.add_argument("--delta", type=int, action="append", help="RPE frame gap (repeatable)")
    common(p, seed=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="Monte-Carlo comparison of graph and chained tracking")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("graph-stats", help="edge spans of a graph export vs covisibility")
    p.add_argument("graph")
    common(p, config=False, seed=False)
    p.set_defaults(func=cmd_graph_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        out = args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"extgraph {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, DegenerateGeometryError) as exc:
        print(f"extgraph {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
