"""Command-line interface: ``monopose estimate`` / ``simulate`` / ``replay``."""
from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .camera import CameraIntrinsics, format_calibration, load_calibration, project_points
from .errors import FrameOutOfRange, FrustumTooTight, NoConsensus, ParseError
from .pipeline import PipelineConfig, estimate_pose
from .rotation import RansacConfig
from .simulation import SceneSpec, generate_scene, run_monte_carlo
from .tracks import load_tracks, pair_correspondences, serialize_tracks, tracks_from_correspondences
from .translation import compensate_all

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2
EXIT_NO_CONSENSUS = 3

SEED_ENV = "MONOPOSE_SEED"
DEFAULT_MANIFEST = "monopose-run.manifest.json"


def _default_seed() -> int:
    value = os.environ.get(SEED_ENV)
    if value is None:
        return 0
    try:
        return int(value)
    except ValueError:
        raise SystemExit(f"monopose: {SEED_ENV} must be an integer, got {value!r}") from None


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_text(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        ransac=RansacConfig(
            inlier_threshold=args.threshold,
            max_iterations=args.max_iterations,
            min_inliers=args.min_inliers,
            rng_seed=args.seed,
        ),
        L_px=args.L_px,
        min_flow_px=args.min_flow_px,
    )


def _config_dict(cfg: PipelineConfig) -> dict:
    r = cfg.ransac
    return {
        "inlier_threshold": r.inlier_threshold,
        "max_iterations": r.max_iterations,
        "min_inliers": r.min_inliers,
        "rng_seed": r.rng_seed,
        "confidence": r.confidence,
        "L_px": cfg.L_px,
        "min_flow_px": cfg.min_flow_px,
        "min_translation_points": cfg.min_translation_points,
        "mismatch_gate": cfg.mismatch_gate,
    }


def pose_to_dict(pose, intr: CameraIntrinsics, frames=None, n_matches=None) -> dict:
    epi = pose.epipole
    out = {
        "status": pose.status,
        "R": [[float(x) for x in row] for row in pose.R],
        "euler_deg": [float(x) for x in pose.euler_deg],
        "t_dir": None if pose.t_dir is None else [float(x) for x in pose.t_dir],
        "inliers": sorted(pose.rotation_inliers),
        "outliers": sorted(pose.rotation_outliers),
        "translation_points": sorted(pose.translation_points),
        "mean_residual": float(pose.mean_rotation_residual),
        "mean_residual_px": float(intr.normalized_to_px(pose.mean_rotation_residual)),
        "covariance": None if epi is None else [[float(x) for x in row] for row in epi.covariance],
        "epipole": None
        if epi is None
        else {
            "e": [float(x) for x in epi.e],
            "c": int(epi.c),
            "n_intersections": epi.n_intersections,
            "n_parallel": epi.n_parallel,
            "n_trimmed": epi.n_trimmed,
        },
    }
    if frames is not None:
        out["frames"] = list(frames)
    if n_matches is not None:
        out["n_matches"] = n_matches
    return out


def flow_rows(pose, intr: CameraIntrinsics, matches) -> str:
    """CSV of compensated flow per point plus one epipole row."""
    from .camera import lift_pixels

    ids = [m.id for m in matches]
    uv_a = np.array([m.a for m in matches], dtype=float).reshape(-1, 2)
    uv_b = np.array([m.b for m in matches], dtype=float).reshape(-1, 2)
    _, n_a = lift_pixels(intr, uv_a)
    _, n_b = lift_pixels(intr, uv_b)
    _, kp, ok = compensate_all(pose.R, n_a, n_b)

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "u_a", "v_a", "u_b_compensated", "v_b_compensated", "class"])
    for row, tid in enumerate(ids):
        if tid in pose.rotation_inliers:
            cls = "rotation_inlier"
        elif tid in pose.translation_points:
            cls = "translation"
        else:
            cls = "rejected"
        if ok[row]:
            ub, vb = project_points(intr, np.append(kp[row], 1.0))[0]
            comp = [repr(float(ub)), repr(float(vb))]
        else:
            comp = ["", ""]
        writer.writerow([tid, repr(float(uv_a[row, 0])), repr(float(uv_a[row, 1])), *comp, cls])
    if pose.epipole is not None:
        eu, ev = project_points(intr, pose.epipole.e)[0]
        writer.writerow(["epipole", repr(float(eu)), repr(float(ev)), "", "", "epipole"])
    return out.getvalue()


def _emit(outputs: dict, name: str, path, text: str):
    """Write ``text`` to ``path`` (stdout when ``path`` is None) and remember its hash."""
    if path:
        _write_text(path, text)
    else:
        sys.stdout.write(text)
    outputs[name] = {"path": None if not path else str(path),
                     "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest()}


def _write_manifest(args, argv, config, inputs, outputs):
    path = args.manifest
    if path is None:
        path = str(args.json_out) + ".manifest.json" if args.json_out else DEFAULT_MANIFEST
    manifest = {
        "monopose_version": __version__,
        "subcommand": args.command,
        "argv": list(argv),
        "seed": args.seed,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "artifacts": outputs,
    }
    _write_text(path, _dumps(manifest))


def cmd_estimate(args, argv) -> int:
    try:
        intr = load_calibration(args.calib)
        columns = dict(item.split("=", 1) for item in args.columns.split(",")) if args.columns else None
        ts = load_tracks(args.tracks, columns)
        i, j = args.frames
        matches = pair_correspondences(ts, i, j)
        cfg = _pipeline_config(args)
    except (OSError, ParseError, FrameOutOfRange, ValueError) as exc:
        print(f"monopose estimate: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT

    try:
        if len(matches) < cfg.ransac.min_inliers:
            raise NoConsensus(f"only {len(matches)} correspondences between frames {i} and {j}")
        pose = estimate_pose(intr, matches, cfg)
    except NoConsensus as exc:
        print(f"monopose estimate: NoConsensus: {exc}", file=sys.stderr)
        return EXIT_NO_CONSENSUS

    outputs = {}
    _emit(outputs, "json", args.json_out,
          _dumps(pose_to_dict(pose, intr, frames=(i, j), n_matches=len(matches))))
    if args.flow_csv:
        _emit(outputs, "flow_csv", args.flow_csv, flow_rows(pose, intr, matches))
    _write_manifest(args, argv, _config_dict(cfg), [args.tracks, args.calib], outputs)
    return EXIT_OK


def _scene_spec(args) -> SceneSpec:
    if args.spec_file:
        data = json.loads(Path(args.spec_file).read_text(encoding="utf-8"))
        spec = SceneSpec.from_dict(data)
        return replace(spec, seed=args.seed)
    return SceneSpec.standard_protocol(
        seed=args.seed,
        noise_sigma_px=args.noise,
        n_outliers=args.outliers,
        n_near=args.near,
        n_far=args.far,
    )


def _export_scene(spec: SceneSpec, directory, outputs):
    matches, truth = generate_scene(spec)
    directory = Path(directory)
    _emit(outputs, "scene_tracks", directory / "tracks.csv",
          serialize_tracks(tracks_from_correspondences(matches)))
    _emit(outputs, "scene_calib", directory / "calib.txt", format_calibration(spec.intrinsics))
    truth_doc = {"R": truth.R.tolist(), "T": truth.T.tolist(), "labels": list(truth.labels)}
    _emit(outputs, "scene_truth", directory / "truth.json", _dumps(truth_doc))


def cmd_simulate(args, argv) -> int:
    try:
        spec = _scene_spec(args)
        cfg = _pipeline_config(args)
        if args.trials < 1:
            raise ValueError("--trials must be at least 1")
        report = run_monte_carlo(spec, cfg, args.trials, workers=args.workers)
    except (OSError, ValueError, TypeError, KeyError, FrustumTooTight) as exc:
        print(f"monopose simulate: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT

    outputs = {}
    payload = {"report": report.to_dict(), "spec": spec.to_dict(), "config": _config_dict(cfg)}
    _emit(outputs, "json", args.json_out, _dumps(payload))
    table = report.to_table()
    if args.table_out:
        _emit(outputs, "table", args.table_out, table)
    sys.stderr.write(table)
    if args.export_scene:
        _export_scene(spec, args.export_scene, outputs)
    if args.flow_csv:
        # flow of the first scene of the run
        matches, _ = generate_scene(spec)
        try:
            pose = estimate_pose(spec.intrinsics, matches, cfg)
            _emit(outputs, "flow_csv", args.flow_csv, flow_rows(pose, spec.intrinsics, matches))
        except NoConsensus as exc:
            print(f"monopose simulate: no flow for the first scene: {exc}", file=sys.stderr)
    inputs = [args.spec_file] if args.spec_file else []
    config = {**_config_dict(cfg), "trials": args.trials, "workers": args.workers, "spec": spec.to_dict()}
    _write_manifest(args, argv, config, inputs, outputs)
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    try:
        manifest = json.loads(Path(args.manifest_file).read_text(encoding="utf-8"))
        for path, digest in manifest["inputs"].items():
            if _sha256(path) != digest:
                print(f"monopose replay: input {path} changed since the run", file=sys.stderr)
                return EXIT_MISMATCH
        stored = manifest["artifacts"]
        replay_argv = list(manifest["argv"])
    except (OSError, ValueError, KeyError) as exc:
        print(f"monopose replay: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT

    # seed may have come from the environment originally
    previous = os.environ.get(SEED_ENV)
    os.environ[SEED_ENV] = str(manifest.get("seed", 0))
    captured = io.StringIO()
    try:
        with contextlib.redirect_stdout(captured):
            code = main(replay_argv)
    finally:
        if previous is None:
            os.environ.pop(SEED_ENV, None)
        else:
            os.environ[SEED_ENV] = previous
    if code != EXIT_OK:
        return code
    stdout_hash = hashlib.sha256(captured.getvalue().encode("utf-8")).hexdigest()
    mismatched = [
        name for name, art in stored.items()
        if (_sha256(art["path"]) if art["path"] else stdout_hash) != art["sha256"]
    ]
    if mismatched:
        print(f"monopose replay: outputs differ: {', '.join(mismatched)}", file=sys.stderr)
        return EXIT_MISMATCH
    print(f"monopose replay: {len(stored)} artifact(s) reproduced byte-identically", file=sys.stderr)
    return EXIT_OK


def _add_shared(p):
    p.add_argument("--seed", type=int, default=_default_seed(),
                   help=f"RNG seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--threshold", type=float, default=RansacConfig.inlier_threshold,
                   help="rotation inlier threshold, radians")
    p.add_argument("--L-px", dest="L_px", type=float, default=PipelineConfig.L_px,
                   help="flow length at which an intersection gets full weight, pixels")
    p.add_argument("--min-flow-px", type=float, default=PipelineConfig.min_flow_px,
                   help="shortest compensated flow used for translation, pixels")
    p.add_argument("--max-iterations", type=int, default=RansacConfig.max_iterations,
                   help="RANSAC hypothesis budget")
    p.add_argument("--min-inliers", type=int, default=RansacConfig.min_inliers,
                   help="smallest acceptable rotation consensus set")
    p.add_argument("--json-out", help="write the JSON result here instead of stdout")
    p.add_argument("--flow-csv", help="write compensated flow and epipole rows here")
    p.add_argument("--manifest", help=f"run manifest path; when omitted, <json-out>.manifest.json or ./{DEFAULT_MANIFEST}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monopose",
        description="Two-frame rotation and translation direction from feature tracks.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate pose between two frames of a track file",
                         formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    est.add_argument("--tracks", required=True, help="track CSV (track_id,frame,u,v)")
    est.add_argument("--calib", required=True, help="calibration file (f_mm, sx_mm, sy_mm, cx_px, cy_px)")
    est.add_argument("--frames", nargs=2, type=int, default=(0, 1), metavar=("I", "J"))
    est.add_argument("--columns", help="column mapping for other exports, e.g. track_id=id,u=x,v=y")
    _add_shared(est)

    sim = sub.add_parser("simulate", help="Monte Carlo accuracy study on synthetic scenes",
                         formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sim.add_argument("--trials", type=int, default=200)
    sim.add_argument("--noise", type=float, default=math.sqrt(0.05), help="pixel noise sigma")
    sim.add_argument("--outliers", type=int, default=20)
    sim.add_argument("--near", type=int, default=SceneSpec.n_near, help="near points per scene")
    sim.add_argument("--far", type=int, default=SceneSpec.n_far, help="far points per scene")
    sim.add_argument("--spec-file", help="JSON scene spec; overrides the scene flags")
    sim.add_argument("--workers", type=int, default=1, help="worker processes")
    sim.add_argument("--table-out", help="write the text table here")
    sim.add_argument("--export-scene", metavar="DIR",
                     help="also write the first scene as tracks.csv, calib.txt and truth.json")
    _add_shared(sim)

    rep = sub.add_parser("replay", help="re-run a manifest and compare outputs")
    rep.add_argument("manifest_file")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INPUT
    handler = {"estimate": cmd_estimate, "simulate": cmd_simulate, "replay": cmd_replay}[args.command]
    return handler(args, argv)


if __name__ == "__main__":
    sys.exit(main())
