"""Command line entry points.

    proximon run --config engine.json --out-dir out/
    proximon serve --config engine.json --port 8000
    proximon calibrate-auto --detections d.csv --geometry 1920x1080 --out cal.json
    proximon evaluate-mot --gt gt.csv --hyp tracks.csv
    proximon capacity --aip 5 --cores 12 --gpu 16 --sef 3
    proximon synth --seed 7 --people 4 --duration 30 --camera 3.0,0.9,0.5 \
        --geometry 1920x1080 --fps 10 --out-detections d.csv
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import EngineError
from .model import FrameGeometry


def _parse_geometry(text: str) -> FrameGeometry:
    try:
        w, h = text.lower().split("x")
        return FrameGeometry(int(w), int(h))
    except (ValueError, TypeError):
        raise SystemExit(f"bad --geometry {text!r}; expected WxH like 1920x1080")


def _parse_camera(text: str):
    from .camera import CameraParams

    try:
        x0, x1, x2 = (float(v) for v in text.split(","))
        return CameraParams(x0, x1, x2)
    except ValueError as exc:
        raise SystemExit(f"bad --camera {text!r}: {exc}")


def _cmd_run(args) -> int:
    from .config import load_config
    from .pipeline import run_feed

    cfg = load_config(args.config)
    os.makedirs(args.out_dir, exist_ok=True)
    status = 0
    for feed in cfg.feeds:
        result = run_feed(
            feed,
            overlay_path=os.path.join(args.out_dir, f"{feed.feed_id}.overlay.jsonl"),
            metrics_path=os.path.join(args.out_dir, f"{feed.feed_id}.metrics.jsonl"),
            tracks_path=os.path.join(args.out_dir, f"{feed.feed_id}.tracks.jsonl")
            if args.tracks else None,
        )
        print(
            f"{result.feed_id}: {result.status}, {result.frames_processed} frames, "
            f"{result.windows_closed} windows"
            + (f" ({result.error})" if result.error else "")
        )
        if result.status != "finished":
            status = 1
    return status


def _cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app
    from .config import load_config
    from .pipeline import Engine

    cfg = load_config(args.config)
    engine = Engine(cfg.feeds)
    engine.start()
    app = create_app(engine, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host or cfg.host, port=args.port or cfg.port, log_level="warning")
    return 0


def _cmd_calibrate_auto(args) -> int:
    from .autocalib import AutoCalibration, FitConfig, collect_samples, fit_camera_params
    from .ingest import IngestConfig, read_detection_file

    geometry = _parse_geometry(args.geometry)
    ingest = IngestConfig(fps=args.fps, min_confidence=args.min_confidence, strict=args.strict)
    samples = collect_samples(read_detection_file(args.detections, geometry, ingest), geometry)
    fit_cfg = FitConfig(nominal_height_m=args.nominal_height, min_samples=args.min_samples)
    camera, diagnostics = fit_camera_params(samples, geometry, fit_cfg)
    doc = AutoCalibration(camera, geometry, radius_m=args.radius, diagnostics=diagnostics).to_document()
    text = json.dumps(doc, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(
            f"wrote {args.out}: height {camera.height_m:.2f} m, "
            f"vfov {camera.vfov_rad:.3f} rad, tilt {camera.tilt_rad:.3f} rad"
        )
        for warning in diagnostics.warnings:
            print(f"warning: {warning}", file=sys.stderr)
    else:
        print(text)
    return 0


def _cmd_evaluate_mot(args) -> int:
    from .moteval import evaluate_mot, read_identified_boxes

    def load(path):
        if path.endswith(".jsonl"):
            from .model import BoundingBox

            table = {}
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    table[int(rec["frame"])] = [
                        (int(t["id"]), BoundingBox(*t["box"])) for t in rec["tracks"]
                    ]
            return table
        return read_identified_boxes(path)

    metrics = evaluate_mot(load(args.gt), load(args.hyp), iou_match=args.iou)
    print(json.dumps(metrics.to_dict(), indent=2))
    return 0


def _cmd_capacity(args) -> int:
    from .pipeline import CapacityInputs, capacity_estimate

    n = capacity_estimate(CapacityInputs(args.aip, args.cores, args.gpu, args.sef))
    print(n)
    return 0


def _cmd_synth(args) -> int:
    from .synth import SceneSpec, generate_scene, random_people

    camera = _parse_camera(args.camera)
    geometry = _parse_geometry(args.geometry)
    try:
        h_lo, h_hi = (float(v) for v in args.height_range.split(","))
    except ValueError:
        raise SystemExit(f"bad --height-range {args.height_range!r}; expected lo,hi")
    people = random_people(
        args.people, camera, geometry, args.duration, seed=args.seed,
        height_range=(h_lo, h_hi),
    )
    spec = SceneSpec(
        camera=camera,
        geometry=geometry,
        fps=args.fps,
        duration_s=args.duration,
        people=people,
        noise_px=args.noise,
        drop_probability=args.drop,
        radius_m=args.radius,
        seed=args.seed,
    )
    scene = generate_scene(spec)
    scene.write_detections_csv(args.out_detections)
    written = [args.out_detections]
    if args.out_gt:
        scene.write_ground_truth_csv(args.out_gt)
        written.append(args.out_gt)
    if args.out_violations:
        scene.write_violations_csv(args.out_violations)
        written.append(args.out_violations)
    total = sum(len(f.detections) for f in scene.frames)
    print(f"wrote {', '.join(written)} ({len(scene.frames)} frames, {total} detections)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proximon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="process configured feeds from files to JSON-lines")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--tracks", action="store_true", help="also write per-feed track records")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("serve", help="start the HTTP API (and live feeds)")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--ui-dir", default=None, help="directory with the built calibration UI")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("calibrate-auto", help="fit camera parameters from a detection file")
    p.add_argument("--detections", required=True)
    p.add_argument("--geometry", required=True, help="WxH, e.g. 1920x1080")
    p.add_argument("--fps", type=float, default=25.0)
    p.add_argument("--min-confidence", type=float, default=0.3)
    p.add_argument("--min-samples", type=int, default=200)
    p.add_argument("--nominal-height", type=float, default=1.70)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_calibrate_auto)

    p = sub.add_parser("evaluate-mot", help="CLEAR-MOT metrics for tracks vs ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.set_defaults(func=_cmd_evaluate_mot)

    p = sub.add_parser("capacity", help="supported feed count for an edge box")
    p.add_argument("--aip", type=float, required=True)
    p.add_argument("--cores", type=float, required=True)
    p.add_argument("--gpu", type=float, required=True)
    p.add_argument("--sef", type=float, required=True)
    p.set_defaults(func=_cmd_capacity)

    p = sub.add_parser("synth", help="generate a synthetic scene with ground truth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--people", type=int, default=4)
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--camera", required=True, help="x0,x1,x2 = height m, vfov rad, tilt rad")
    p.add_argument("--geometry", required=True, help="WxH")
    p.add_argument("--fps", type=float, default=10.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--drop", type=float, default=0.0)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--height-range", default="1.5,1.9", help="person heights, meters: lo,hi")
    p.add_argument("--out-detections", required=True)
    p.add_argument("--out-gt", default=None)
    p.add_argument("--out-violations", default=None)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
