"""HTTP API surface: feed status, calibration documents, metrics, overlay stream.

Serves the browser calibration tool and any monitoring consumer. Calibration
documents are validated server-side; for tool mode the homography is
recomputed from the posted quad and rectangle and becomes the stored matrix,
with the client's matrix (when present) cross-checked to within a pixel.
"""

from __future__ import annotations

import os
import queue
from typing import Iterator

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import FileResponse, JSONResponse, StreamingResponse

from .autocalib import AutoCalibration
from .birdseye import GroundQuad, compute_homography, warp_points
from .camera import CameraParams, validate_camera_setting
from .compliance import rolling_metrics
from .errors import EngineError
from .model import FrameGeometry
from .pipeline import CapacityInputs, Engine, capacity_estimate, dumps

MATRIX_AGREEMENT_PX = 1.0


def _field_errors(*pairs: tuple[str, str]) -> JSONResponse:
    return JSONResponse(
        status_code=422,
        content={"detail": [{"field": f, "message": m} for f, m in pairs]},
    )


def validate_calibration_document(doc: dict, geometry: FrameGeometry) -> tuple[dict, list]:
    """Normalize and validate a posted document; returns (document, field errors).

    Tool mode: the server recomputes the matrix from quad/rect and stores its
    own result; a client-supplied matrix must agree within 1 px at the frame
    corners and center.
    """
    errors: list[tuple[str, str]] = []
    if not isinstance(doc, dict):
        return doc, [("body", "calibration document must be a JSON object")]
    mode = doc.get("mode")
    frame = doc.get("frame")
    if frame is not None:
        try:
            if int(frame["w"]) != geometry.width or int(frame["h"]) != geometry.height:
                errors.append(("frame", f"feed frame is {geometry.width}x{geometry.height}"))
        except (KeyError, TypeError, ValueError):
            errors.append(("frame", "frame must carry integer 'w' and 'h'"))

    if mode == "tool":
        quad = None
        if not doc.get("quad"):
            errors.append(("quad", "four quadrilateral corners are required"))
        else:
            try:
                quad = GroundQuad(tuple(tuple(map(float, p)) for p in doc["quad"]))
            except (EngineError, TypeError, ValueError) as exc:
                errors.append(("quad", str(exc)))
        rect = doc.get("rect")
        if not rect:
            errors.append(("rect", "target rectangle corners are required"))
        matrix = None
        if quad is not None and rect:
            try:
                matrix = compute_homography(quad, np.asarray(rect, dtype=float))
            except (EngineError, TypeError, ValueError) as exc:
                errors.append(("rect", str(exc)))
        if matrix is not None and doc.get("matrix") is not None:
            try:
                client = np.asarray(doc["matrix"], dtype=float).reshape(3, 3)
                w, h = geometry.width, geometry.height
                probes = np.array([[0, 0], [w, 0], [w, h], [0, h], [w / 2, h / 2]], dtype=float)
                ours, _ = warp_points(matrix, probes)
                theirs, ok = warp_points(client, probes)
                gap = float(np.nanmax(np.hypot(*(ours - theirs).T)))
                if not ok.all() or gap > MATRIX_AGREEMENT_PX:
                    errors.append(
                        ("matrix", f"client matrix disagrees with server by {gap:.2f} px")
                    )
            except (TypeError, ValueError) as exc:
                errors.append(("matrix", f"bad matrix: {exc}"))
        try:
            scale = float(doc.get("scale_px_per_m", 0))
            if scale <= 0:
                errors.append(("scale_px_per_m", "positive pixels-per-meter scale required"))
        except (TypeError, ValueError):
            errors.append(("scale_px_per_m", "must be a number"))
        try:
            if float(doc.get("threshold_m", 2.0)) <= 0:
                errors.append(("threshold_m", "must be positive"))
        except (TypeError, ValueError):
            errors.append(("threshold_m", "must be a number"))
        if errors:
            return doc, errors
        stored = dict(doc)
        stored["matrix"] = matrix.tolist()
        stored["threshold_m"] = float(doc.get("threshold_m", 2.0))
        stored["frame"] = {"w": geometry.width, "h": geometry.height}
        return stored, []

    if mode == "auto":
        camera = None
        try:
            camera = CameraParams(float(doc["x0_m"]), float(doc["x1_rad"]), float(doc["x2_rad"]))
        except KeyError as exc:
            errors.append((str(exc.args[0]), "required for auto mode"))
        except (TypeError, ValueError) as exc:
            errors.append(("x0_m/x1_rad/x2_rad", str(exc)))
        try:
            if float(doc.get("radius_m", 1.0)) <= 0:
                errors.append(("radius_m", "must be positive"))
        except (TypeError, ValueError):
            errors.append(("radius_m", "must be a number"))
        if errors:
            return doc, errors
        stored = dict(doc)
        stored["frame"] = {"w": geometry.width, "h": geometry.height}
        diagnostics = dict(stored.get("diagnostics") or {})
        band_warnings = validate_camera_setting(camera)
        if band_warnings:
            existing = list(diagnostics.get("warnings", []))
            diagnostics["warnings"] = existing + [w for w in band_warnings if w not in existing]
            stored["diagnostics"] = diagnostics
        return stored, []

    return doc, [("mode", f"must be 'tool' or 'auto', got {mode!r}")]


def create_app(engine: Engine, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="proximon", version="0.1.0")

    @app.get("/feeds")
    def list_feeds():
        return engine.states()

    def _worker_or_404(feed_id: str):
        worker = engine.get(feed_id)
        if worker is None:
            return None, JSONResponse(status_code=404, content={"detail": f"no feed {feed_id!r}"})
        return worker, None

    @app.get("/feeds/{feed_id}/frame")
    def get_frame(feed_id: str):
        worker, err = _worker_or_404(feed_id)
        if err:
            return err
        path = worker.config.frame_path
        if not path or not os.path.exists(path):
            return JSONResponse(
                status_code=404, content={"detail": f"feed {feed_id!r} has no still frame"}
            )
        return FileResponse(path)

    @app.get("/feeds/{feed_id}/calibration")
    def get_calibration(feed_id: str):
        worker, err = _worker_or_404(feed_id)
        if err:
            return err
        if worker.config.calibration is None:
            return JSONResponse(
                status_code=404, content={"detail": f"feed {feed_id!r} is not calibrated"}
            )
        return worker.config.calibration

    @app.post("/feeds/{feed_id}/calibration")
    async def post_calibration(feed_id: str, request: Request):
        worker, err = _worker_or_404(feed_id)
        if err:
            return err
        try:
            doc = await request.json()
        except Exception:
            return _field_errors(("body", "request body must be JSON"))
        stored, errors = validate_calibration_document(doc, worker.config.geometry)
        if errors:
            return _field_errors(*errors)
        try:
            worker.set_calibration(stored)
        except EngineError as exc:
            return _field_errors(("document", str(exc)))
        return {"stored": True, "mode": stored["mode"]}

    @app.get("/feeds/{feed_id}/metrics")
    def get_metrics(feed_id: str, horizon: float = Query(default=300.0, gt=0)):
        worker, err = _worker_or_404(feed_id)
        if err:
            return err
        metrics = rolling_metrics(list(worker.summaries), horizon)
        body = metrics.to_dict()
        body["feed"] = feed_id
        body["horizon_s"] = horizon
        return body

    @app.get("/feeds/{feed_id}/overlay")
    def overlay_stream(feed_id: str):
        worker, err = _worker_or_404(feed_id)
        if err:
            return err
        sub = worker.subscribe()

        def events() -> Iterator[str]:
            try:
                if worker.latest_overlay is not None:
                    yield f"data: {dumps(worker.latest_overlay)}\n\n"
                while True:
                    try:
                        kind, line = sub.get(timeout=1.0)
                        if kind == "overlay":
                            yield f"data: {line}\n\n"
                        else:
                            yield f"event: {kind}\ndata: {line}\n\n"
                    except queue.Empty:
                        if worker.status in ("finished", "faulted"):
                            return
                        yield ": keep-alive\n\n"
            finally:
                worker.unsubscribe(sub)

        return StreamingResponse(events(), media_type="text/event-stream")

    @app.get("/capacity")
    def get_capacity(
        aip: float = Query(...), cores: float = Query(...),
        gpu: float = Query(...), sef: float = Query(...),
    ):
        try:
            inputs = CapacityInputs(aip, cores, gpu, sef)
        except EngineError as exc:
            return _field_errors(("query", str(exc)))
        return {"supported_feeds": capacity_estimate(inputs)}

    if ui_dir and os.path.isdir(ui_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
