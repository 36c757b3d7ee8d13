"""Detection ingestion: parse and filter per-frame person boxes.

Two interchange formats are accepted so any person detector can feed the
engine:

* batch files in the MOT-challenge detection CSV layout
  ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,...`` (frame is 1-based),
* live newline-delimited JSON, one object per frame:
  ``{"frame": int, "ts": float, "boxes": [[x_min, y_min, x_max, y_max, conf], ...]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, TextIO

from .errors import DetectionParseError, RejectedRecordError
from .model import BoundingBox, Detection, FrameDetections, FrameGeometry


@dataclass(frozen=True)
class IngestConfig:
    fps: float = 25.0                      # time base when the source has no timestamps
    min_confidence: float = 0.3            # detections below this are dropped on ingest
    min_area_px: float = 4.0               # strict mode: drop boxes smaller than this
    aspect_band: tuple[float, float] = (1.0, 6.0)  # strict mode: plausible height/width
    strict: bool = False

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        lo, hi = self.aspect_band
        if not (0 < lo <= hi):
            raise ValueError(f"invalid aspect band {self.aspect_band}")


def parse_detection_record(
    line: str, geometry: FrameGeometry, line_no: int | None = None
) -> tuple[int, Detection]:
    """Parse one MOT-style CSV record into (0-based frame index, Detection).

    A confidence of -1 means "unscored" in the wild and maps to 1.0; other
    values are clamped to [0, 1]. The box is clamped to the frame.
    """
    fields = line.strip().split(",")
    if len(fields) < 7:
        raise DetectionParseError(
            f"expected at least 7 comma-separated fields, got {len(fields)}", line_no
        )
    try:
        frame = int(float(fields[0]))
        left, top, width, height = (float(v) for v in fields[2:6])
        conf = float(fields[6])
    except ValueError as exc:
        raise DetectionParseError(f"non-numeric field ({exc})", line_no) from None
    if frame < 1:
        raise DetectionParseError(f"frame must be >= 1, got {frame}", line_no)
    if width <= 0 or height <= 0:
        raise RejectedRecordError(
            f"non-positive box extent {width}x{height}" + (f" at line {line_no}" if line_no else "")
        )
    box = BoundingBox(left, top, left + width, top + height)
    try:
        box = box.clamped(geometry)
    except ValueError:
        raise RejectedRecordError(
            f"box {box.as_tuple()} lies entirely outside the {geometry.width}x{geometry.height} frame"
        ) from None
    if conf == -1.0:
        conf = 1.0
    conf = min(max(conf, 0.0), 1.0)
    return frame - 1, Detection(box, conf)


def serialize_detection_record(frame_index: int, det: Detection, track_id: int = -1) -> str:
    """Inverse of parse_detection_record (0-based index back to 1-based frame)."""
    b = det.box
    return (
        f"{frame_index + 1},{track_id},{b.x_min!r},{b.y_min!r},"
        f"{b.width!r},{b.height!r},{det.confidence!r},-1,-1,-1"
    )


def validate_frame(
    fd: FrameDetections, geometry: FrameGeometry, config: IngestConfig = IngestConfig()
) -> FrameDetections:
    """Drop implausible boxes; a pure filter, idempotent, never raises.

    With strict mode off every detection passes. Strict mode drops boxes whose
    clamped area falls below ``min_area_px`` or whose height/width ratio lies
    outside ``aspect_band`` (an automated-calibration consumer needs clean
    person boxes, so silhouettes that cannot be standing people are removed).
    """
    if not config.strict or not fd.detections:
        return fd
    lo, hi = config.aspect_band
    kept = []
    for det in fd.detections:
        box = det.box.clamped(geometry)
        if box.area < config.min_area_px:
            continue
        if not lo <= box.height / box.width <= hi:
            continue
        kept.append(det)
    return FrameDetections(fd.frame_index, fd.timestamp, kept)


def parse_live_record(line: str, geometry: FrameGeometry, line_no: int | None = None) -> FrameDetections:
    """Parse one live-mode JSON object into a FrameDetections."""
    try:
        obj = json.loads(line)
        frame = int(obj["frame"])
        ts = float(obj["ts"])
        raw_boxes = obj["boxes"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DetectionParseError(f"bad live record ({exc})", line_no) from None
    dets = []
    for vals in raw_boxes:
        if len(vals) != 5:
            raise DetectionParseError(f"live box needs 5 values, got {len(vals)}", line_no)
        x_min, y_min, x_max, y_max, conf = (float(v) for v in vals)
        if x_max <= x_min or y_max <= y_min:
            raise RejectedRecordError(f"non-positive box extent in live record at line {line_no}")
        try:
            box = BoundingBox(x_min, y_min, x_max, y_max).clamped(geometry)
        except ValueError:
            raise RejectedRecordError("live box lies entirely outside the frame") from None
        dets.append(Detection(box, min(max(conf, 0.0), 1.0) if conf != -1.0 else 1.0))
    return FrameDetections(frame, ts, dets)


def read_detection_file(
    path_or_lines: str | Iterable[str],
    geometry: FrameGeometry,
    config: IngestConfig = IngestConfig(),
) -> Iterator[FrameDetections]:
    """Stream frames from a MOT detection CSV, in frame order with no gaps.

    Frames absent from the file are emitted empty so downstream staleness
    accounting sees every tick. Timestamps are synthesized as
    frame_index / fps. Records failing the confidence floor are dropped here.
    """
    if isinstance(path_or_lines, str):
        with open(path_or_lines, "r", encoding="utf-8", newline=None) as fh:
            yield from read_detection_file(fh, geometry, config)
        return
    per_frame: dict[int, list[Detection]] = {}
    last = -1
    for line_no, line in enumerate(path_or_lines, start=1):
        if not line.strip():
            continue
        frame_index, det = parse_detection_record(line, geometry, line_no)
        last = max(last, frame_index)  # a sub-threshold record still marks the frame
        if det.confidence < config.min_confidence:
            continue
        per_frame.setdefault(frame_index, []).append(det)
    for frame_index in range(last + 1):
        fd = FrameDetections(frame_index, frame_index / config.fps, per_frame.get(frame_index, []))
        yield validate_frame(fd, geometry, config)


def read_live_stream(
    stream: TextIO | Iterable[str],
    geometry: FrameGeometry,
    config: IngestConfig = IngestConfig(),
) -> Iterator[FrameDetections]:
    """Stream frames from newline-delimited JSON (stdin or a socket file)."""
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        fd = parse_live_record(line, geometry, line_no)
        fd.detections = [d for d in fd.detections if d.confidence >= config.min_confidence]
        yield validate_frame(fd, geometry, config)
