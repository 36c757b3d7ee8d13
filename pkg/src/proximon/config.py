"""Engine configuration files: a JSON (or, on Python 3.11+, TOML) document
listing feeds with their sources, calibrations, and thresholds.

Example:

    {
      "feeds": [
        {
          "id": "gate-a",
          "source": "gate_a.csv",
          "fps": 10,
          "geometry": {"w": 1920, "h": 1080},
          "calibration": "gate_a_calibration.json",
          "frame": "gate_a_still.jpg",
          "ingest": {"min_confidence": 0.3, "strict": true},
          "tracker": {"iou_min": 0.3, "max_staleness": 12, "min_hits": 3},
          "compliance": {
            "window_span_s": 30, "high_risk_threshold_s": 5, "horizon_s": 300,
            "alerts": {"high_risk_pairs": 5}, "rearm_after": 1
          },
          "blur_fraction": 0.2,
          "live": false
        }
      ]
    }

Relative paths resolve against the config file's directory; "calibration"
may also be the document itself inline.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields

from .errors import ConfigurationError
from .ingest import IngestConfig
from .model import FrameGeometry
from .pipeline import ComplianceConfig, FeedConfig
from .tracking import TrackerConfig

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter version
    tomllib = None


@dataclass
class EngineConfig:
    feeds: list[FeedConfig]
    host: str = "127.0.0.1"
    port: int = 8000


def _load_document(path: str) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".toml"):
        if tomllib is None:
            raise ConfigurationError(
                "TOML config files need Python 3.11+; use the JSON form instead"
            )
        return tomllib.loads(raw.decode("utf-8"))
    try:
        return json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None


def _resolve(base_dir: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def _build_dataclass(cls, raw: dict, context: str):
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"{context}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{context}: {exc}") from None


def parse_feed(raw: dict, base_dir: str) -> FeedConfig:
    if "id" not in raw:
        raise ConfigurationError("feed entry missing 'id'")
    feed_id = str(raw["id"])
    context = f"feed {feed_id!r}"
    if "source" not in raw:
        raise ConfigurationError(f"{context}: missing 'source'")
    if "geometry" not in raw or not {"w", "h"} <= set(raw["geometry"]):
        raise ConfigurationError(f"{context}: geometry needs 'w' and 'h'")
    geometry = FrameGeometry(int(raw["geometry"]["w"]), int(raw["geometry"]["h"]))

    calibration = raw.get("calibration")
    if isinstance(calibration, str):
        calibration = _load_document(_resolve(base_dir, calibration))
    elif calibration is not None and not isinstance(calibration, dict):
        raise ConfigurationError(f"{context}: calibration must be a path or a document")

    fps = float(raw.get("fps", 25.0))
    ingest_raw = dict(raw.get("ingest", {}))
    ingest_raw.setdefault("fps", fps)
    if "aspect_band" in ingest_raw:
        ingest_raw["aspect_band"] = tuple(ingest_raw["aspect_band"])
    compliance_raw = dict(raw.get("compliance", {}))
    if "alerts" in compliance_raw:
        compliance_raw["alert_thresholds"] = {
            str(k): float(v) for k, v in compliance_raw.pop("alerts").items()
        }

    source = raw["source"]
    if source != "-":
        source = _resolve(base_dir, source)
    frame_path = raw.get("frame")
    if frame_path:
        frame_path = _resolve(base_dir, frame_path)
    alert_command = raw.get("alert_command")
    if alert_command is not None:
        if isinstance(alert_command, str):
            alert_command = [alert_command]
        alert_command = [str(a) for a in alert_command]

    return FeedConfig(
        feed_id=feed_id,
        source=source,
        geometry=geometry,
        calibration=calibration,
        fps=fps,
        live=bool(raw.get("live", False)),
        ingest=_build_dataclass(IngestConfig, ingest_raw, f"{context} ingest"),
        tracker=_build_dataclass(TrackerConfig, dict(raw.get("tracker", {})), f"{context} tracker"),
        compliance=_build_dataclass(ComplianceConfig, compliance_raw, f"{context} compliance"),
        frame_path=frame_path,
        blur_fraction=float(raw.get("blur_fraction", 0.2)),
        queue_size=int(raw.get("queue_size", 64)),
        alert_command=alert_command,
    )


def load_config(path: str) -> EngineConfig:
    doc = _load_document(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    raw_feeds = doc.get("feeds")
    if not isinstance(raw_feeds, list) or not raw_feeds:
        raise ConfigurationError(f"{path}: config needs a non-empty 'feeds' list")
    feeds = [parse_feed(raw, base_dir) for raw in raw_feeds]
    return EngineConfig(
        feeds=feeds,
        host=str(doc.get("host", "127.0.0.1")),
        port=int(doc.get("port", 8000)),
    )
