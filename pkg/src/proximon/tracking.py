"""Tracking-by-detection with a constant-velocity Kalman filter per track.

Association is greedy on IOU between predicted track boxes and the frame's
detections, accepting pairs in descending overlap order. Tracks ride out
short occlusions by coasting on their prediction; a track that stays
unmatched beyond the staleness budget is dropped and its id never reused.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SequencingError
from .model import BoundingBox, FrameDetections, boxes_to_array

_DIM = 6  # (cx, cy, w, h, vcx, vcy)

_F = np.eye(_DIM)
_F[0, 4] = 1.0
_F[1, 5] = 1.0
_H = np.zeros((4, _DIM))
_H[0, 0] = _H[1, 1] = _H[2, 2] = _H[3, 3] = 1.0


def iou(a, b) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ax0, ay0, ax1, ay1 = a.as_tuple() if isinstance(a, BoundingBox) else a
    bx0, by0, bx1, by1 = b.as_tuple() if isinstance(b, BoundingBox) else b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """(N, M) IOU table for two (N, 4) / (M, 4) box arrays."""
    if len(boxes_a) == 0 or len(boxes_b) == 0:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = boxes_a[:, None, :]
    b = boxes_b[None, :, :]
    iw = np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0])
    ih = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    return inter / (area_a + area_b - inter)


@dataclass(frozen=True)
class TrackerConfig:
    iou_min: float = 0.3
    max_staleness: int = 12
    min_hits: int = 3
    process_noise_velocity: float = 1.0   # px^2 / frame^2
    process_noise_size: float = 1.0       # px^2, lets w/h follow slow changes
    measurement_noise: float = 10.0       # px^2 on all measured components
    initial_velocity_variance: float = 1000.0

    def __post_init__(self):
        if not 0.0 < self.iou_min < 1.0:
            raise ValueError(f"iou_min must be in (0, 1), got {self.iou_min}")
        if self.max_staleness < 0:
            raise ValueError(f"max_staleness must be >= 0, got {self.max_staleness}")
        if self.min_hits < 1:
            raise ValueError(f"min_hits must be >= 1, got {self.min_hits}")


def _measurement(box: BoundingBox) -> np.ndarray:
    cx, cy = box.center
    return np.array([cx, cy, box.width, box.height])


class Track:
    """Kalman state of one person; owned and mutated only by its Tracker."""

    __slots__ = ("id", "mean", "cov", "hits", "staleness", "status", "confidence")

    def __init__(self, track_id: int, box: BoundingBox, confidence: float, cfg: TrackerConfig):
        self.id = track_id
        self.mean = np.concatenate([_measurement(box), [0.0, 0.0]])
        self.cov = np.diag(
            [cfg.measurement_noise] * 4
            + [cfg.initial_velocity_variance] * 2
        ).astype(float)
        self.hits = 1
        self.staleness = 0
        self.status = "tentative"
        self.confidence = confidence

    @property
    def box(self) -> BoundingBox:
        cx, cy, w, h = self.mean[:4]
        w = max(w, 1e-3)
        h = max(h, 1e-3)
        return BoundingBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)

    def predict(self, cfg: TrackerConfig) -> None:
        q = np.diag([0.0, 0.0, cfg.process_noise_size, cfg.process_noise_size,
                     cfg.process_noise_velocity, cfg.process_noise_velocity])
        self.mean = _F @ self.mean
        self.cov = _F @ self.cov @ _F.T + q

    def update(self, box: BoundingBox, confidence: float, cfg: TrackerConfig) -> None:
        z = _measurement(box)
        r = np.eye(4) * cfg.measurement_noise
        innovation = z - _H @ self.mean
        s = _H @ self.cov @ _H.T + r
        gain = self.cov @ _H.T @ np.linalg.inv(s)
        self.mean = self.mean + gain @ innovation
        self.cov = (np.eye(_DIM) - gain @ _H) @ self.cov
        self.cov = (self.cov + self.cov.T) / 2.0
        self.hits += 1
        self.staleness = 0
        self.confidence = confidence
        if self.status == "tentative" and self.hits >= cfg.min_hits:
            self.status = "confirmed"


@dataclass(frozen=True)
class TrackSnapshot:
    id: int
    box: BoundingBox
    confidence: float
    staleness: int   # 0 if matched this frame, else frames coasted


class Tracker:
    """One instance per feed; step() must be called in frame order."""

    def __init__(self, config: TrackerConfig = TrackerConfig()):
        self.config = config
        self.tracks: list[Track] = []
        self._next_id = 0
        self._last_frame_index: int | None = None

    def step(self, frame: FrameDetections) -> list[TrackSnapshot]:
        """Advance one frame; returns confirmed tracks (matched or coasting)."""
        if self._last_frame_index is not None and frame.frame_index <= self._last_frame_index:
            raise SequencingError(
                f"frame {frame.frame_index} after frame {self._last_frame_index}"
            )
        self._last_frame_index = frame.frame_index
        cfg = self.config

        for track in self.tracks:
            track.predict(cfg)

        detections = frame.detections
        matched_tracks: set[int] = set()
        matched_dets: set[int] = set()
        if self.tracks and detections:
            table = iou_matrix(
                boxes_to_array([t.box for t in self.tracks]),
                boxes_to_array([d.box for d in detections]),
            )
            order = [
                (ti, di)
                for ti in range(len(self.tracks))
                for di in range(len(detections))
                if table[ti, di] >= cfg.iou_min
            ]
            order.sort(key=lambda td: (-table[td[0], td[1]], td[0], td[1]))
            for ti, di in order:
                if ti in matched_tracks or di in matched_dets:
                    continue
                matched_tracks.add(ti)
                matched_dets.add(di)
                self.tracks[ti].update(detections[di].box, detections[di].confidence, cfg)

        for ti, track in enumerate(self.tracks):
            if ti not in matched_tracks:
                track.staleness += 1
        self.tracks = [t for t in self.tracks if t.staleness <= cfg.max_staleness]

        for di, det in enumerate(detections):
            if di not in matched_dets:
                track = Track(self._next_id, det.box, det.confidence, cfg)
                self._next_id += 1
                if cfg.min_hits <= 1:
                    track.status = "confirmed"
                self.tracks.append(track)

        return [
            TrackSnapshot(t.id, t.box, t.confidence, t.staleness)
            for t in sorted(self.tracks, key=lambda t: t.id)
            if t.status == "confirmed"
        ]
