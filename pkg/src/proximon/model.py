"""Canonical detection data model shared by every stage of the engine.

Image coordinates have their origin at the top-left corner with y growing
downward. Boxes are axis-aligned and stored as (x_min, y_min, x_max, y_max)
in pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, slots=True)
class FrameGeometry:
    """Pixel dimensions of the camera frame."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame geometry must be at least 1x1, got {self.width}x{self.height}")


@dataclass(frozen=True, slots=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    @property
    def feet(self) -> tuple[float, float]:
        """Midpoint of the base edge, used as the person's ground location."""
        return (self.x_min + self.x_max) / 2.0, self.y_max

    def clamped(self, geometry: FrameGeometry) -> "BoundingBox":
        """Clamp to the frame; raises ValueError if nothing is left inside."""
        return BoundingBox(
            min(max(self.x_min, 0.0), geometry.width),
            min(max(self.y_min, 0.0), geometry.height),
            min(max(self.x_max, 0.0), geometry.width),
            min(max(self.y_max, 0.0), geometry.height),
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an (N, 4) float array of (x_min, y_min, x_max, y_max)."""
    if len(boxes) == 0:
        return np.empty((0, 4), dtype=float)
    return np.asarray([b.as_tuple() if isinstance(b, BoundingBox) else b for b in boxes], dtype=float)


@dataclass(frozen=True, slots=True)
class Detection:
    box: BoundingBox
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(slots=True)
class FrameDetections:
    """All detections of one frame, with stream-relative timing."""

    frame_index: int
    timestamp: float
    detections: list[Detection] = field(default_factory=list)

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be non-negative, got {self.frame_index}")
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be non-negative, got {self.timestamp}")
