"""Detector-agnostic pedestrian proximity analytics engine."""

from .model import BoundingBox, Detection, FrameDetections, FrameGeometry
from .camera import CameraParams, GroundPoint, ProximityEllipse
from .birdseye import GroundQuad, HomographyCalibration, ReferenceSegment

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "Detection",
    "FrameDetections",
    "FrameGeometry",
    "CameraParams",
    "GroundPoint",
    "ProximityEllipse",
    "GroundQuad",
    "HomographyCalibration",
    "ReferenceSegment",
    "__version__",
]
