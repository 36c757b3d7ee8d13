"""Monocular ground-plane camera model for automated calibration.

The camera is described by three parameters: height above the ground,
vertical field of view, and downward tilt. Pixel rows map linearly to
vertical view angles, so a row y carries the angle (0.5 - y/H) * vfov above
the optical axis. From a person's bounding box the model recovers:

* the real-world height implied by the box (the fitting signal),
* the feet location on the ground in camera-centered meters,
* the image-plane ellipse that a fixed-radius ground circle around the feet
  projects to.

All per-box computations are vectorized over (N, 4) box arrays; scalar
wrappers are provided for single boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import HorizonError
from .model import BoundingBox, FrameGeometry, boxes_to_array

HORIZON_SIN_EPS = 1e-6

# Deployment guidance bands: camera height, tilt and working distance ranges
# within which the height model is reliable in practice.
IDEAL_HEIGHT_M = (2.5, 5.0)
IDEAL_TILT_RAD = (math.radians(5.0), math.radians(45.0))
IDEAL_DISTANCE_M = (10.0, 30.0)


@dataclass(frozen=True)
class CameraParams:
    """height_m above ground, vertical field of view and downward tilt in radians."""

    height_m: float
    vfov_rad: float
    tilt_rad: float

    def __post_init__(self):
        if self.height_m <= 0:
            raise ValueError(f"camera height must be positive, got {self.height_m}")
        if not 0 < self.vfov_rad < math.pi:
            raise ValueError(f"vertical FOV must be in (0, pi), got {self.vfov_rad}")
        if not 0 < self.tilt_rad < math.pi / 2:
            raise ValueError(f"tilt must be in (0, pi/2), got {self.tilt_rad}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.height_m, self.vfov_rad, self.tilt_rad)


@dataclass(frozen=True)
class GroundPoint:
    """Camera-centered ground coordinates: signed lateral offset and forward depth."""

    lateral_m: float
    depth_m: float


@dataclass(frozen=True)
class ProximityEllipse:
    """Image-plane projection of a ground circle around a person's feet."""

    center: tuple[float, float]
    semi_major_px: float
    semi_minor_px: float
    radius_m: float = 1.0


def validate_camera_setting(camera: CameraParams, mean_depth_m: float | None = None) -> list[str]:
    """One warning string per deployment band the setup violates."""
    warnings = []
    lo, hi = IDEAL_HEIGHT_M
    if not lo <= camera.height_m <= hi:
        warnings.append(
            f"camera height {camera.height_m:.2f} m outside the ideal {lo}-{hi} m band"
        )
    lo, hi = IDEAL_TILT_RAD
    if not lo <= camera.tilt_rad <= hi:
        warnings.append(
            f"camera tilt {math.degrees(camera.tilt_rad):.1f} deg outside the ideal "
            f"{math.degrees(lo):.0f}-{math.degrees(hi):.0f} deg band"
        )
    if mean_depth_m is not None:
        lo, hi = IDEAL_DISTANCE_M
        if not lo <= mean_depth_m <= hi:
            warnings.append(
                f"mean camera-person distance {mean_depth_m:.1f} m outside the ideal {lo}-{hi} m band"
            )
    return warnings


def _row_pitch(y: np.ndarray, camera: CameraParams, geom: FrameGeometry) -> np.ndarray:
    """View angle above the optical axis for pixel row y."""
    return (0.5 - y / geom.height) * camera.vfov_rad


def _lateral_tangent(
    x_min: np.ndarray, x_max: np.ndarray, pitch: np.ndarray, camera: CameraParams, geom: FrameGeometry
) -> np.ndarray:
    """Tangent of the horizontal offset angle of the box center at a given pitch."""
    offset = (x_min + x_max - geom.width) / (2.0 * geom.height)
    return 4.0 * offset * np.cos(pitch) * np.tan(camera.vfov_rad / 2.0)


def estimated_heights(
    boxes: np.ndarray, camera: CameraParams, geom: FrameGeometry
) -> tuple[np.ndarray, np.ndarray]:
    """Real-world height in meters implied by each box under the camera model.

    Returns (heights, valid). A box is invalid when its head ray does not
    descend to the ground (sin(tilt - pitch) <= eps); its height entry is NaN.

    The lateral term is squared as a whole, making the square root a secant
    correction for boxes off the vertical center plane.
    """
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    x_min, y_min, x_max, y_max = boxes.T
    h_m, vfov, tilt = camera.as_tuple()
    pitch = _row_pitch(y_min, camera, geom)
    sin_drop = np.sin(tilt - pitch)
    valid = sin_drop > HORIZON_SIN_EPS
    lat = _lateral_tangent(x_min, x_max, pitch, camera, geom)
    with np.errstate(divide="ignore", invalid="ignore"):
        heights = (
            2.0
            * np.sqrt(1.0 + lat**2)
            * (h_m / sin_drop)
            * np.cos(pitch)
            * np.tan(vfov / 2.0)
            * (y_max - y_min)
            / geom.height
        )
    heights = np.where(valid, heights, np.nan)
    return heights, valid


def ground_positions(
    boxes: np.ndarray, camera: CameraParams, geom: FrameGeometry
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Feet locations on the ground: (lateral_m, depth_m, valid) arrays.

    The feet ray must descend (tilt - feet pitch in (0, pi/2)); boxes whose
    feet sit at or above the horizon are flagged invalid.
    """
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    x_min, _, x_max, y_max = boxes.T
    h_m, _, tilt = camera.as_tuple()
    pitch = _row_pitch(y_max, camera, geom)
    drop = tilt - pitch
    sin_drop = np.sin(drop)
    valid = (sin_drop > HORIZON_SIN_EPS) & (drop < math.pi / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = h_m / np.tan(drop)
        slant = h_m / sin_drop
        lateral = slant * _lateral_tangent(x_min, x_max, pitch, camera, geom)
    depth = np.where(valid, depth, np.nan)
    lateral = np.where(valid, lateral, np.nan)
    return lateral, depth, valid


def proximity_ellipses(
    boxes: np.ndarray, camera: CameraParams, geom: FrameGeometry, radius_m: float = 1.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Image ellipses of radius_m ground circles around each box's feet.

    Returns (centers (N,2), semi_major_px, semi_minor_px, valid). The major
    radius shrinks inversely with the slant range; the minor radius is the
    major foreshortened by the feet ray's descent angle.
    """
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    x_min, _, x_max, y_max = boxes.T
    h_m, vfov, tilt = camera.as_tuple()
    pitch = _row_pitch(y_max, camera, geom)
    drop = tilt - pitch
    sin_drop = np.sin(drop)
    valid = (sin_drop > HORIZON_SIN_EPS) & (drop < math.pi / 2)
    focal_px = (geom.height / 2.0) / math.tan(vfov / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        slant = h_m / sin_drop
        semi_major = radius_m * focal_px / slant
        semi_minor = semi_major * sin_drop
    centers = np.column_stack([(x_min + x_max) / 2.0, y_max])
    semi_major = np.where(valid, semi_major, np.nan)
    semi_minor = np.where(valid, semi_minor, np.nan)
    return centers, semi_major, semi_minor, valid


def estimated_height(box: BoundingBox, camera: CameraParams, geom: FrameGeometry) -> float:
    heights, valid = estimated_heights(boxes_to_array([box]), camera, geom)
    if not valid[0]:
        raise HorizonError(f"head row of {box.as_tuple()} looks at or above the horizon")
    return float(heights[0])


def ground_position(box: BoundingBox, camera: CameraParams, geom: FrameGeometry) -> GroundPoint:
    lateral, depth, valid = ground_positions(boxes_to_array([box]), camera, geom)
    if not valid[0]:
        raise HorizonError(f"feet row of {box.as_tuple()} looks at or above the horizon")
    return GroundPoint(float(lateral[0]), float(depth[0]))


def proximity_ellipse(
    box: BoundingBox, camera: CameraParams, geom: FrameGeometry, radius_m: float = 1.0
) -> ProximityEllipse:
    centers, major, minor, valid = proximity_ellipses(boxes_to_array([box]), camera, geom, radius_m)
    if not valid[0]:
        raise HorizonError(f"feet row of {box.as_tuple()} looks at or above the horizon")
    return ProximityEllipse(
        (float(centers[0, 0]), float(centers[0, 1])), float(major[0]), float(minor[0]), radius_m
    )


@dataclass(frozen=True)
class AutoViolations:
    pairs: frozenset[tuple[int, int]]
    ellipses: tuple[ProximityEllipse | None, ...]
    excluded: tuple[int, ...]
    ground: tuple[GroundPoint | None, ...]


def auto_violations(
    boxes, camera: CameraParams, geom: FrameGeometry, radius_m: float = 1.0
) -> AutoViolations:
    """Pairs whose ground distance is strictly below 2 * radius_m.

    Overlap of two projected circles of radius r is equivalent, under the
    exact ground-plane model, to their centers being closer than 2r, so the
    check runs in ground coordinates. Ellipses are returned per person for
    overlay rendering (None where the feet ray misses the ground; those
    people are excluded from pairing).
    """
    arr = boxes_to_array(boxes)
    if len(arr) == 0:
        return AutoViolations(frozenset(), (), (), ())
    lateral, depth, valid = ground_positions(arr, camera, geom)
    centers, major, minor, evalid = proximity_ellipses(arr, camera, geom, radius_m)
    pairs = set()
    idx = np.flatnonzero(valid)
    if len(idx) >= 2:
        lat, dep = lateral[idx], depth[idx]
        dist = np.hypot(lat[:, None] - lat[None, :], dep[:, None] - dep[None, :])
        ii, jj = np.triu_indices(len(idx), k=1)
        hits = dist[ii, jj] < 2.0 * radius_m
        for a, b in zip(ii[hits], jj[hits]):
            pairs.add((int(idx[a]), int(idx[b])))
    ellipses = tuple(
        ProximityEllipse((float(centers[i, 0]), float(centers[i, 1])), float(major[i]),
                         float(minor[i]), radius_m)
        if evalid[i] else None
        for i in range(len(arr))
    )
    ground = tuple(
        GroundPoint(float(lateral[i]), float(depth[i])) if valid[i] else None
        for i in range(len(arr))
    )
    return AutoViolations(
        frozenset(pairs), ellipses, tuple(int(i) for i in np.flatnonzero(~valid)), ground
    )
