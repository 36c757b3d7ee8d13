"""Automated camera calibration from accumulated person boxes.

As people move toward or away from the camera their boxes shrink and grow;
fitting the camera parameters so the implied real-world heights cluster at a
nominal adult height recovers height, field of view, and tilt without any
operator input. The search is a bounded derivative-free simplex over
normalized coordinates, restarted at the incumbent until it stops improving
or the evaluation budget runs out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .camera import (
    HORIZON_SIN_EPS,
    CameraParams,
    estimated_heights,
    ground_positions,
    validate_camera_setting,
)
from .errors import ConfigurationError, NotEnoughDataError
from .model import FrameGeometry

# Search box: deployment guidance bands widened by 50%. The FOV band is not
# part of the published guidance; 30-90 deg covers common surveillance lenses
# and widens the same way. The tilt floor is clipped to stay in (0, pi/2).
DEFAULT_BOUNDS = (
    (1.875, 5.625),                                   # height, m
    (math.radians(15.0), math.radians(105.0)),        # vertical FOV
    (math.radians(1.0), math.radians(55.0)),          # tilt
)
DEFAULT_START = (3.75, math.radians(60.0), math.radians(25.0))


@dataclass(frozen=True)
class FitConfig:
    nominal_height_m: float = 1.70
    min_samples: int = 200
    min_head_row_spread: float = 0.15   # required y_min span as a fraction of H
    bounds: tuple[tuple[float, float], ...] = DEFAULT_BOUNDS
    start: tuple[float, float, float] = DEFAULT_START
    simplex_tol: float = 1e-4           # normalized-coordinate simplex diameter
    max_evaluations: int = 2000
    residual_cap_m: float = 10.0        # caps per-sample residuals; invalid samples score the cap
    low_confidence_std_m: float = 0.25
    min_depth_m: float = 2.0            # people closer than this are unreliable; refit without them

    def __post_init__(self):
        if self.min_samples < 2:
            raise ConfigurationError("min_samples must be at least 2")
        for (lo, hi), s in zip(self.bounds, self.start):
            if not lo < s < hi:
                raise ConfigurationError(f"start {s} outside bound ({lo}, {hi})")


@dataclass
class FitDiagnostics:
    loss: float
    samples: int
    height_std_m: float
    warnings: list[str] = field(default_factory=list)
    evaluations: int = 0
    restarts: int = 0
    near_camera_dropped: int = 0
    # which algebraic grouping of the lateral term the height model uses
    grouping: str = "squared-full-lateral-product"

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "samples": self.samples,
            "height_std_m": self.height_std_m,
            "warnings": list(self.warnings),
            "evaluations": self.evaluations,
            "restarts": self.restarts,
            "near_camera_dropped": self.near_camera_dropped,
            "grouping": self.grouping,
        }


def _capped_loss(boxes: np.ndarray, camera: CameraParams, geom: FrameGeometry, cfg: FitConfig) -> float:
    heights, valid = estimated_heights(boxes, camera, geom)
    cap = cfg.residual_cap_m
    residual = np.where(
        valid, np.clip(np.nan_to_num(heights, nan=cap) - cfg.nominal_height_m, -cap, cap), cap
    )
    return float(np.mean(residual * residual))


def _simplex_search(
    boxes: np.ndarray, geom: FrameGeometry, cfg: FitConfig
) -> tuple[np.ndarray, float, int, int]:
    lo = np.array([b[0] for b in cfg.bounds])
    hi = np.array([b[1] for b in cfg.bounds])
    span = hi - lo

    def objective(z: np.ndarray) -> float:
        x = lo + np.clip(z, 0.0, 1.0) * span
        return _capped_loss(boxes, CameraParams(*x), geom, cfg)

    z = (np.asarray(cfg.start) - lo) / span
    evaluations = 0
    restarts = 0
    best_fun = math.inf
    best_z = z
    while evaluations < cfg.max_evaluations:
        result = minimize(
            objective,
            z,
            method="Nelder-Mead",
            bounds=[(0.0, 1.0)] * 3,
            options={
                "xatol": cfg.simplex_tol,
                "fatol": 1e-14,
                "maxfev": cfg.max_evaluations - evaluations,
            },
        )
        evaluations += result.nfev
        improved = best_fun - result.fun > 1e-14
        if result.fun < best_fun:
            best_fun, best_z = result.fun, result.x
        if not improved:
            break
        z = result.x
        restarts += 1
    return lo + np.clip(best_z, 0.0, 1.0) * span, best_fun, evaluations, restarts


def fit_camera_params(
    boxes, geom: FrameGeometry, config: FitConfig = FitConfig()
) -> tuple[CameraParams, FitDiagnostics]:
    """Fit (height, FOV, tilt) to a sample of person boxes.

    Minimizes the mean squared deviation of the per-box implied heights from
    the nominal height. Boxes whose head ray misses the ground at a candidate
    parameter point contribute the residual cap instead, which keeps the
    objective finite and pushes the search back into the geometrically valid
    region; at the optimum all surviving samples are valid so the objective
    coincides with the plain mean squared deviation.

    Raises NotEnoughDataError when fewer than config.min_samples boxes are
    given or their head rows span less than config.min_head_row_spread of the
    frame height (a single-depth crowd cannot pin the parameters).
    """
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    if len(boxes) < config.min_samples:
        raise NotEnoughDataError(
            f"need at least {config.min_samples} sample boxes, got {len(boxes)}"
        )
    spread = (boxes[:, 1].max() - boxes[:, 1].min()) / geom.height
    if spread < config.min_head_row_spread:
        raise NotEnoughDataError(
            f"head rows span {spread:.1%} of the frame height; "
            f"need {config.min_head_row_spread:.0%} for depth diversity"
        )

    x, loss, evaluations, restarts = _simplex_search(boxes, geom, config)
    camera = CameraParams(*x)
    diagnostics = FitDiagnostics(loss=loss, samples=len(boxes), height_std_m=0.0,
                                 evaluations=evaluations, restarts=restarts)

    # People very close to the camera distort the fit; drop them and refit once.
    _, depth, valid = ground_positions(boxes, camera, geom)
    near = valid & (depth < config.min_depth_m)
    if near.any() and (~near).sum() >= config.min_samples:
        boxes = boxes[~near]
        diagnostics.near_camera_dropped = int(near.sum())
        x, loss, ev2, re2 = _simplex_search(boxes, geom, config)
        camera = CameraParams(*x)
        diagnostics.loss = loss
        diagnostics.samples = len(boxes)
        diagnostics.evaluations += ev2
        diagnostics.restarts += re2

    heights, valid = estimated_heights(boxes, camera, geom)
    if valid.any():
        diagnostics.height_std_m = float(np.std(heights[valid] - config.nominal_height_m))
    lo = np.array([b[0] for b in config.bounds])
    hi = np.array([b[1] for b in config.bounds])
    at_bound = (np.asarray(x) - lo < 1e-6 * (hi - lo)) | (hi - np.asarray(x) < 1e-6 * (hi - lo))
    if at_bound.any():
        names = np.array(["height", "vfov", "tilt"])[at_bound]
        diagnostics.warnings.append(f"optimizer terminated at a bound for: {', '.join(names)}")
    if diagnostics.height_std_m > config.low_confidence_std_m:
        diagnostics.warnings.append(
            f"low confidence: residual height std {diagnostics.height_std_m:.3f} m "
            f"exceeds {config.low_confidence_std_m} m"
        )
    _, depth, dvalid = ground_positions(boxes, camera, geom)
    mean_depth = float(np.mean(depth[dvalid])) if dvalid.any() else None
    diagnostics.warnings.extend(validate_camera_setting(camera, mean_depth))
    return camera, diagnostics


def collect_samples(frames, geom: FrameGeometry) -> np.ndarray:
    """Flatten an iterable of FrameDetections into an (N, 4) sample array."""
    rows = [det.box.as_tuple() for fd in frames for det in fd.detections]
    if not rows:
        return np.empty((0, 4), dtype=float)
    return np.asarray(rows, dtype=float)


@dataclass(frozen=True)
class AutoCalibration:
    """Fitted camera plus the proximity radius, ready for the violation stage."""

    camera: CameraParams
    geometry: FrameGeometry
    radius_m: float = 1.0
    diagnostics: FitDiagnostics | None = None

    def __post_init__(self):
        if self.radius_m <= 0:
            raise ConfigurationError(f"radius must be positive, got {self.radius_m}")

    def to_document(self) -> dict:
        doc = {
            "mode": "auto",
            "x0_m": self.camera.height_m,
            "x1_rad": self.camera.vfov_rad,
            "x2_rad": self.camera.tilt_rad,
            "radius_m": self.radius_m,
            "frame": {"w": self.geometry.width, "h": self.geometry.height},
        }
        if self.diagnostics is not None:
            doc["diagnostics"] = self.diagnostics.to_dict()
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "AutoCalibration":
        if doc.get("mode") != "auto":
            raise ConfigurationError(f"expected mode 'auto', got {doc.get('mode')!r}")
        try:
            camera = CameraParams(float(doc["x0_m"]), float(doc["x1_rad"]), float(doc["x2_rad"]))
            radius = float(doc.get("radius_m", 1.0))
            geometry = FrameGeometry(int(doc["frame"]["w"]), int(doc["frame"]["h"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad auto calibration document: {exc}") from None
        diag = None
        if isinstance(doc.get("diagnostics"), dict):
            d = doc["diagnostics"]
            diag = FitDiagnostics(
                loss=float(d.get("loss", 0.0)),
                samples=int(d.get("samples", 0)),
                height_std_m=float(d.get("height_std_m", 0.0)),
                warnings=list(d.get("warnings", [])),
                evaluations=int(d.get("evaluations", 0)),
                restarts=int(d.get("restarts", 0)),
                near_camera_dropped=int(d.get("near_camera_dropped", 0)),
                grouping=str(d.get("grouping", "squared-full-lateral-product")),
            )
        return cls(camera, geometry, radius, diag)
