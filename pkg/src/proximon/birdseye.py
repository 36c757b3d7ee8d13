"""Tool-based calibration: ground-plane homography and bird's-eye distances.

An operator marks a ground-plane quadrilateral in the perspective view plus
one or more reference segments of known real length. The quad-to-rectangle
homography warps feet points to an overhead view where pixel distances are
proportional to metric distances; the references fix the pixels-per-meter
scale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, HorizonError, SingularQuadError
from .model import FrameGeometry

HORIZON_EPS = 1e-12


class CalibrationQualityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GroundQuad:
    """Four image points in consistent winding order: TL, TR, BR, BL."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (4, 2):
            raise SingularQuadError(f"need exactly 4 points, got shape {pts.shape}")
        # no three collinear, and convex (consecutive edge cross products share sign)
        crosses = []
        for i in range(4):
            a, b, c = pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]
            e1, e2 = b - a, c - b
            crosses.append(float(e1[0] * e2[1] - e1[1] * e2[0]))
        for i, cr in enumerate(crosses):
            if abs(cr) < 1e-9:
                trio = [self.points[i], self.points[(i + 1) % 4], self.points[(i + 2) % 4]]
                raise SingularQuadError(f"collinear points {trio}")
        if not (all(c > 0 for c in crosses) or all(c < 0 for c in crosses)):
            raise SingularQuadError(f"non-convex quadrilateral {self.points}")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)


@dataclass(frozen=True)
class ReferenceSegment:
    p0: tuple[float, float]
    p1: tuple[float, float]
    real_length_m: float

    def __post_init__(self):
        if self.p0 == self.p1:
            raise ConfigurationError("reference segment endpoints coincide")
        if self.real_length_m <= 0:
            raise ConfigurationError(f"reference length must be positive, got {self.real_length_m}")


def default_target_rect(quad: GroundQuad) -> np.ndarray:
    """Axis-aligned rectangle sized from the quad's mean edge lengths."""
    p = quad.as_array()
    w = (np.linalg.norm(p[1] - p[0]) + np.linalg.norm(p[2] - p[3])) / 2.0
    h = (np.linalg.norm(p[3] - p[0]) + np.linalg.norm(p[2] - p[1])) / 2.0
    return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])


def compute_homography(quad: GroundQuad, target_rect) -> np.ndarray:
    """Solve the 4-correspondence direct linear system for the 3x3 map.

    The normalization fixes M[2][2] = 1, leaving 8 unknowns and 8 equations.
    """
    src = quad.as_array()
    dst = np.asarray(target_rect, dtype=float)
    if dst.shape != (4, 2):
        raise ConfigurationError(f"target rectangle needs 4 corners, got shape {dst.shape}")
    d1, d2 = dst[1] - dst[0], dst[2] - dst[0]
    if abs(d1[0] * d2[1] - d1[1] * d2[0]) < 1e-12:
        raise ConfigurationError("degenerate target rectangle")
    A = np.zeros((8, 8))
    rhs = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        A[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        A[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        rhs[2 * i] = u
        rhs[2 * i + 1] = v
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        raise SingularQuadError(f"singular correspondence system for quad {quad.points}") from None
    M = np.append(sol, 1.0).reshape(3, 3)
    if abs(np.linalg.det(M)) < 1e-12:
        raise SingularQuadError(f"homography from quad {quad.points} is singular")
    return M


def warp_point(M: np.ndarray, p) -> tuple[float, float]:
    x, y = p
    hx, hy, hw = M @ (x, y, 1.0)
    if abs(hw) < HORIZON_EPS:
        raise HorizonError(f"point {p} maps to the line at infinity")
    return hx / hw, hy / hw


def warp_points(M: np.ndarray, pts) -> tuple[np.ndarray, np.ndarray]:
    """Warp an (N, 2) array; returns warped points and a finite-result mask."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    hom = np.column_stack([pts, np.ones(len(pts))]) @ M.T
    w = hom[:, 2]
    valid = np.abs(w) >= HORIZON_EPS
    out = np.full_like(pts, np.nan)
    out[valid] = hom[valid, :2] / w[valid, None]
    return out, valid


def scale_from_references(M: np.ndarray, refs: list[ReferenceSegment]) -> float:
    """Mean pixels-per-meter over the warped reference segments.

    References disagreeing by more than 15% trigger a CalibrationQualityWarning;
    the mean is still returned.
    """
    if not refs:
        raise ConfigurationError("at least one reference segment is required")
    ratios = []
    for ref in refs:
        a = warp_point(M, ref.p0)
        b = warp_point(M, ref.p1)
        ratios.append(float(np.hypot(a[0] - b[0], a[1] - b[1])) / ref.real_length_m)
    if len(ratios) > 1 and (max(ratios) - min(ratios)) / max(ratios) > 0.15:
        warnings.warn(
            f"reference scales disagree by more than 15%: {ratios}", CalibrationQualityWarning
        )
    return float(np.mean(ratios))


@dataclass(frozen=True)
class HomographyCalibration:
    """Immutable image -> bird's-eye transform with metric scale."""

    matrix: np.ndarray
    scale_px_per_m: float
    threshold_m: float = 2.0
    quad: GroundQuad | None = None
    rect: np.ndarray | None = None
    geometry: FrameGeometry | None = None

    def __post_init__(self):
        if abs(np.linalg.det(self.matrix)) < 1e-12:
            raise SingularQuadError("calibration matrix is singular")
        if self.scale_px_per_m <= 0:
            raise ConfigurationError(f"scale must be positive, got {self.scale_px_per_m}")
        if self.threshold_m <= 0:
            raise ConfigurationError(f"threshold must be positive, got {self.threshold_m}")

    @classmethod
    def from_quad(
        cls,
        quad: GroundQuad,
        refs: list[ReferenceSegment],
        target_rect=None,
        threshold_m: float = 2.0,
        geometry: FrameGeometry | None = None,
    ) -> "HomographyCalibration":
        rect = default_target_rect(quad) if target_rect is None else np.asarray(target_rect, float)
        M = compute_homography(quad, rect)
        scale = scale_from_references(M, refs)
        return cls(M, scale, threshold_m, quad=quad, rect=rect, geometry=geometry)

    def to_document(self) -> dict:
        doc = {
            "mode": "tool",
            "quad": [list(p) for p in self.quad.points] if self.quad else None,
            "rect": self.rect.tolist() if self.rect is not None else None,
            "matrix": self.matrix.tolist(),
            "scale_px_per_m": self.scale_px_per_m,
            "threshold_m": self.threshold_m,
        }
        if self.geometry is not None:
            doc["frame"] = {"w": self.geometry.width, "h": self.geometry.height}
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "HomographyCalibration":
        if doc.get("mode") != "tool":
            raise ConfigurationError(f"expected mode 'tool', got {doc.get('mode')!r}")
        try:
            matrix = np.asarray(doc["matrix"], dtype=float).reshape(3, 3)
            scale = float(doc["scale_px_per_m"])
            threshold = float(doc.get("threshold_m", 2.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad tool calibration document: {exc}") from None
        quad = None
        if doc.get("quad"):
            quad = GroundQuad(tuple(tuple(map(float, p)) for p in doc["quad"]))
        rect = np.asarray(doc["rect"], dtype=float) if doc.get("rect") else None
        geometry = None
        if doc.get("frame"):
            geometry = FrameGeometry(int(doc["frame"]["w"]), int(doc["frame"]["h"]))
        return cls(matrix, scale, threshold, quad=quad, rect=rect, geometry=geometry)


@dataclass(frozen=True)
class BirdseyeViolations:
    pairs: frozenset[tuple[int, int]]
    excluded: tuple[int, ...] = ()  # indices whose feet point hit the horizon
    ground_xy_m: np.ndarray | None = field(default=None, compare=False)


def birdseye_violations(cal: HomographyCalibration, feet_points) -> BirdseyeViolations:
    """Pairs (i, j), i < j, closer than cal.threshold_m in the bird's-eye view.

    The comparison is strict: a pair at exactly the threshold distance is
    compliant. Feet points that warp to the horizon are excluded from pairing
    and reported in `excluded`.
    """
    pts = np.asarray(feet_points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return BirdseyeViolations(frozenset())
    warped, valid = warp_points(cal.matrix, pts)
    ground = warped / cal.scale_px_per_m
    idx = np.flatnonzero(valid)
    pairs = set()
    if len(idx) >= 2:
        sub = ground[idx]
        diff = sub[:, None, :] - sub[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        ii, jj = np.triu_indices(len(idx), k=1)
        for a, b in zip(ii[dist[ii, jj] < cal.threshold_m], jj[dist[ii, jj] < cal.threshold_m]):
            pairs.add((int(idx[a]), int(idx[b])))
    return BirdseyeViolations(
        frozenset(pairs), tuple(int(i) for i in np.flatnonzero(~valid)), ground_xy_m=ground
    )
