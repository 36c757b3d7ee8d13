"""Synthetic scene generation: the ground-truth oracle for the whole engine.

People with known heights walk known ground trajectories under a known
camera; the forward projector renders the bounding box each would produce.
It is constructed as the exact inverse of the measurement model in
`camera`: feet row and box center come from closed-form inversion, the head
row from a bracketed root solve on the implied-height equation, so
measure(project(state)) returns the state to solver precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import elementwise

from .camera import CameraParams, estimated_heights
from .errors import NotVisibleError
from .ingest import serialize_detection_record
from .model import BoundingBox, Detection, FrameDetections, FrameGeometry


def forward_project_batch(
    lateral_m: np.ndarray,
    depth_m: np.ndarray,
    height_m: np.ndarray,
    camera: CameraParams,
    geom: FrameGeometry,
    width_frac: float = 0.4,
) -> tuple[np.ndarray, np.ndarray]:
    """Boxes (N, 4) for people standing at the given ground points.

    Returns (boxes, visible). Entries are NaN where the person is not fully
    inside the frame. The box width is width_frac of its height; the height
    model only reads the horizontal center and the vertical extent, so the
    fraction matters only to overlap-based consumers.
    """
    x0, x1, x2 = camera.as_tuple()
    W, H = float(geom.width), float(geom.height)
    lateral_m, depth_m, height_m = np.broadcast_arrays(
        np.asarray(lateral_m, float), np.asarray(depth_m, float), np.asarray(height_m, float)
    )
    shape = lateral_m.shape

    with np.errstate(invalid="ignore", divide="ignore"):
        drop = np.arctan2(x0, depth_m)            # descent angle of the feet ray
        feet_pitch = x2 - drop
        y_max = (0.5 - feet_pitch / x1) * H
        slant = np.hypot(x0, depth_m)
        tan_lat = lateral_m / slant
        x_center = W / 2.0 + tan_lat * H / (4.0 * np.cos(feet_pitch) * np.tan(x1 / 2.0))

        # Head row: solve est_height(y_min) = height on (horizon row, feet row).
        offset = (2.0 * x_center - W) / (2.0 * H)
        k = 2.0 * np.tan(x1 / 2.0) / H

        def height_gap(y_min, offset, y_max, target):
            p = (0.5 - y_min / H) * x1
            lat = 4.0 * offset * np.cos(p) * np.tan(x1 / 2.0)
            est = np.sqrt(1.0 + lat * lat) * (x0 / np.sin(x2 - p)) * np.cos(p) * k * (y_max - y_min)
            return est - target

        horizon_row = (0.5 - x2 / x1) * H
        lo = np.maximum(horizon_row, y_max - H) + 1e-9 * H
        searchable = (depth_m > 0) & (y_max > lo)
        lo_b = np.where(searchable, lo, 0.0)
        ymax_b = np.where(searchable, y_max, 1.0)
        root = elementwise.find_root(
            height_gap,
            (lo_b + 1e-7 * (ymax_b - lo_b), ymax_b),
            args=(offset, ymax_b, np.where(searchable, height_m, 0.0)),
        )
        y_min = np.where(searchable & root.success, root.x, np.nan)

        box_h = y_max - y_min
        half_w = width_frac * box_h / 2.0
        boxes = np.stack(
            [x_center - half_w, y_min, x_center + half_w, y_max], axis=-1
        ).reshape(*shape, 4)

    visible = (
        searchable
        & np.isfinite(y_min)
        & (boxes[..., 0] >= 0.0)
        & (boxes[..., 1] >= 0.0)
        & (boxes[..., 2] <= W)
        & (boxes[..., 3] <= H)
    )
    boxes = np.where(visible[..., None], boxes, np.nan)
    return boxes, visible


def forward_project(
    ground_lateral_m: float,
    ground_depth_m: float,
    height_m: float,
    camera: CameraParams,
    geom: FrameGeometry,
    width_frac: float = 0.4,
) -> BoundingBox:
    boxes, visible = forward_project_batch(
        np.array([ground_lateral_m]), np.array([ground_depth_m]), np.array([height_m]),
        camera, geom, width_frac,
    )
    if not visible[0]:
        raise NotVisibleError(
            f"person at ({ground_lateral_m} m, {ground_depth_m} m) height {height_m} m "
            f"is not fully visible"
        )
    return BoundingBox(*boxes[0])


def visible_ground_range(
    camera: CameraParams, geom: FrameGeometry, height_m: float = 2.0, margin_frac: float = 0.05
) -> tuple[tuple[float, float], float]:
    """Conservative ((min_depth, max_depth), max_|lateral|) fully-visible region.

    Scans a depth grid for full visibility of a person of height_m at the
    image center, then bounds the lateral offset by what keeps the box inside
    the frame at the nearest usable depth.
    """
    depths = np.geomspace(0.5, 500.0, 600)
    boxes, visible = forward_project_batch(
        np.zeros_like(depths), depths, np.full_like(depths, height_m), camera, geom
    )
    inset = margin_frac * geom.height
    ok = (
        visible
        & (boxes[:, 1] >= inset)
        & (boxes[:, 3] <= geom.height - inset)
    )
    if not ok.any():
        raise NotVisibleError("no depth renders a fully visible person under this camera")
    d_min = float(depths[ok][0])
    d_max = float(depths[ok][-1])
    # lateral bound from the box-center equation at the nearest depth
    x0, x1, x2 = camera.as_tuple()
    drop = math.atan2(x0, d_min)
    feet_pitch = x2 - drop
    slant = math.hypot(x0, d_min)
    usable_px = geom.width * (0.5 - margin_frac)
    max_tan = usable_px / geom.height * 4.0 * math.cos(feet_pitch) * math.tan(x1 / 2.0) / 4.0
    max_lateral = 0.8 * slant * max_tan
    return (d_min, d_max), max_lateral


@dataclass(frozen=True)
class SyntheticPerson:
    """A walker with piecewise-linear ground waypoints (t_s, lateral_m, depth_m)."""

    pid: int
    height_m: float
    waypoints: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if not 1.4 <= self.height_m <= 2.1:
            raise ValueError(f"person height {self.height_m} outside [1.4, 2.1] m")
        if len(self.waypoints) < 1:
            raise ValueError("need at least one waypoint")
        times = [w[0] for w in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must strictly increase")
        if any(w[2] <= 0 for w in self.waypoints):
            raise ValueError("waypoint depth must be positive")

    @property
    def span(self) -> tuple[float, float]:
        return self.waypoints[0][0], self.waypoints[-1][0]

    def position_at(self, t: float) -> tuple[float, float] | None:
        """(lateral, depth) at time t, or None when the person is absent."""
        t0, t1 = self.span
        if t < t0 or t > t1:
            return None
        pts = self.waypoints
        for (ta, la, da), (tb, lb, db) in zip(pts, pts[1:]):
            if ta <= t <= tb:
                f = (t - ta) / (tb - ta)
                return la + f * (lb - la), da + f * (db - da)
        return pts[-1][1], pts[-1][2]


@dataclass(frozen=True)
class SceneSpec:
    camera: CameraParams
    geometry: FrameGeometry
    fps: float = 25.0
    duration_s: float = 10.0
    people: tuple[SyntheticPerson, ...] = ()
    noise_px: float = 0.0        # gaussian jitter std applied to all four box edges
    drop_probability: float = 0.0
    radius_m: float = 1.0
    width_frac: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.fps <= 0 or self.duration_s <= 0:
            raise ValueError("fps and duration must be positive")
        if not 0.0 <= self.drop_probability < 1.0:
            raise ValueError(f"drop probability {self.drop_probability} outside [0, 1)")


@dataclass
class SyntheticScene:
    spec: SceneSpec
    frames: list[FrameDetections]                       # jittered/dropped detector view
    truth: list[list[tuple[int, BoundingBox]]]          # clean (pid, box) per frame
    positions: list[dict[int, tuple[float, float]]]     # pid -> (lateral, depth) per frame
    violations: list[frozenset[tuple[int, int]]]        # ground-truth pairs per frame

    def write_detections_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for fd in self.frames:
                for det in fd.detections:
                    fh.write(serialize_detection_record(fd.frame_index, det) + "\n")

    def write_ground_truth_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for frame_index, people in enumerate(self.truth):
                for pid, box in people:
                    fh.write(
                        f"{frame_index + 1},{pid},{box.x_min:g},{box.y_min:g},"
                        f"{box.width:g},{box.height:g},1,-1,-1,-1\n"
                    )

    def write_violations_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("frame,person_a,person_b\n")
            for frame_index, pairs in enumerate(self.violations):
                for a, b in sorted(pairs):
                    fh.write(f"{frame_index + 1},{a},{b}\n")


def random_people(
    count: int,
    camera: CameraParams,
    geom: FrameGeometry,
    duration_s: float,
    seed: int = 0,
    speed_range: tuple[float, float] = (0.4, 1.4),
    height_range: tuple[float, float] = (1.5, 1.9),
) -> tuple[SyntheticPerson, ...]:
    """Straight constant-speed walks inside the fully visible ground region."""
    rng = np.random.default_rng(seed)
    (d_min, d_max), max_lat = visible_ground_range(camera, geom)
    d_lo = d_min + 0.1 * (d_max - d_min)
    d_hi = min(d_max - 0.05 * (d_max - d_min), 60.0)
    people = []
    for pid in range(count):
        start = (rng.uniform(-max_lat, max_lat), rng.uniform(d_lo, d_hi))
        heading = rng.uniform(0, 2 * math.pi)
        speed = rng.uniform(*speed_range)
        end = (
            start[0] + math.cos(heading) * speed * duration_s,
            start[1] + math.sin(heading) * speed * duration_s,
        )
        end = (min(max(end[0], -max_lat), max_lat), min(max(end[1], d_lo), d_hi))
        people.append(
            SyntheticPerson(
                pid,
                float(rng.uniform(*height_range)),
                ((0.0, start[0], start[1]), (duration_s, end[0], end[1])),
            )
        )
    return tuple(people)


def generate_scene(spec: SceneSpec) -> SyntheticScene:
    """Render the scene: detections with configured noise, plus exact ground truth.

    The violation schedule is computed directly from the world trajectories
    (pairwise ground distance strictly below 2 * radius), independent of any
    projection, so it can serve as the oracle for the full pipeline.
    """
    rng = np.random.default_rng(spec.seed)
    n_frames = int(round(spec.duration_s * spec.fps))
    frames: list[FrameDetections] = []
    truth: list[list[tuple[int, BoundingBox]]] = []
    positions: list[dict[int, tuple[float, float]]] = []
    violations: list[frozenset[tuple[int, int]]] = []
    for frame_index in range(n_frames):
        t = frame_index / spec.fps
        present: list[tuple[int, float, float, float]] = []
        for person in spec.people:
            pos = person.position_at(t)
            if pos is not None:
                present.append((person.pid, pos[0], pos[1], person.height_m))
        pos_map = {pid: (lat, dep) for pid, lat, dep, _ in present}
        pair_set = set()
        items = sorted(pos_map.items())
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                (pa, (la, da)), (pb, (lb, db)) = items[i], items[j]
                if math.hypot(la - lb, da - db) < 2.0 * spec.radius_m:
                    pair_set.add((pa, pb))
        clean: list[tuple[int, BoundingBox]] = []
        dets: list[Detection] = []
        if present:
            arr = np.asarray([(lat, dep, h) for _, lat, dep, h in present])
            boxes, visible = forward_project_batch(
                arr[:, 0], arr[:, 1], arr[:, 2], spec.camera, spec.geometry, spec.width_frac
            )
            for k, (pid, _, _, _) in enumerate(present):
                if not visible[k]:
                    continue
                box = BoundingBox(*boxes[k])
                clean.append((pid, box))
                dropped = spec.drop_probability > 0 and rng.random() < spec.drop_probability
                jitter = (
                    rng.normal(0.0, spec.noise_px, 4) if spec.noise_px > 0 else np.zeros(4)
                )
                if dropped:
                    continue
                jittered = np.asarray(box.as_tuple()) + jitter
                if jittered[2] <= jittered[0] or jittered[3] <= jittered[1]:
                    continue
                dets.append(Detection(BoundingBox(*jittered).clamped(spec.geometry), 1.0))
        frames.append(FrameDetections(frame_index, t, dets))
        truth.append(clean)
        positions.append(pos_map)
        violations.append(frozenset(pair_set))
    return SyntheticScene(spec, frames, truth, positions, violations)
