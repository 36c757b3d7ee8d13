"""Multi-feed orchestration: per-feed staged workers joined by bounded queues.

Each feed runs three stages (ingest, process, emit) on its own threads.
File-backed feeds apply backpressure end to end, so replaying the same file
yields byte-identical output; live feeds drop the oldest queued frame when
full and count the drops. Feeds never share mutable state, so a fault in one
cannot disturb another.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import sys
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .autocalib import AutoCalibration
from .birdseye import HomographyCalibration, birdseye_violations
from .camera import auto_violations
from .compliance import AlertMonitor, ComplianceWindow, WindowSummary, rolling_metrics, window_metrics
from .errors import ConfigurationError
from .ingest import IngestConfig, read_detection_file, read_live_stream
from .model import FrameDetections, FrameGeometry, boxes_to_array
from .tracking import Tracker, TrackerConfig, TrackSnapshot

_SENTINEL = object()


@dataclass(frozen=True)
class CapacityInputs:
    """Edge-box sizing inputs for the supported-feed estimate."""

    aip_fps: float        # algorithm instance process rate
    cpu_cores: int
    gpu_memory_gb: float
    sef_fps: float        # streaming endpoint feed rate

    def __post_init__(self):
        for name in ("aip_fps", "cpu_cores", "gpu_memory_gb", "sef_fps"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def max_instances(self) -> float:
        return min(self.cpu_cores, self.gpu_memory_gb)


def capacity_estimate(c: CapacityInputs) -> int:
    """Number of camera feeds the box can serve: floor(AIP * instances / SEF)."""
    return math.floor(c.aip_fps * c.max_instances / c.sef_fps)


def dumps(obj) -> str:
    """Canonical one-line JSON for the emitted record streams."""
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


@dataclass
class ComplianceConfig:
    window_span_s: float = 30.0
    high_risk_threshold_s: float = 5.0
    horizon_s: float = 300.0
    contiguous_runs: bool = False
    alert_thresholds: dict[str, float] = field(default_factory=dict)
    rearm_after: int = 1


@dataclass
class FeedConfig:
    feed_id: str
    source: str                     # detection CSV path; "-" reads live JSONL from stdin
    geometry: FrameGeometry
    calibration: dict | None = None  # tool or auto calibration document
    fps: float = 25.0
    live: bool = False
    ingest: IngestConfig | None = None
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    compliance: ComplianceConfig = field(default_factory=ComplianceConfig)
    frame_path: str | None = None   # optional still frame served to the calibration UI
    blur_fraction: float = 0.2      # top fraction of each box marked as blur region
    queue_size: int = 64
    alert_command: list[str] | None = None

    def __post_init__(self):
        if self.fps <= 0:
            raise ConfigurationError(f"fps must be positive, got {self.fps}")
        if not 0.0 < self.blur_fraction <= 1.0:
            raise ConfigurationError(f"blur fraction {self.blur_fraction} outside (0, 1]")
        if self.ingest is None:
            self.ingest = IngestConfig(fps=self.fps)


def load_calibration(doc: dict) -> HomographyCalibration | AutoCalibration:
    mode = doc.get("mode")
    if mode == "tool":
        return HomographyCalibration.from_document(doc)
    if mode == "auto":
        return AutoCalibration.from_document(doc)
    raise ConfigurationError(f"calibration mode must be 'tool' or 'auto', got {mode!r}")


@dataclass
class StageResult:
    pairs: list[tuple[int, int]]                 # violating id pairs, sorted
    per_person: list[dict]                       # extras per snapshot (ellipse, flags)
    excluded: int                                # people without a usable ground point


class ViolationStage:
    """Applies the configured calibration mode to one frame of track boxes."""

    def __init__(self, calibration: HomographyCalibration | AutoCalibration,
                 near_flag_depth_m: float = 2.0):
        self.calibration = calibration
        self.near_flag_depth_m = near_flag_depth_m

    def test(self, snapshots: list[TrackSnapshot]) -> StageResult:
        cal = self.calibration
        if not snapshots:
            return StageResult([], [], 0)
        extras: list[dict] = [{} for _ in snapshots]
        if isinstance(cal, HomographyCalibration):
            feet = [s.box.feet for s in snapshots]
            result = birdseye_violations(cal, feet)
            for i in result.excluded:
                extras[i]["flags"] = ["no_ground"]
            id_pairs = {
                _id_pair(snapshots[i].id, snapshots[j].id) for i, j in result.pairs
            }
            return StageResult(sorted(id_pairs), extras, len(result.excluded))
        result = auto_violations(
            boxes_to_array([s.box for s in snapshots]), cal.camera, cal.geometry, cal.radius_m
        )
        for i, ellipse in enumerate(result.ellipses):
            if ellipse is not None:
                extras[i]["ellipse"] = {
                    "center": [ellipse.center[0], ellipse.center[1]],
                    "semi_major_px": ellipse.semi_major_px,
                    "semi_minor_px": ellipse.semi_minor_px,
                }
            ground = result.ground[i]
            flags = []
            if ground is None:
                flags.append("no_ground")
            elif ground.depth_m < self.near_flag_depth_m:
                flags.append("near_camera")
            if flags:
                extras[i]["flags"] = flags
        id_pairs = {_id_pair(snapshots[i].id, snapshots[j].id) for i, j in result.pairs}
        return StageResult(sorted(id_pairs), extras, len(result.excluded))


def _id_pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def overlay_record(
    feed_id: str,
    frame: FrameDetections,
    snapshots: list[TrackSnapshot],
    result: StageResult,
    blur_fraction: float,
) -> dict:
    violating = {i for pair in result.pairs for i in pair}
    people = []
    for snap, extra in zip(snapshots, result.per_person):
        b = snap.box
        person = {
            "id": snap.id,
            "box": [b.x_min, b.y_min, b.x_max, b.y_max],
            "color": "red" if snap.id in violating else "green",
            "blur": [b.x_min, b.y_min, b.x_max, b.y_min + blur_fraction * b.height],
        }
        person.update(extra)
        people.append(person)
    return {
        "feed": feed_id,
        "frame": frame.frame_index,
        "ts": frame.timestamp,
        "people": people,
        "pairs": [list(p) for p in result.pairs],
        "excluded": result.excluded,
    }


def track_record(frame: FrameDetections, snapshots: list[TrackSnapshot]) -> dict:
    return {
        "frame": frame.frame_index,
        "ts": frame.timestamp,
        "tracks": [
            {"id": s.id, "box": [s.box.x_min, s.box.y_min, s.box.x_max, s.box.y_max],
             "conf": s.confidence}
            for s in snapshots
        ],
    }


def metrics_record(feed_id: str, summary: WindowSummary, alerts: list) -> dict:
    m = window_metrics(summary)
    return {
        "feed": feed_id,
        "window_start_ts": summary.start_ts,
        "span_s": summary.span_s,
        "distinct_people": m.distinct_people,
        "violation_pairs": m.violation_pairs,
        "high_risk_pairs": m.high_risk_pairs,
        "violators": m.violators,
        "ratio": m.ratio,
        "clusters": list(m.cluster_sizes),
        "alerts": [a.to_dict() for a in alerts],
    }


class Channel:
    """Bounded SPSC queue; blocks when full, or drops the oldest (live mode)."""

    def __init__(self, maxsize: int, drop_oldest: bool = False):
        # one extra slot is reserved so the close sentinel never displaces data
        self._q: queue.Queue = queue.Queue(maxsize=maxsize + 1)
        self._maxsize = maxsize
        self._drop_oldest = drop_oldest
        self._aborted = False
        self.drops = 0

    def put(self, item) -> None:
        if self._aborted:
            return
        if not self._drop_oldest:
            self._q.put(item)
            return
        while True:
            if self._q.qsize() < self._maxsize:
                try:
                    self._q.put_nowait(item)
                    return
                except queue.Full:  # pragma: no cover - SPSC keeps this unreachable
                    pass
            try:
                self._q.get_nowait()
                self.drops += 1
            except queue.Empty:
                pass

    def close(self) -> None:
        self._q.put(_SENTINEL)

    def abort(self) -> None:
        """Consumer went away: discard queued items and unblock the producer."""
        self._aborted = True
        try:
            while True:
                self._q.get_nowait()
        except queue.Empty:
            pass

    def __iter__(self) -> Iterator:
        while True:
            item = self._q.get()
            if item is _SENTINEL:
                return
            yield item


class FeedWorker:
    """Owns every stage of one feed; no state is shared across feeds."""

    def __init__(
        self,
        config: FeedConfig,
        overlay_sink: Callable[[str], None] | None = None,
        metrics_sink: Callable[[str], None] | None = None,
        tracks_sink: Callable[[str], None] | None = None,
    ):
        self.config = config
        self.status = "idle"
        self.error: str | None = None
        self.frames_processed = 0
        self.windows_closed = 0
        self.overlay_sink = overlay_sink
        self.metrics_sink = metrics_sink
        self.tracks_sink = tracks_sink
        self.summaries: deque[WindowSummary] = deque(maxlen=512)
        self.latest_overlay: dict | None = None
        self._stage: ViolationStage | None = None
        if config.calibration is not None:
            try:
                self._stage = ViolationStage(load_calibration(config.calibration))
            except Exception as exc:
                self.status = "faulted"
                self.error = f"calibration: {exc}"
        self._subscribers: list[queue.Queue] = []
        self._sub_lock = threading.Lock()
        self._ingest_channel = Channel(config.queue_size, drop_oldest=config.live)
        self._emit_channel = Channel(config.queue_size, drop_oldest=False)
        self._monitor = AlertMonitor(
            config.compliance.alert_thresholds, config.compliance.rearm_after
        ) if config.compliance.alert_thresholds else None

    # -- calibration ---------------------------------------------------------

    def set_calibration(self, doc: dict) -> None:
        """Validate and swap the active calibration between frames."""
        stage = ViolationStage(load_calibration(doc))
        self.config.calibration = doc
        self._stage = stage

    # -- live overlay fan-out --------------------------------------------------

    def subscribe(self) -> queue.Queue:
        """Queue of (kind, json_line) events: overlay records and metrics/alerts."""
        q: queue.Queue = queue.Queue(maxsize=256)
        with self._sub_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._sub_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def _publish(self, kind: str, line: str) -> None:
        with self._sub_lock:
            subs = list(self._subscribers)
        for q in subs:
            try:
                q.put_nowait((kind, line))
            except queue.Full:
                pass  # slow consumer loses frames, never stalls the feed

    # -- stages ----------------------------------------------------------------

    def _frames(self) -> Iterable[FrameDetections]:
        cfg = self.config
        if cfg.live:
            stream = sys.stdin if cfg.source == "-" else open(cfg.source, "r", encoding="utf-8")
            return read_live_stream(stream, cfg.geometry, cfg.ingest)
        return read_detection_file(cfg.source, cfg.geometry, cfg.ingest)

    def _fault(self, stage: str, exc: Exception) -> None:
        if self.error is None:
            self.error = f"{stage}: {exc}"

    def _ingest_loop(self) -> None:
        try:
            for fd in self._frames():
                self._ingest_channel.put(fd)
        except Exception as exc:
            self._fault("ingest", exc)
        finally:
            self._ingest_channel.close()

    def _process_loop(self) -> None:
        cfg = self.config
        tracker = Tracker(cfg.tracker)
        window: ComplianceWindow | None = None
        prev_ts: float | None = None
        try:
            for fd in self._ingest_channel:
                if self._stage is None:
                    if cfg.live:
                        continue  # awaiting operator calibration; frames are skipped
                    raise ConfigurationError(f"feed {cfg.feed_id!r} has no calibration")
                while window is not None and fd.timestamp >= window.start_ts + window.span_s:
                    self._close_window(window)
                    window = self._new_window(window.start_ts + window.span_s)
                if window is None:
                    start = math.floor(fd.timestamp / cfg.compliance.window_span_s)
                    window = self._new_window(start * cfg.compliance.window_span_s)
                snapshots = tracker.step(fd)
                result = self._stage.test(snapshots)
                dt = 1.0 / cfg.fps
                if prev_ts is not None and fd.timestamp > prev_ts:
                    dt = fd.timestamp - prev_ts
                prev_ts = fd.timestamp
                window.accumulate((s.id for s in snapshots), result.pairs, dt)
                record = overlay_record(cfg.feed_id, fd, snapshots, result, cfg.blur_fraction)
                self.frames_processed += 1
                if self.tracks_sink is not None:
                    self._emit_channel.put(("tracks", track_record(fd, snapshots)))
                self._emit_channel.put(("overlay", record))
            if window is not None:
                self._close_window(window)
        except Exception as exc:
            self._fault("process", exc)
            self._ingest_channel.abort()
        finally:
            self._emit_channel.close()

    def _new_window(self, start_ts: float) -> ComplianceWindow:
        c = self.config.compliance
        return ComplianceWindow(
            span_s=c.window_span_s,
            high_risk_threshold_s=c.high_risk_threshold_s,
            start_ts=start_ts,
            contiguous_runs=c.contiguous_runs,
        )

    def _close_window(self, window: ComplianceWindow) -> None:
        summary = window.summary()
        self.summaries.append(summary)
        self.windows_closed += 1
        alerts = []
        if self._monitor is not None:
            rolled = rolling_metrics(list(self.summaries), self.config.compliance.horizon_s)
            alerts = self._monitor.check(
                rolled, summary.start_ts, summary.start_ts + summary.span_s
            )
            for alert in alerts:
                self._dispatch_alert(alert)
        self._emit_channel.put(("metrics", metrics_record(self.config.feed_id, summary, alerts)))

    def _dispatch_alert(self, alert) -> None:
        if not self.config.alert_command:
            return
        payload = dumps({**alert.to_dict(), "feed": self.config.feed_id})
        try:
            subprocess.Popen(
                [*self.config.alert_command, payload],
                stdout=subprocess.DEVNULL,
                stderr=subprocess.DEVNULL,
            )
        except OSError:
            pass  # a broken hook must not take down the feed

    def _emit_loop(self) -> None:
        for kind, record in self._emit_channel:
            line = dumps(record)
            if kind == "overlay":
                self.latest_overlay = record
                if self.overlay_sink:
                    self.overlay_sink(line)
                self._publish("overlay", line)
            elif kind == "tracks":
                if self.tracks_sink:
                    self.tracks_sink(line)
            else:
                if self.metrics_sink:
                    self.metrics_sink(line)
                self._publish("metrics", line)

    def run(self) -> None:
        """Run all stages to completion (file mode) or until the source ends."""
        if self.status == "faulted":
            return
        self.status = "running"
        threads = [
            threading.Thread(target=self._ingest_loop, name=f"{self.config.feed_id}-ingest"),
            threading.Thread(target=self._process_loop, name=f"{self.config.feed_id}-process"),
        ]
        for t in threads:
            t.daemon = True
            t.start()
        try:
            self._emit_loop()
            for t in threads:
                t.join()
        except Exception as exc:  # fault isolation: record, never propagate to other feeds
            self._fault("emit", exc)
        self.status = "faulted" if self.error else "finished"

    @property
    def dropped_frames(self) -> int:
        return self._ingest_channel.drops

    def state(self) -> dict:
        return {
            "id": self.config.feed_id,
            "status": self.status,
            "error": self.error,
            "frames_processed": self.frames_processed,
            "windows_closed": self.windows_closed,
            "dropped_frames": self.dropped_frames,
            "calibrated": self._stage is not None,
        }


@dataclass
class FeedRunResult:
    feed_id: str
    status: str
    frames_processed: int
    windows_closed: int
    error: str | None = None


def run_feed(
    config: FeedConfig,
    overlay_path: str | None = None,
    metrics_path: str | None = None,
    tracks_path: str | None = None,
) -> FeedRunResult:
    """Process a feed start to finish, writing JSON-lines records to files."""
    sinks = []

    def file_sink(path):
        fh = open(path, "w", encoding="utf-8")
        sinks.append(fh)
        return lambda line: fh.write(line + "\n")

    worker = FeedWorker(
        config,
        overlay_sink=file_sink(overlay_path) if overlay_path else None,
        metrics_sink=file_sink(metrics_path) if metrics_path else None,
        tracks_sink=file_sink(tracks_path) if tracks_path else None,
    )
    try:
        worker.run()
    finally:
        for fh in sinks:
            fh.close()
    return FeedRunResult(config.feed_id, worker.status, worker.frames_processed,
                         worker.windows_closed, worker.error)


class Engine:
    """Holds one worker per feed and serves as the API's state root."""

    def __init__(self, feeds: list[FeedConfig]):
        ids = [f.feed_id for f in feeds]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"duplicate feed ids in {ids}")
        self.workers: dict[str, FeedWorker] = {f.feed_id: FeedWorker(f) for f in feeds}
        self._threads: list[threading.Thread] = []

    def start(self) -> None:
        for worker in self.workers.values():
            t = threading.Thread(target=worker.run, name=f"feed-{worker.config.feed_id}")
            t.daemon = True
            t.start()
            self._threads.append(t)

    def join(self, timeout: float | None = None) -> None:
        for t in self._threads:
            t.join(timeout)

    def get(self, feed_id: str) -> FeedWorker | None:
        return self.workers.get(feed_id)

    def states(self) -> list[dict]:
        return [w.state() for w in self.workers.values()]
