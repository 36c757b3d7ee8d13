import pytest
from hypothesis import given, strategies as st

from proximon.errors import DetectionParseError, RejectedRecordError
from proximon.ingest import (
    IngestConfig,
    parse_detection_record,
    parse_live_record,
    read_detection_file,
    serialize_detection_record,
    validate_frame,
)
from proximon.model import BoundingBox, Detection, FrameDetections, FrameGeometry

GEOM = FrameGeometry(1920, 1080)


class TestParseRecord:
    def test_basic_record(self):
        idx, det = parse_detection_record("1,-1,100,200,50,150,0.9,-1,-1,-1", GEOM)
        assert idx == 0
        assert det.box.as_tuple() == (100, 200, 150, 350)
        assert det.confidence == 0.9

    def test_unscored_confidence_maps_to_one(self):
        idx, det = parse_detection_record("5,-1,0,0,10,10,-1", GEOM)
        assert idx == 4
        assert det.box.as_tuple() == (0, 0, 10, 10)
        assert det.confidence == 1.0

    def test_box_clamped_to_frame(self):
        idx, det = parse_detection_record("3,-1,1900,1000,100,200,0.5", GEOM)
        assert idx == 2
        assert det.box.as_tuple() == (1900, 1000, 1920, 1080)
        assert det.confidence == 0.5

    def test_confidence_clamped(self):
        _, det = parse_detection_record("1,-1,0,0,5,5,1.7", GEOM)
        assert det.confidence == 1.0

    def test_short_line_rejected(self):
        with pytest.raises(DetectionParseError, match="line 3"):
            parse_detection_record("1,2,3", GEOM, line_no=3)

    def test_non_numeric_rejected(self):
        with pytest.raises(DetectionParseError, match="non-numeric"):
            parse_detection_record("1,-1,a,200,50,150,0.9", GEOM)

    def test_non_positive_extent_rejected(self):
        with pytest.raises(RejectedRecordError):
            parse_detection_record("1,-1,10,10,0,5,0.9", GEOM)
        with pytest.raises(RejectedRecordError):
            parse_detection_record("1,-1,10,10,5,-2,0.9", GEOM)

    def test_frame_zero_rejected(self):
        with pytest.raises(DetectionParseError, match="frame"):
            parse_detection_record("0,-1,10,10,5,5,0.9", GEOM)

    def test_box_fully_outside_rejected(self):
        with pytest.raises(RejectedRecordError, match="outside"):
            parse_detection_record("1,-1,3000,50,10,10,0.9", GEOM)

    @given(
        frame=st.integers(1, 9999),
        left=st.floats(0, 1800, allow_nan=False),
        top=st.floats(0, 1000, allow_nan=False),
        w=st.floats(1, 120, allow_nan=False),
        h=st.floats(1, 80, allow_nan=False),
        conf=st.floats(0, 1, allow_nan=False),
    )
    def test_round_trip(self, frame, left, top, w, h, conf):
        idx, det = parse_detection_record(f"{frame},-1,{left!r},{top!r},{w!r},{h!r},{conf!r}", GEOM)
        idx2, det2 = parse_detection_record(serialize_detection_record(idx, det), GEOM)
        assert idx2 == idx
        assert det2.box.as_tuple() == pytest.approx(det.box.as_tuple(), abs=1e-9)
        assert det2.confidence == pytest.approx(det.confidence, abs=1e-9)

    @given(
        left=st.floats(-200, 2200), top=st.floats(-200, 1400),
        w=st.floats(1, 500), h=st.floats(1, 500),
    )
    def test_emitted_box_respects_geometry(self, left, top, w, h):
        try:
            _, det = parse_detection_record(f"1,-1,{left!r},{top!r},{w!r},{h!r},1", GEOM)
        except RejectedRecordError:
            return
        b = det.box
        assert 0 <= b.x_min <= b.x_max <= GEOM.width
        assert 0 <= b.y_min <= b.y_max <= GEOM.height


def frame_of(*boxes):
    return FrameDetections(0, 0.0, [Detection(BoundingBox(*b)) for b in boxes])


class TestValidateFrame:
    def test_empty_frame_identity(self):
        fd = FrameDetections(0, 0.0, [])
        assert validate_frame(fd, GEOM, IngestConfig(strict=True)) is fd

    def test_tiny_box_kept_when_strict_off(self):
        fd = frame_of((0, 0, 1, 1))
        assert len(validate_frame(fd, GEOM, IngestConfig(strict=False)).detections) == 1

    def test_tiny_box_dropped_when_strict(self):
        fd = frame_of((0, 0, 1, 1))
        assert validate_frame(fd, GEOM, IngestConfig(strict=True)).detections == []

    def test_wide_box_dropped_when_strict(self):
        fd = frame_of((0, 0, 100, 50))  # aspect 0.5
        assert validate_frame(fd, GEOM, IngestConfig(strict=True)).detections == []

    def test_person_shaped_box_kept(self):
        fd = frame_of((100, 100, 150, 250))  # aspect 3.0
        assert len(validate_frame(fd, GEOM, IngestConfig(strict=True)).detections) == 1

    def test_idempotent(self):
        cfg = IngestConfig(strict=True)
        fd = frame_of((0, 0, 1, 1), (100, 100, 150, 250), (0, 0, 100, 50), (5, 5, 40, 100))
        once = validate_frame(fd, GEOM, cfg)
        twice = validate_frame(once, GEOM, cfg)
        assert [d.box.as_tuple() for d in twice.detections] == [
            d.box.as_tuple() for d in once.detections
        ]


class TestDetectionFile:
    def test_gap_frames_are_emitted_empty(self):
        lines = ["1,-1,10,10,20,60,0.9", "4,-1,10,10,20,60,0.9"]
        frames = list(read_detection_file(lines, GEOM))
        assert [f.frame_index for f in frames] == [0, 1, 2, 3]
        assert [len(f.detections) for f in frames] == [1, 0, 0, 1]

    def test_timestamps_synthesized_from_fps(self):
        lines = ["1,-1,10,10,20,60,0.9", "3,-1,10,10,20,60,0.9"]
        frames = list(read_detection_file(lines, GEOM, IngestConfig(fps=10)))
        assert [f.timestamp for f in frames] == [0.0, 0.1, 0.2]

    def test_confidence_floor_applied(self):
        lines = ["1,-1,10,10,20,60,0.2", "1,-1,50,10,20,60,0.9"]
        frames = list(read_detection_file(lines, GEOM, IngestConfig(min_confidence=0.3)))
        assert len(frames[0].detections) == 1
        assert frames[0].detections[0].box.x_min == 50

    def test_parse_error_carries_line_number(self):
        lines = ["1,-1,10,10,20,60,0.9", "oops"]
        with pytest.raises(DetectionParseError, match="line 2"):
            list(read_detection_file(lines, GEOM))


class TestLiveRecord:
    def test_parse(self):
        fd = parse_live_record(
            '{"frame": 7, "ts": 0.28, "boxes": [[10, 10, 30, 70, 0.8]]}', GEOM
        )
        assert fd.frame_index == 7
        assert fd.timestamp == 0.28
        assert fd.detections[0].box.as_tuple() == (10, 10, 30, 70)
        assert fd.detections[0].confidence == 0.8

    def test_bad_json_rejected(self):
        with pytest.raises(DetectionParseError):
            parse_live_record("not json", GEOM)

    def test_wrong_arity_rejected(self):
        with pytest.raises(DetectionParseError):
            parse_live_record('{"frame": 1, "ts": 0, "boxes": [[1, 2, 3]]}', GEOM)
