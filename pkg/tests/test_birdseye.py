import numpy as np
import pytest

from proximon.birdseye import (
    BirdseyeViolations,
    CalibrationQualityWarning,
    GroundQuad,
    HomographyCalibration,
    ReferenceSegment,
    birdseye_violations,
    compute_homography,
    default_target_rect,
    scale_from_references,
    warp_point,
    warp_points,
)
from proximon.errors import ConfigurationError, HorizonError, SingularQuadError

UNIT_SQUARE = GroundQuad(((0, 0), (1, 0), (1, 1), (0, 1)))


class TestComputeHomography:
    def test_identity(self):
        M = compute_homography(UNIT_SQUARE, [(0, 0), (1, 0), (1, 1), (0, 1)])
        assert np.allclose(M, np.eye(3), atol=1e-12)

    def test_pure_scaling(self):
        M = compute_homography(UNIT_SQUARE, [(0, 0), (2, 0), (2, 1), (0, 1)])
        assert warp_point(M, (0.5, 0.5)) == pytest.approx((1.0, 0.5), abs=1e-12)

    def test_trapezoid_against_independent_solve(self):
        # expected values frozen from a symbolic solve of the 8x8 system:
        # M = [[4, 2, 0], [0, 2, 0], [0, 1, 1]], image of (0.5, 0.5) = (2, 2/3)
        M = compute_homography(UNIT_SQUARE, [(0, 0), (4, 0), (3, 1), (1, 1)])
        assert np.allclose(M, [[4, 2, 0], [0, 2, 0], [0, 1, 1]], atol=1e-12)
        assert warp_point(M, (0.5, 0.5)) == pytest.approx((2.0, 2.0 / 3.0), abs=1e-12)

    def test_correspondences_reproduced(self, rng):
        for _ in range(50):
            base = rng.uniform(100, 900, (4, 2))
            quad_pts = np.array([(0, 0), (1, 0), (1, 1), (0, 1)]) * rng.uniform(200, 800) + base[0]
            quad_pts += rng.uniform(-40, 40, (4, 2))
            try:
                quad = GroundQuad(tuple(map(tuple, quad_pts)))
            except SingularQuadError:
                continue
            rect = np.array([(0, 0), (300, 0), (300, 200), (0, 200)], dtype=float)
            M = compute_homography(quad, rect)
            for src, dst in zip(quad_pts, rect):
                assert warp_point(M, src) == pytest.approx(tuple(dst), abs=1e-9)

    def test_round_trip(self, rng):
        quad = GroundQuad(((310, 420), (1650, 400), (1820, 1010), (120, 1040)))
        M = compute_homography(quad, [(0, 0), (500, 0), (500, 300), (0, 300)])
        Minv = np.linalg.inv(M)
        pts = rng.uniform((0, 0), (1920, 1080), (10_000, 2))
        there, ok = warp_points(M, pts)
        back, ok2 = warp_points(Minv, there[ok])
        assert ok2.all()
        assert np.max(np.hypot(*(back - pts[ok]).T)) <= 1e-9

    def test_collinear_points_named(self):
        with pytest.raises(SingularQuadError, match="collinear"):
            GroundQuad(((0, 0), (1, 0), (2, 0), (0, 1)))

    def test_non_convex_rejected(self):
        with pytest.raises(SingularQuadError, match="convex"):
            GroundQuad(((0, 0), (10, 0), (4, 3), (10, 10)))

    def test_degenerate_rect_rejected(self):
        with pytest.raises(ConfigurationError):
            compute_homography(UNIT_SQUARE, [(0, 0), (1, 0), (2, 0), (3, 0)])

    def test_default_rect_uses_mean_edges(self):
        rect = default_target_rect(UNIT_SQUARE)
        assert np.allclose(rect, [(0, 0), (1, 0), (1, 1), (0, 1)])


class TestWarpPoint:
    def test_identity(self):
        assert warp_point(np.eye(3), (3, 4)) == (3, 4)

    def test_scaling(self):
        assert warp_point(np.diag([2.0, 1.0, 1.0]), (3, 4)) == (6, 4)

    def test_horizon_error(self):
        M = np.array([[1.0, 0, 0], [0, 1, 0], [0, 1, -5]])  # w = y - 5
        with pytest.raises(HorizonError):
            warp_point(M, (2.0, 5.0))

    def test_quad_corner_maps_to_rect_corner(self):
        quad = GroundQuad(((100, 100), (900, 120), (1000, 700), (50, 680)))
        rect = [(0, 0), (400, 0), (400, 250), (0, 250)]
        M = compute_homography(quad, rect)
        assert warp_point(M, (900, 120)) == pytest.approx((400, 0), abs=1e-9)


class TestScale:
    def test_single_reference(self):
        # identity matrix, endpoints 100 px apart, 2 m apart in the world
        scale = scale_from_references(np.eye(3), [ReferenceSegment((0, 0), (100, 0), 2.0)])
        assert scale == pytest.approx(50.0)

    def test_two_references_averaged(self):
        refs = [
            ReferenceSegment((0, 0), (100, 0), 2.0),    # 50 px/m
            ReferenceSegment((0, 0), (0, 108), 2.0),    # 54 px/m
        ]
        assert scale_from_references(np.eye(3), refs) == pytest.approx(52.0)

    def test_coincident_endpoints_rejected(self):
        with pytest.raises(ConfigurationError):
            ReferenceSegment((5, 5), (5, 5), 2.0)

    def test_empty_reference_list_rejected(self):
        with pytest.raises(ConfigurationError):
            scale_from_references(np.eye(3), [])

    def test_disagreeing_references_warn(self):
        refs = [
            ReferenceSegment((0, 0), (100, 0), 2.0),   # 50 px/m
            ReferenceSegment((0, 0), (0, 140), 2.0),   # 70 px/m
        ]
        with pytest.warns(CalibrationQualityWarning):
            scale_from_references(np.eye(3), refs)


def identity_cal(scale=50.0, threshold=2.0):
    return HomographyCalibration(np.eye(3), scale, threshold)


class TestBirdseyeViolations:
    def test_empty(self):
        assert birdseye_violations(identity_cal(), []).pairs == frozenset()

    def test_ninety_px_at_fifty_px_per_m_violates(self):
        result = birdseye_violations(identity_cal(), [(0, 0), (90, 0)])
        assert result.pairs == {(0, 1)}

    def test_one_ten_px_compliant(self):
        result = birdseye_violations(identity_cal(), [(0, 0), (110, 0)])
        assert result.pairs == frozenset()

    def test_exact_threshold_compliant(self):
        result = birdseye_violations(identity_cal(), [(0, 0), (100, 0)])
        assert result.pairs == frozenset()

    def test_each_unordered_pair_once(self):
        result = birdseye_violations(identity_cal(), [(0, 0), (10, 0), (20, 0)])
        assert result.pairs == {(0, 1), (0, 2), (1, 2)}
        assert all(i < j for i, j in result.pairs)

    def test_scale_invariance(self, rng):
        pts = rng.uniform(0, 500, (12, 2))
        base = birdseye_violations(identity_cal(scale=50.0), pts).pairs
        for factor in (0.25, 3.0, 17.0):
            scaled = HomographyCalibration(np.diag([factor, factor, 1.0]), 50.0 * factor, 2.0)
            assert birdseye_violations(scaled, pts).pairs == base

    def test_horizon_point_excluded_and_counted(self):
        M = np.array([[1.0, 0, 0], [0, 1, 0], [0, 1, -5]])
        cal = HomographyCalibration(M, 1.0, 2.0)
        result = birdseye_violations(cal, [(0, 5.0), (0, 10.0), (0.5, 10.0)])
        assert result.excluded == (0,)
        assert result.pairs == {(1, 2)}


class TestDocuments:
    def test_round_trip(self):
        quad = GroundQuad(((310, 420), (1650, 400), (1820, 1010), (120, 1040)))
        cal = HomographyCalibration.from_quad(
            quad, [ReferenceSegment((400, 500), (600, 520), 2.0)]
        )
        doc = cal.to_document()
        assert doc["mode"] == "tool"
        back = HomographyCalibration.from_document(doc)
        assert np.allclose(back.matrix, cal.matrix)
        assert back.scale_px_per_m == pytest.approx(cal.scale_px_per_m)

    def test_wrong_mode_rejected(self):
        with pytest.raises(ConfigurationError):
            HomographyCalibration.from_document({"mode": "auto"})
