import math

import numpy as np
import pytest

from irisfuse.imaging import BinaryImage, GrayImage
from irisfuse.segmentation import (
    Circle,
    EdgeMap,
    PARABOLA_CURVATURES,
    SegmentationConfig,
    SegmentationError,
    SegmentationResult,
    build_noise_mask,
    circular_hough,
    circles_sidecar,
    edge_map,
    locate_pupil_and_iris,
    parabolic_hough,
    segment,
    segmentation_overlay,
)
from irisfuse.synth import SynthEyeSpec, synth_eye


def clean_eye(pupil_r=30.0, iris_r=80.0, seed=7, **kw):
    spec = SynthEyeSpec(
        width=288,
        height=224,
        pupil=Circle(145.0, 113.0, pupil_r),
        iris=Circle(144.0, 112.0, iris_r),
        texture_seed=seed,
        **kw,
    )
    return synth_eye(spec)


class TestEdgeMap:
    def test_constant_image_empty(self):
        img = GrayImage(np.full((16, 16), 90, dtype=np.uint8))
        for bias in ("none", "vertical-edges", "horizontal-edges"):
            assert len(edge_map(img, bias, 5.0)) == 0

    def test_vertical_step_gives_single_column(self):
        arr = np.zeros((20, 24), dtype=np.uint8)
        arr[:, 12:] = 200
        em = edge_map(GrayImage(arr), "vertical-edges", 10.0)
        assert len(em) > 0
        assert len(np.unique(em.points[:, 0])) == 1

    def test_horizontal_step_invisible_to_vertical_bias(self):
        arr = np.zeros((24, 20), dtype=np.uint8)
        arr[12:, :] = 200
        assert len(edge_map(GrayImage(arr), "vertical-edges", 10.0)) == 0
        assert len(edge_map(GrayImage(arr), "horizontal-edges", 10.0)) > 0

    def test_synthetic_eye_points_near_boundaries(self):
        img, truth = clean_eye()
        em = edge_map(img, "none", SegmentationConfig().grad_threshold)
        pts = em.points.astype(np.float64)
        d_p = np.abs(np.hypot(pts[:, 0] - truth.pupil.cx, pts[:, 1] - truth.pupil.cy) - truth.pupil.r)
        d_i = np.abs(np.hypot(pts[:, 0] - truth.iris.cx, pts[:, 1] - truth.iris.cy) - truth.iris.r)
        near = np.minimum(d_p, d_i) <= 2.0
        assert near.mean() >= 0.80

    def test_rejects_unknown_bias_and_bad_threshold(self):
        img = GrayImage(np.zeros((8, 8), dtype=np.uint8))
        with pytest.raises(ValueError):
            edge_map(img, "diagonal", 1.0)
        with pytest.raises(ValueError):
            edge_map(img, "none", 0.0)


def circle_points(cx, cy, r, step_deg=2.0, jitter=None, rng=None):
    angles = np.radians(np.arange(0.0, 360.0, step_deg))
    rr = np.full(angles.shape, float(r))
    if jitter is not None:
        rr = rr + rng.uniform(-jitter, jitter, size=angles.shape)
    xs = np.rint(cx + rr * np.cos(angles)).astype(int)
    ys = np.rint(cy + rr * np.sin(angles)).astype(int)
    return np.unique(np.column_stack([xs, ys]), axis=0)


class TestCircularHough:
    def test_exact_recovery_from_sampled_circle(self):
        pts = circle_points(100, 80, 30)
        em = EdgeMap(pts, 200, 160)
        found = circular_hough(em, 10, 50)
        assert (found.cx, found.cy, found.r) == (100.0, 80.0, 30.0)

    def test_jittered_circle_within_2px(self):
        rng = np.random.default_rng(3)
        pts = circle_points(100, 80, 30, jitter=1.0, rng=rng)
        found = circular_hough(EdgeMap(pts, 200, 160), 10, 50)
        assert abs(found.cx - 100) <= 2 and abs(found.cy - 80) <= 2 and abs(found.r - 30) <= 2

    def test_empty_edge_map_rejected(self):
        with pytest.raises(SegmentationError):
            circular_hough(EdgeMap(np.empty((0, 2), dtype=int), 64, 64), 5, 20)

    def test_bad_radius_range_rejected(self):
        pts = circle_points(32, 32, 10)
        with pytest.raises(ValueError):
            circular_hough(EdgeMap(pts, 64, 64), 20, 10)

    def test_vote_floor(self):
        # two isolated points cannot carry a circle
        em = EdgeMap(np.array([[10, 10], [50, 50]]), 64, 64)
        with pytest.raises(SegmentationError):
            circular_hough(em, 30, 31)

    def test_translation_equivariance(self):
        pts = circle_points(60, 60, 20)
        base = circular_hough(EdgeMap(pts, 160, 160), 10, 30)
        for dx, dy in [(7, 0), (0, 11), (13, 9)]:
            moved = circular_hough(EdgeMap(pts + [dx, dy], 160, 160), 10, 30)
            assert (moved.cx, moved.cy) == (base.cx + dx, base.cy + dy)
            assert moved.r == base.r

    def test_center_window_restricts_search(self):
        pts = np.vstack([circle_points(60, 60, 20), circle_points(120, 60, 20)])
        found = circular_hough(EdgeMap(pts, 200, 120), 10, 30, center_window=(100, 140, 40, 80))
        assert (found.cx, found.cy) == (120.0, 60.0)


class TestLocatePupilAndIris:
    def test_recovery_on_synthetic_eye(self):
        img, truth = clean_eye(pupil_r=30, iris_r=80)
        cfg = SegmentationConfig()
        pupil, iris = locate_pupil_and_iris(img, cfg)
        for found, want in ((pupil, truth.pupil), (iris, truth.iris)):
            assert abs(found.cx - want.cx) <= 2
            assert abs(found.cy - want.cy) <= 2
            assert abs(found.r - want.r) <= 2
        assert pupil.r < iris.r

    def test_smallest_supported_pupil_ratio_detected(self):
        # pupil diameter at 10% of the iris diameter, the anatomical lower bound
        img, truth = clean_eye(pupil_r=7.0, iris_r=70.0)
        pupil, iris = locate_pupil_and_iris(img, SegmentationConfig())
        assert abs(pupil.r - 7.0) <= 2 and abs(iris.r - 70.0) <= 2

    def test_blank_image_fails(self):
        img = GrayImage(np.full((192, 256), 128, dtype=np.uint8))
        with pytest.raises(SegmentationError):
            locate_pupil_and_iris(img, SegmentationConfig())

    def test_overlapping_radius_ranges_rejected(self):
        with pytest.raises(ValueError):
            SegmentationConfig(pupil_r_min=6, pupil_r_max=70, iris_r_min=63, iris_r_max=100)


def parabola_points(h, k, a, theta=0.0, u_span=40.0, count=81):
    us = np.linspace(-u_span, u_span, count)
    ws = a * us * us
    c, s = math.cos(theta), math.sin(theta)
    xs = h + us * c - ws * s
    ys = k + us * s + ws * c
    return np.unique(np.column_stack([np.rint(xs), np.rint(ys)]).astype(int), axis=0)


class TestParabolicHough:
    def test_recovers_synthesized_parabola(self):
        pts = parabola_points(64.0, 20.0, 0.05)
        em = EdgeMap(pts, 128, 124)
        found = parabolic_hough(em, (0, 127, 0, 123))
        assert found is not None
        assert abs(found.h - 64.0) <= 4.0
        assert abs(found.k - 20.0) <= 4.0
        grid = np.asarray(PARABOLA_CURVATURES)
        idx = int(np.argmin(np.abs(grid - found.a)))
        step = grid[1] / grid[0]
        assert grid[idx] / step <= 0.05 <= grid[idx] * step

    def test_empty_region_absent(self):
        pts = np.array([[5, 5], [6, 5]])
        em = EdgeMap(pts, 128, 128)
        assert parabolic_hough(em, (60, 120, 60, 120)) is None

    def test_horizontal_line_rejected(self):
        xs = np.arange(0, 128)
        pts = np.column_stack([xs, np.full_like(xs, 50)])
        em = EdgeMap(pts, 128, 128)
        assert parabolic_hough(em, (0, 127, 0, 127)) is None

    def test_negative_curvature_search(self):
        pts = parabola_points(64.0, 90.0, -0.03)
        em = EdgeMap(pts, 128, 128)
        found = parabolic_hough(em, (0, 127, 0, 127), curvature_sign=-1)
        assert found is not None and found.a < 0
        assert abs(found.h - 64.0) <= 4.0 and abs(found.k - 90.0) <= 4.0


class TestNoiseMask:
    def test_pure_geometry_complement_of_annulus(self):
        img = GrayImage(np.full((64, 64), 100, dtype=np.uint8))
        pupil = Circle(32.0, 32.0, 8.0)
        iris = Circle(32.0, 32.0, 24.0)
        mask = build_noise_mask(img, pupil, iris).bits
        ys, xs = np.mgrid[0:64, 0:64]
        d = np.hypot(xs - 32.0, ys - 32.0)
        annulus = (d > 8.0) & (d <= 24.0)
        assert np.array_equal(mask == 0, annulus)

    def test_specular_pixel_masked(self):
        arr = np.full((64, 64), 100, dtype=np.uint8)
        arr[32, 48] = 255  # inside the annulus
        mask = build_noise_mask(GrayImage(arr), Circle(32, 32, 8), Circle(32, 32, 24))
        assert mask.bits[32, 48] == 1

    def test_masked_fraction_monotone_in_specular_threshold(self):
        rng = np.random.default_rng(5)
        img = GrayImage(rng.integers(0, 256, size=(64, 64), dtype=np.uint8))
        pupil, iris = Circle(32, 32, 8), Circle(32, 32, 24)
        fractions = [
            build_noise_mask(img, pupil, iris, specular_threshold=t).bits.mean()
            for t in (250, 220, 180, 120, 60)
        ]
        assert all(a <= b for a, b in zip(fractions, fractions[1:]))

    def test_geometry_violation_rejected(self):
        img = GrayImage(np.zeros((64, 64), dtype=np.uint8))
        with pytest.raises(SegmentationError):
            build_noise_mask(img, Circle(10, 32, 8), Circle(50, 32, 20))

    def test_detected_eyelid_masks_ground_truth_occlusion(self):
        img, truth = clean_eye(pupil_r=26, iris_r=75, eyelid_coverage=0.3, noise_sigma=2.0)
        result = segment(img, SegmentationConfig())
        ys, xs = np.mgrid[0 : img.height, 0 : img.width]
        d_p = np.hypot(xs - truth.pupil.cx, ys - truth.pupil.cy)
        d_i = np.hypot(xs - truth.iris.cx, ys - truth.iris.cy)
        annulus = (d_p > truth.pupil.r) & (d_i <= truth.iris.r)
        occluded = annulus & (truth.upper_eyelid.side(xs, ys) > 0)
        assert occluded.sum() > 0
        covered = result.noise_mask.bits[occluded] == 1
        assert covered.mean() >= 0.95


class TestResultInvariants:
    def test_pupil_must_be_smaller(self):
        mask = BinaryImage(np.zeros((8, 8), dtype=np.uint8))
        with pytest.raises(ValueError):
            SegmentationResult(Circle(4, 4, 5), Circle(4, 4, 3), None, None, mask)

    def test_pupil_center_inside_iris(self):
        mask = BinaryImage(np.zeros((8, 8), dtype=np.uint8))
        with pytest.raises(ValueError):
            SegmentationResult(Circle(40, 4, 1), Circle(4, 4, 3), None, None, mask)

    def test_overlay_and_sidecar(self):
        img, truth = clean_eye()
        overlay = segmentation_overlay(img, truth.pupil, truth.iris)
        assert (overlay.pixels == 255).sum() > 100
        text = circles_sidecar(truth.pupil, truth.iris)
        assert text.startswith("pupil ") and "\niris " in text
