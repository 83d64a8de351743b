import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edof.align import (
    AlignParams,
    Homography,
    align_grid,
    compute_descriptors,
    detect_features,
    estimate_homography,
    fit_homography_dlt,
    match_features,
    modify_homography,
    warp_image,
)
from edof.errors import (
    AlignmentError,
    EstimationError,
    ParameterError,
)
from edof.image import ImageF, ViewGrid, to_grayscale
from edof.synth import default_capture, default_scene, render_scene, texture


def textured_image(seed=0, size=96):
    return ImageF(texture(seed, 0, 0, size, size).astype(np.float32)[:, :, None])


class TestDetect:
    def test_constant_image_yields_nothing(self):
        img = ImageF(np.full((64, 64, 1), 0.5, np.float32))
        assert detect_features(img) == []

    def test_bright_square_localized(self):
        data = np.zeros((64, 64, 1), np.float32)
        data[30:35, 30:35, 0] = 1.0
        kps = detect_features(ImageF(data), threshold=1e-6)
        assert kps
        best = kps[0]
        assert abs(best.x - 32.0) <= 2.0
        assert abs(best.y - 32.0) <= 2.0

    def test_sorted_and_capped(self):
        img = textured_image(1)
        kps = detect_features(img, max_points=25)
        assert len(kps) <= 25
        responses = [k.response for k in kps]
        assert responses == sorted(responses, reverse=True)

    def test_small_image_rejected(self):
        with pytest.raises(ParameterError):
            detect_features(ImageF(np.zeros((16, 16, 1), np.float32)))

    def test_coordinates_inside_bounds(self):
        img = textured_image(2)
        for k in detect_features(img):
            assert 0 <= k.x <= img.width - 1
            assert 0 <= k.y <= img.height - 1


class TestDescriptors:
    def test_deterministic(self):
        img = textured_image(3)
        kps = detect_features(img)
        k1, d1 = compute_descriptors(img, kps)
        k2, d2 = compute_descriptors(img, kps)
        assert k1 == k2
        np.testing.assert_array_equal(d1, d2)

    def test_unit_norm(self):
        img = textured_image(4)
        kps = detect_features(img)
        _, desc = compute_descriptors(img, kps)
        assert len(desc)
        norms = np.linalg.norm(desc, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-5)

    def test_brightness_offset_invariant(self):
        # Compress the texture into [0.1, 0.7] so +0.2 cannot clamp; the
        # Haar gradients are pure differences, so descriptors must not move.
        base = 0.1 + 0.6 * (texture(5, 0, 0, 96, 96) - 0.08) / 0.88
        img = ImageF(base.astype(np.float32)[:, :, None])
        bright = ImageF((base + 0.2).astype(np.float32)[:, :, None])
        kps = detect_features(img, threshold=1e-6)
        k1, d1 = compute_descriptors(img, kps)
        k2, d2 = compute_descriptors(bright, k1)
        assert len(k1) == len(k2) > 0
        np.testing.assert_allclose(d1, d2, atol=1e-4)

    def test_border_keypoints_dropped(self):
        img = textured_image(6)
        kps = detect_features(img)
        from edof.align import Keypoint

        edge = Keypoint(x=1.0, y=1.0, scale=1.2, response=1.0)
        kept, desc = compute_descriptors(img, kps + [edge])
        assert edge not in kept
        assert len(kept) == len(desc)


class TestMatching:
    def test_orthonormal_self_match(self):
        desc = np.eye(8, 64)
        matches = match_features(desc, desc, ratio_threshold=0.9)
        assert len(matches) == 8
        for m in matches:
            assert m.index_a == m.index_b
            assert m.distance == pytest.approx(0.0)

    def test_single_candidate_gives_nothing(self):
        desc = np.eye(3, 64)
        assert match_features(desc, desc[:1], 0.9) == []

    def test_zero_descriptors_unmatchable(self):
        a = np.zeros((2, 64))
        b = np.eye(3, 64)
        assert match_features(a, b, 0.9) == []

    def test_synthetic_pair_matches(self, small_grid):
        grid, _ = small_grid
        ga = to_grayscale(grid.views[0])
        gb = to_grayscale(grid.views[4])
        ka, da = compute_descriptors(ga, detect_features(ga))
        kb, db = compute_descriptors(gb, detect_features(gb))
        matches = match_features(da, db)
        assert len(matches) >= 20


class TestEstimateHomography:
    def test_identity_from_four_points(self):
        pts = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]])
        h, inliers = estimate_homography(pts, pts)
        np.testing.assert_allclose(h.m, np.eye(3), atol=1e-9)
        assert inliers.all()

    def test_translation_matches_mean_shift_oracle(self, rng):
        pts = rng.uniform(0, 100, size=(20, 2))
        shift = np.array([7.0, -3.0])
        h, _ = estimate_homography(pts, pts + shift)
        oracle = np.mean((pts + shift) - pts, axis=0)  # least squares for pure shift
        expected = np.eye(3)
        expected[:2, 2] = oracle
        np.testing.assert_allclose(h.m, expected, atol=1e-6)

    def test_projective_with_outliers(self, rng):
        planted = Homography(
            np.array([[1.01, 0.02, 5.0], [-0.015, 0.99, -8.0], [1e-5, -2e-5, 1.0]])
        )
        inl = rng.uniform(30, 480, size=(20, 2))
        mapped = planted.apply(inl)
        out_a = rng.uniform(0, 512, size=(10, 2))
        out_b = rng.uniform(0, 512, size=(10, 2))
        pa = np.vstack([inl, out_a])
        pb = np.vstack([mapped, out_b])
        h, mask = estimate_homography(pa, pb, seed=3)
        corners = np.array([[0.0, 0.0], [511.0, 0.0], [511.0, 511.0], [0.0, 511.0]])
        err = np.linalg.norm(h.apply(corners) - planted.apply(corners), axis=1)
        assert err.max() < 0.5
        assert mask[:20].sum() >= 18

    def test_too_few_points(self):
        pts = np.zeros((3, 2))
        with pytest.raises(ParameterError):
            estimate_homography(pts, pts)

    def test_degenerate_points_fail(self):
        # Three of four collinear: every minimal sample is degenerate.
        pa = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [5.0, 0.0]])
        with pytest.raises(EstimationError):
            estimate_homography(pa, pa + 1.0, max_iterations=50)

    def test_inlier_monotonicity(self, rng):
        planted = Homography(np.array([[1.0, 0.0, 4.0], [0.0, 1.0, -2.0], [0, 0, 1.0]]))
        base = rng.uniform(0, 200, size=(12, 2))
        extra = rng.uniform(0, 200, size=(8, 2))
        _, mask_small = estimate_homography(base, planted.apply(base), seed=1)
        pa = np.vstack([base, extra])
        _, mask_big = estimate_homography(pa, planted.apply(pa), seed=1)
        assert mask_big.sum() >= mask_small.sum()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_dlt_exact_recovery(self, seed):
        rng = np.random.default_rng(seed)
        m = np.eye(3) + rng.uniform(-0.1, 0.1, (3, 3))
        m[2, 2] = 1.0
        if abs(np.linalg.det(m)) < 1e-3:
            return
        planted = Homography(m)
        pts = rng.uniform(0, 100, size=(8, 2))
        fitted = fit_homography_dlt(pts, planted.apply(pts))
        assert np.linalg.norm(fitted.m - planted.m) < 1e-6


class TestModifyHomography:
    def test_identity(self):
        h, offset, canvas = modify_homography(Homography.identity(), (40, 30))
        np.testing.assert_allclose(h.m, np.eye(3), atol=1e-12)
        assert offset == (0, 0)
        assert canvas == (40, 30)

    def test_negative_translation_compensated(self):
        h, offset, canvas = modify_homography(
            Homography.translation(-10, -5), (40, 30)
        )
        assert offset == (10, 5)
        np.testing.assert_allclose(h.m, np.eye(3), atol=1e-12)
        assert canvas == (45, 40)  # benchmark frame shifted by (10, 5)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000))
    def test_corners_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        m = np.eye(3) + rng.uniform(-0.4, 0.4, (3, 3)) * np.array(
            [[0.2, 0.2, 100], [0.2, 0.2, 100], [2e-3, 2e-3, 0.2]]
        )
        if abs(np.linalg.det(m)) < 1e-6:
            return
        h = Homography(m)
        corners = np.array([[0.0, 0.0], [63.0, 0.0], [63.0, 63.0], [0.0, 63.0]])
        if np.any(
            np.abs(np.column_stack([corners, np.ones(4)]) @ h.m.T[:, 2]) < 1e-6
        ):
            return
        modified, _, _ = modify_homography(h, (64, 64))
        warped = modified.apply(corners)
        assert warped.min() >= -1e-9


class TestWarp:
    def test_identity_is_lossless(self, rng):
        img = ImageF(rng.random((20, 24, 1)).astype(np.float32))
        out = warp_image(img, Homography.identity(), (20, 24))
        np.testing.assert_array_equal(out.data, img.data)
        assert out.mask.all()

    def test_integer_translation_shifts_exactly(self, rng):
        img = ImageF(rng.random((16, 16, 1)).astype(np.float32))
        out = warp_image(img, Homography.translation(3, 2), (20, 20))
        np.testing.assert_array_equal(out.data[2:18, 3:19], img.data)
        assert not out.mask[:2].any()
        assert out.mask[2:18, 3:19].all()

    def test_range_preserved(self, rng):
        img = ImageF(rng.random((32, 32, 1)).astype(np.float32))
        h = Homography(np.array([[1.02, 0.03, -2.0], [0.01, 0.97, 1.5], [1e-4, 0, 1]]))
        out = warp_image(img, h, (40, 40))
        assert out.data.min() >= 0.0
        assert out.data.max() <= 1.0

    def test_warp_against_ground_truth(self):
        # Zero blur isolates resampling: every view equals the reference up to
        # its homography, so warping back must reproduce it. Raw error is
        # bounded by double-bilinear attenuation of the texture's finest
        # detail (measured 0.024); after mild smoothing only geometric
        # misalignment would remain, so that bound is much tighter.
        from scipy import ndimage

        scene = default_scene(3, (128, 128), seed=20)
        capture = default_capture(
            3, 8.0, (128, 128), seed=20, noise_sigma=0.0, blur_coefficient=0.0
        )
        grid, gt = render_scene(scene, capture)
        view = grid.views[0]
        planted = gt.homographies[0]
        warped = warp_image(view, planted, (128, 128))
        sel = warped.mask
        err = np.abs(warped.plane()[sel] - gt.all_in_focus.plane()[sel])
        assert err.mean() < 0.03
        smooth_w = ndimage.gaussian_filter(warped.plane().astype(np.float64), 1.0)
        smooth_r = ndimage.gaussian_filter(
            gt.all_in_focus.plane().astype(np.float64), 1.0
        )
        assert np.abs(smooth_w - smooth_r)[sel].mean() < 0.01


class TestAlignGrid:
    def test_identical_views_stay_put(self, rng):
        img = ImageF(texture(8, 0, 0, 96, 96).astype(np.float32)[:, :, None])
        grid = ViewGrid([img.copy() for _ in range(9)])
        result = align_grid(grid, 4)
        assert result.canvas_size == (96, 96)
        assert result.offset == (0, 0)
        for av in result.views:
            assert np.abs(av.homography_total.m - np.eye(3)).max() < 1e-6

    def test_benchmark_round_trip_exact(self, small_grid, small_aligned):
        grid, _ = small_grid
        result = small_aligned
        bench = next(v for v in result.views if v.view_index == 4)
        dx, dy = bench.offset
        h, w = grid.views[4].height, grid.views[4].width
        np.testing.assert_array_equal(
            bench.image.data[dy : dy + h, dx : dx + w], grid.views[4].data
        )

    def test_shared_canvas(self, small_aligned):
        sizes = {
            (av.image.height, av.image.width) for av in small_aligned.views
        }
        assert len(sizes) == 1
        assert sizes == {small_aligned.canvas_size}

    def test_recovers_planted_homographies(self, small_grid, small_aligned):
        grid, gt = small_grid
        result = small_aligned
        n = grid.views[0].height
        corners = np.array(
            [[0.0, 0.0], [n - 1.0, 0.0], [n - 1.0, n - 1.0], [0.0, n - 1.0]]
        )
        errs = []
        for av in result.views:
            offset = Homography.translation(-av.offset[0], -av.offset[1])
            est = offset.compose(av.homography_total)
            planted = gt.homographies[av.view_index]
            errs.append(
                np.linalg.norm(est.apply(corners) - planted.apply(corners), axis=1).mean()
            )
        assert np.mean(errs) < 0.5

    def test_unalignable_view_raises_with_index(self, small_grid):
        grid, _ = small_grid
        views = [v.copy() for v in grid.views]
        views[2] = ImageF(np.full_like(views[2].data, 0.5))  # featureless
        bad = ViewGrid(views)
        with pytest.raises(AlignmentError) as exc:
            align_grid(bad, 4)
        assert exc.value.failed_views == (2,)

    def test_skip_failed_drops_view(self, small_grid):
        grid, _ = small_grid
        views = [v.copy() for v in grid.views]
        views[2] = ImageF(np.full_like(views[2].data, 0.5))
        result = align_grid(ViewGrid(views), 4, skip_failed=True)
        assert len(result.views) == 8
        assert all(av.view_index != 2 for av in result.views)

    def test_bad_benchmark_index(self, small_grid):
        grid, _ = small_grid
        with pytest.raises(ParameterError):
            align_grid(grid, 11)
