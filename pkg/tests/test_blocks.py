import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from edof.blocks import crop, mean_gradient, select_sharpest_pair, split_blocks
from edof.errors import ParameterError, SelectionError
from edof.image import ImageF
from edof.synth import texture

from conftest import random_image


class TestSplitBlocks:
    def test_even_split(self):
        grid = split_blocks((9, 9), 3, 3)
        assert grid.row_bounds == (0, 3, 6, 9)
        assert grid.col_bounds == (0, 3, 6, 9)
        assert all(
            grid.cell(p)[1] - grid.cell(p)[0] == 3 for p in grid.positions()
        )

    def test_remainder_goes_to_last(self):
        grid = split_blocks((10, 10), 3, 3)
        assert grid.row_bounds == (0, 3, 6, 10)
        assert grid.col_bounds == (0, 3, 6, 10)

    def test_single_cell(self):
        grid = split_blocks((7, 5), 1, 1)
        assert grid.cell((0, 0)) == (0, 7, 0, 5)

    def test_zero_rows_rejected(self):
        with pytest.raises(ParameterError):
            split_blocks((9, 9), 0, 3)

    def test_canvas_smaller_than_grid_rejected(self):
        with pytest.raises(ParameterError):
            split_blocks((2, 9), 3, 3)


class TestMeanGradient:
    def test_constant_is_zero(self):
        mg = mean_gradient(ImageF(np.full((5, 5, 1), 0.3, np.float32)))
        assert mg.value == 0.0
        assert mg.has_content

    def test_horizontal_ramp(self):
        s = 0.01
        data = np.tile(np.arange(8, dtype=np.float32) * s, (8, 1))[:, :, None]
        mg = mean_gradient(ImageF(data))
        assert mg.value == pytest.approx(s / np.sqrt(2), rel=1e-6)

    def test_no_valid_pairs_flags_no_content(self):
        img = ImageF(np.ones((4, 4, 1), np.float32), np.zeros((4, 4), bool))
        mg = mean_gradient(img)
        assert mg.value == 0.0
        assert not mg.has_content

    def test_masked_pixels_leave_sum_and_count(self):
        # One column of strong edges masked out: score must drop to zero.
        data = np.zeros((4, 4, 1), np.float32)
        data[:, 2:, 0] = 1.0
        mask = np.ones((4, 4), bool)
        mask[:, 2] = False
        mg = mean_gradient(ImageF(data, mask))
        assert mg.value == 0.0
        assert mg.has_content  # pairs away from the masked column remain

    def test_intensity_shift_invariant(self, rng):
        base = rng.random((6, 6)).astype(np.float32) * 0.5
        a = mean_gradient(ImageF(base[:, :, None]))
        b = mean_gradient(ImageF((base + 0.3)[:, :, None]))
        assert a.value == pytest.approx(b.value, rel=1e-5)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.05, 1.0))
    def test_contrast_scales_linearly(self, a):
        rng = np.random.default_rng(7)
        base = rng.random((6, 6)).astype(np.float64)
        full = mean_gradient(ImageF(base[:, :, None].astype(np.float32)))
        scaled = mean_gradient(ImageF((a * base)[:, :, None].astype(np.float32)))
        assert scaled.value == pytest.approx(a * full.value, rel=1e-3, abs=1e-7)

    def test_sharp_beats_blurred_texture(self):
        tex = texture(3, 0, 0, 64, 64)
        blurred = ndimage.gaussian_filter(tex, 2.0)
        sharp_mg = mean_gradient(ImageF(tex.astype(np.float32)[:, :, None]))
        blur_mg = mean_gradient(ImageF(blurred.astype(np.float32)[:, :, None]))
        assert sharp_mg.value > blur_mg.value

    def test_too_small_rejected(self):
        with pytest.raises(ParameterError):
            mean_gradient(ImageF(np.zeros((1, 5, 1), np.float32)))


class TestSelectSharpestPair:
    def test_identical_views_tie_break(self, rng):
        view = random_image(rng, 12, 12)
        views = [view.copy() for _ in range(4)]
        grid = split_blocks((12, 12), 2, 2)
        sel = select_sharpest_pair(views, grid, (0, 0))
        assert (sel.primary_view, sel.secondary_view) == (0, 1)

    def test_sharp_view_wins(self):
        tex = texture(9, 0, 0, 24, 24).astype(np.float32)
        sharp = ImageF(tex[:, :, None])
        blurred = ImageF(ndimage.gaussian_filter(tex, 2.0)[:, :, None])
        views = [blurred.copy(), blurred.copy(), sharp, blurred.copy()]
        grid = split_blocks((24, 24), 1, 1)
        sel = select_sharpest_pair(views, grid, (0, 0))
        assert sel.primary_view == 2

    def test_uncovered_view_excluded(self, rng):
        grid = split_blocks((12, 12), 2, 2)
        covered = [random_image(rng, 12, 12) for _ in range(2)]
        empty = ImageF(
            np.ones((12, 12, 1), np.float32) * 0.9, np.zeros((12, 12), bool)
        )
        sel = select_sharpest_pair(covered + [empty], grid, (0, 0))
        assert 2 not in (sel.primary_view, sel.secondary_view)
        assert sel.coverage[2] == 0.0

    def test_too_few_eligible_raises_with_position(self, rng):
        grid = split_blocks((12, 12), 2, 2)
        views = [
            random_image(rng, 12, 12),
            ImageF(np.ones((12, 12, 1), np.float32), np.zeros((12, 12), bool)),
        ]
        with pytest.raises(SelectionError) as exc:
            select_sharpest_pair(views, grid, (1, 1))
        assert exc.value.position == (1, 1)

    def test_permutation_consistency(self, rng):
        views = [random_image(rng, 16, 16) for _ in range(5)]
        grid = split_blocks((16, 16), 2, 2)
        sel = select_sharpest_pair(views, grid, (0, 1))
        perm = [3, 0, 4, 1, 2]  # new order: views[3], views[0], ...
        sel_p = select_sharpest_pair([views[i] for i in perm], grid, (0, 1))
        assert perm[sel_p.primary_view] == sel.primary_view
        assert perm[sel_p.secondary_view] == sel.secondary_view


class TestCrop:
    def test_crop_matches_cell(self, rng):
        img = random_image(rng, 10, 10)
        grid = split_blocks((10, 10), 3, 3)
        sub = crop(img, grid.cell((2, 2)))
        np.testing.assert_array_equal(sub.data, img.data[6:10, 6:10])
