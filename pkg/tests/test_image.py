import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image as PILImage

from edof.errors import FormatError, ParameterError
from edof.image import (
    ImageF,
    Kernel2D,
    bilinear_sample,
    convolve2d,
    load_image,
    quantize_u8,
    save_image,
    to_grayscale,
)

from conftest import random_image


def conv_oracle(img, taps):
    """Direct nested-loop true convolution with replicate borders."""
    h, w = img.shape
    k = taps.shape[0]
    half = k // 2
    out = np.zeros_like(img, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for u in range(k):
                for v in range(k):
                    yy = min(max(y + half - u, 0), h - 1)
                    xx = min(max(x + half - v, 0), w - 1)
                    acc += taps[u, v] * img[yy, xx]
            out[y, x] = acc
    return out


class TestPng:
    def test_load_scales_bytes(self, tmp_path):
        path = tmp_path / "tiny.png"
        PILImage.fromarray(
            np.array([[0, 128], [255, 64]], dtype=np.uint8), mode="L"
        ).save(path)
        img = load_image(path)
        expected = np.array([[0.0, 128 / 255], [1.0, 64 / 255]], dtype=np.float32)
        assert img.channels == 1
        np.testing.assert_array_equal(img.plane(), expected)
        assert img.mask.all()

    def test_missing_path_raises(self, tmp_path):
        with pytest.raises(OSError):
            load_image(tmp_path / "nope.png")

    def test_unknown_extension(self, tmp_path):
        with pytest.raises(FormatError):
            load_image(tmp_path / "file.tiff")

    def test_round_trip_within_one_level(self, tmp_path, rng):
        img = random_image(rng, 13, 17, 3)
        save_image(img, tmp_path / "x.png")
        back = load_image(tmp_path / "x.png")
        assert np.abs(back.data - img.data).max() <= 1 / 255 + 1e-7

    def test_all_zero_decodes_to_zero_bytes(self, tmp_path):
        save_image(ImageF(np.zeros((4, 4, 1), np.float32)), tmp_path / "z.png")
        with PILImage.open(tmp_path / "z.png") as im:
            assert np.asarray(im).sum() == 0

    def test_half_quantizes_to_128(self):
        assert quantize_u8(np.array([0.5]))[0] == 128

    def test_clamps_before_quantizing(self, tmp_path):
        img = ImageF(np.zeros((2, 2, 1), np.float32))
        img.data[0, 0, 0] = 1.0
        save_image(img, tmp_path / "c.png")
        back = load_image(tmp_path / "c.png")
        assert back.plane()[0, 0] == 1.0


class TestPfm:
    @pytest.mark.parametrize("channels", [1, 3])
    def test_round_trip_bit_exact(self, tmp_path, rng, channels):
        img = random_image(rng, 9, 7, channels)
        save_image(img, tmp_path / "f.pfm")
        back = load_image(tmp_path / "f.pfm")
        np.testing.assert_array_equal(back.data, img.data)

    def test_not_a_pfm(self, tmp_path):
        (tmp_path / "bad.pfm").write_bytes(b"nonsense")
        with pytest.raises(FormatError):
            load_image(tmp_path / "bad.pfm")


class TestGrayscale:
    def test_white_maps_to_one(self):
        img = ImageF(np.ones((2, 2, 3), np.float32))
        np.testing.assert_allclose(to_grayscale(img).plane(), 1.0, atol=1e-7)

    def test_red_weight(self):
        data = np.zeros((2, 2, 3), np.float32)
        data[:, :, 0] = 1.0
        np.testing.assert_allclose(
            to_grayscale(ImageF(data)).plane(), 0.299, atol=1e-7
        )

    def test_gray_input_unchanged(self, rng):
        img = random_image(rng, 5, 5, 1)
        assert to_grayscale(img) is img


class TestConvolve2d:
    def test_identity_kernel(self, rng):
        img = random_image(rng, 8, 8)
        out = convolve2d(img, Kernel2D(np.array([[1.0]])))
        np.testing.assert_allclose(out.plane(), img.plane(), atol=1e-7)
        assert out.mask.all()

    def test_laplacian_annihilates_constant(self):
        img = ImageF(np.full((6, 6, 1), 0.4, np.float32))
        lap = Kernel2D(np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], float))
        np.testing.assert_allclose(convolve2d(img, lap).plane(), 0.0, atol=1e-6)

    def test_box_kernel_on_impulse(self):
        data = np.zeros((7, 7, 1), np.float32)
        data[3, 3, 0] = 1.0
        out = convolve2d(ImageF(data), Kernel2D(np.full((3, 3), 1 / 9)))
        expected = np.zeros((7, 7))
        expected[2:5, 2:5] = 1 / 9
        np.testing.assert_allclose(out.plane(), expected, atol=1e-7)

    def test_matches_loop_oracle(self, rng):
        img = rng.random((6, 5)).astype(np.float32)
        taps = rng.normal(size=(3, 3))
        out = convolve2d(ImageF(img[:, :, None]), Kernel2D(taps))
        # The oracle's index arithmetic (y + half - u) flips the kernel,
        # which is exactly true convolution.
        np.testing.assert_allclose(
            out.plane(), conv_oracle(img.astype(np.float64), taps), atol=1e-5
        )

    def test_delta_kernel_identity_values(self, rng):
        img = random_image(rng, 9, 9)
        delta = np.zeros((3, 3))
        delta[1, 1] = 1.0
        out = convolve2d(img, Kernel2D(delta))
        np.testing.assert_allclose(out.plane(), img.plane(), atol=1e-6)

    def test_linearity(self, rng):
        x = rng.random((7, 7)).astype(np.float32)
        y = rng.random((7, 7)).astype(np.float32)
        k = Kernel2D(rng.normal(size=(3, 3)))
        lhs = convolve2d(ImageF((0.3 * x + 0.6 * y)[:, :, None]), k).plane()
        rhs = 0.3 * convolve2d(ImageF(x[:, :, None]), k).plane() + 0.6 * convolve2d(
            ImageF(y[:, :, None]), k
        ).plane()
        np.testing.assert_allclose(lhs, rhs, atol=1e-5)

    def test_mask_erodes_over_footprint(self):
        mask = np.ones((5, 5), bool)
        mask[2, 2] = False
        img = ImageF(np.ones((5, 5, 1), np.float32), mask)
        out = convolve2d(img, Kernel2D(np.full((3, 3), 1 / 9)))
        assert not out.mask[1:4, 1:4].any()
        assert out.mask[0, 0] and out.mask[4, 4]

    def test_even_kernel_rejected(self):
        with pytest.raises(ParameterError):
            Kernel2D(np.ones((2, 2)))

    def test_color_input_rejected(self, rng):
        with pytest.raises(ParameterError):
            convolve2d(random_image(rng, 5, 5, 3), Kernel2D(np.array([[1.0]])))


class TestBilinearSample:
    def test_integer_coordinates_exact(self, rng):
        img = random_image(rng, 4, 5)
        for (x, y) in [(0, 0), (4, 3), (2, 1)]:
            vals, valid = bilinear_sample(img, x, y)
            assert valid
            assert vals[0] == pytest.approx(img.plane()[y, x], abs=1e-7)

    def test_outside_invalid(self, rng):
        img = random_image(rng, 4, 4)
        _, valid = bilinear_sample(img, -1.0, -1.0)
        assert not valid

    def test_midpoint_interpolates(self):
        data = np.zeros((2, 2, 1), np.float32)
        data[0, 1, 0] = 1.0
        vals, valid = bilinear_sample(ImageF(data), 0.5, 0.0)
        assert valid
        assert vals[0] == pytest.approx(0.5)

    def test_masked_neighbor_invalidates(self):
        mask = np.ones((3, 3), bool)
        mask[1, 1] = False
        img = ImageF(np.ones((3, 3, 1), np.float32), mask)
        _, valid = bilinear_sample(img, 0.5, 0.5)
        assert not valid
        _, valid_far = bilinear_sample(img, 1.5, 1.5)
        assert not valid_far


class TestImageInvariants:
    def test_rejects_bad_channel_count(self):
        with pytest.raises(ParameterError):
            ImageF(np.zeros((3, 3, 2), np.float32))

    def test_rejects_non_finite(self):
        data = np.zeros((2, 2, 1), np.float32)
        data[0, 0, 0] = np.nan
        with pytest.raises(ParameterError):
            ImageF(data)

    def test_rejects_mask_shape_mismatch(self):
        with pytest.raises(ParameterError):
            ImageF(np.zeros((2, 2, 1), np.float32), np.ones((3, 3), bool))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 255))
    def test_quantize_inverts_load_scale(self, byte):
        assert quantize_u8(np.array([byte / 255.0]))[0] == byte
