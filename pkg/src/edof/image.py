"""Floating-point image container, resampling, convolution and file I/O.

Pixel images live in [0, 1] with a per-pixel validity mask; filter responses
produced by :func:`convolve2d` may leave that range. Coordinates are (x, y)
with x indexing columns and y indexing rows. 8-bit conversion is
``floor(v * 255 + 0.5)`` after clamping to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage

from .errors import FormatError, ParameterError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass
class ImageF:
    """Raster of shape (height, width, channels) float32 plus a boolean mask.

    The mask is true where a pixel carries real scene content; warping
    introduces false entries for canvas pixels outside the source.
    """

    data: np.ndarray
    mask: np.ndarray | None = field(default=None)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ParameterError(f"image data must be (H, W, 1|3), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ParameterError("image data must be finite")
        self.data = data
        if self.mask is None:
            self.mask = np.ones(data.shape[:2], dtype=bool)
        else:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != data.shape[:2]:
                raise ParameterError(
                    f"mask shape {mask.shape} does not match image {data.shape[:2]}"
                )
            self.mask = mask

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def plane(self) -> np.ndarray:
        """The single channel as a 2-D array (1-channel images only)."""
        if self.channels != 1:
            raise ParameterError("plane() requires a 1-channel image")
        return self.data[:, :, 0]

    def valid_fraction(self) -> float:
        return float(self.mask.mean())

    def copy(self) -> "ImageF":
        return ImageF(self.data.copy(), self.mask.copy())


@dataclass(frozen=True)
class Kernel2D:
    """Square convolution kernel with an odd size so it has a center tap."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 2 or taps.shape[0] != taps.shape[1]:
            raise ParameterError(f"kernel must be square, got {taps.shape}")
        if taps.shape[0] % 2 == 0 or taps.shape[0] < 1:
            raise ParameterError(f"kernel size must be odd and >= 1, got {taps.shape[0]}")
        object.__setattr__(self, "taps", taps)

    @property
    def size(self) -> int:
        return self.taps.shape[0]


@dataclass
class ViewGrid:
    """Row-major collection of source views; slot index = row * cols + col."""

    views: list[ImageF]
    rows: int = 3
    cols: int = 3
    focus_depths: list[float] | None = None

    def __post_init__(self):
        if len(self.views) != self.rows * self.cols:
            raise ParameterError(
                f"expected {self.rows * self.cols} views, got {len(self.views)}"
            )

    def view_at(self, row: int, col: int) -> ImageF:
        return self.views[row * self.cols + col]


def to_grayscale(image: ImageF) -> ImageF:
    """Collapse RGB to luminance with weights (0.299, 0.587, 0.114)."""
    if image.channels == 1:
        return image
    w = np.asarray(LUMA_WEIGHTS, dtype=np.float32)
    gray = image.data @ w
    return ImageF(np.clip(gray, 0.0, 1.0)[:, :, None], image.mask.copy())


def convolve2d(image: ImageF, kernel: Kernel2D, border: str = "replicate") -> ImageF:
    """True 2-D convolution (kernel flipped) with replicate border padding.

    The validity mask is propagated by logical AND over the kernel footprint.
    This implementation needs scipy only as an engine; semantics are pinned by
    the tests against a direct nested-loop evaluation.
    """
    from scipy import ndimage

    if border != "replicate":
        raise ParameterError(f"unsupported border mode {border!r}")
    if image.channels != 1:
        raise ParameterError("convolve2d requires a 1-channel image")
    out = ndimage.convolve(
        image.plane().astype(np.float64), kernel.taps, mode="nearest"
    )
    if kernel.size == 1:
        mask = image.mask.copy()
    else:
        mask = ndimage.minimum_filter(
            image.mask.astype(np.uint8), size=kernel.size, mode="nearest"
        ).astype(bool)
    return ImageF(out.astype(np.float32)[:, :, None], mask)


def sample_bilinear(
    data: np.ndarray, mask: np.ndarray | None, xs: np.ndarray, ys: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized bilinear sampling of (H, W, C) data at float coordinates.

    A sample is valid only if its four cell corners are inside the image and
    all carry a true mask (``mask=None`` means all-valid). Invalid samples get
    value 0. Integer coordinates on the last row/column fall back to the
    adjacent cell with weight 1 so they stay exact and valid.
    """
    h, w = data.shape[:2]
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    finite = np.isfinite(xs) & np.isfinite(ys)
    inb = finite & (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    if h < 2 or w < 2:
        vals = np.zeros(xs.shape + (data.shape[2],), dtype=np.float64)
        return vals, np.zeros(xs.shape, dtype=bool)
    all_in = bool(inb.all())
    xc = xs if all_in else np.where(inb, xs, 0.0)
    yc = ys if all_in else np.where(inb, ys, 0.0)
    x0 = np.clip(np.floor(xc), 0, w - 2).astype(np.intp)
    y0 = np.clip(np.floor(yc), 0, h - 2).astype(np.intp)
    fx = (xc - x0)[..., None]
    fy = (yc - y0)[..., None]
    v00 = data[y0, x0]
    v01 = data[y0, x0 + 1]
    v10 = data[y0 + 1, x0]
    v11 = data[y0 + 1, x0 + 1]
    vals = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11)
    if mask is None:
        valid = inb
    else:
        mvalid = mask[y0, x0] & mask[y0, x0 + 1] & mask[y0 + 1, x0] & mask[y0 + 1, x0 + 1]
        valid = inb & mvalid
    if not all_in or mask is not None:
        vals[~valid] = 0.0
    return vals, valid


def bilinear_sample(image: ImageF, x: float, y: float) -> tuple[np.ndarray, bool]:
    """One bilinear sample; returns (per-channel values, valid flag)."""
    vals, valid = sample_bilinear(
        image.data, image.mask, np.asarray([x]), np.asarray([y])
    )
    return vals[0], bool(valid[0])


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and quantize with round-half-up to 8 bits."""
    v = np.clip(values, 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def load_image(path) -> ImageF:
    """Load a PNG (8-bit) or PFM (float) file; pixel values scaled to [0, 1]."""
    p = str(path)
    if p.lower().endswith(".pfm"):
        return _load_pfm(p)
    if p.lower().endswith(".png"):
        return _load_png(p)
    raise FormatError(f"unsupported image format: {p}")


def save_image(image: ImageF, path) -> None:
    """Write PNG (clamped, 8-bit quantized) or PFM (lossless float32)."""
    p = str(path)
    if p.lower().endswith(".pfm"):
        _save_pfm(image, p)
    elif p.lower().endswith(".png"):
        _save_png(image, p)
    else:
        raise FormatError(f"unsupported image format: {p}")


def _load_png(path: str) -> ImageF:
    with PILImage.open(path) as im:
        if im.mode == "P":
            im = im.convert("RGB")
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float32)[:, :, None]
        elif im.mode == "RGB":
            arr = np.asarray(im, dtype=np.float32)
        else:
            raise FormatError(f"unsupported PNG mode {im.mode!r} in {path}")
    return ImageF(arr / 255.0)


def _save_png(image: ImageF, path: str) -> None:
    arr = quantize_u8(image.data)
    if image.channels == 1:
        PILImage.fromarray(arr[:, :, 0], mode="L").save(path, format="PNG")
    else:
        PILImage.fromarray(arr, mode="RGB").save(path, format="PNG")


def _load_pfm(path: str) -> ImageF:
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise FormatError(f"not a PFM file: {path}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FormatError(f"bad PFM dimensions in {path}")
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        raw = fh.read(count * 4)
        if len(raw) != count * 4:
            raise FormatError(f"truncated PFM data in {path}")
    arr = np.frombuffer(raw, dtype=endian + "f4").reshape(height, width, channels)
    arr = arr[::-1].astype(np.float32)  # PFM rows are stored bottom-up
    if abs(scale) not in (0.0, 1.0):
        arr = arr * abs(scale)
    return ImageF(np.ascontiguousarray(arr))


def _save_pfm(image: ImageF, path: str) -> None:
    header = b"PF\n" if image.channels == 3 else b"Pf\n"
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(f"{image.width} {image.height}\n".encode("ascii"))
        fh.write(b"-1.0\n")  # negative scale marks little-endian data
        flipped = image.data[::-1].astype("<f4")
        fh.write(flipped.tobytes())


def save_mask_png(mask: np.ndarray, path) -> None:
    """Write a boolean mask as an 8-bit PNG with values 0/255."""
    arr = np.where(mask, 255, 0).astype(np.uint8)
    PILImage.fromarray(arr, mode="L").save(str(path), format="PNG")


def load_mask_png(path) -> np.ndarray:
    with PILImage.open(str(path)) as im:
        if im.mode != "L":
            raise FormatError(f"mask PNG must be grayscale: {path}")
        return np.asarray(im) >= 128


__all__ = [
    "ImageF",
    "Kernel2D",
    "ViewGrid",
    "LUMA_WEIGHTS",
    "to_grayscale",
    "convolve2d",
    "bilinear_sample",
    "sample_bilinear",
    "quantize_u8",
    "load_image",
    "save_image",
    "save_mask_png",
    "load_mask_png",
]
