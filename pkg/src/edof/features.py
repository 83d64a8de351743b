"""Multi-scale filter-bank feature pyramid and the information measure that
weighs how much each fusion source must be preserved.

The extractor applies a fixed bank of eight 9x9 filters (four oriented
first-derivative-of-Gaussian filters, two Laplacian-of-Gaussian scales, one
Gaussian, one center-surround difference) at five scales, halving resolution
between scales. A weight file with the same (8, k, k) shape can substitute
learned filters without changing the interface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import ParameterError
from .image import ImageF, to_grayscale

N_LEVELS = 5
N_CHANNELS = 8
BANK_SIZE = 9
MIN_INPUT = 48  # keeps the coarsest level at >= 3 px per side

LAPLACIAN = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)


class PreservationWeights(NamedTuple):
    wi: float
    wj: float
    c: float


@dataclass
class FeaturePyramid:
    """Five levels of (channels, height, width) feature maps."""

    levels: list[np.ndarray]

    def __post_init__(self):
        if len(self.levels) != N_LEVELS:
            raise ParameterError(f"pyramid must have {N_LEVELS} levels")
        for i, lvl in enumerate(self.levels):
            if lvl.ndim != 3:
                raise ParameterError(f"level {i} must be (channels, H, W)")
            if min(lvl.shape[1], lvl.shape[2]) < 3:
                raise ParameterError(f"level {i} smaller than 3 px per side")


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    half = size // 2
    return np.mgrid[-half : half + 1, -half : half + 1]


def _gaussian(size: int, sigma: float) -> np.ndarray:
    y, x = _grid(size)
    g = np.exp(-(x**2 + y**2) / (2.0 * sigma**2))
    return g / g.sum()


def _deriv_of_gaussian(size: int, sigma: float, angle_deg: float) -> np.ndarray:
    y, x = _grid(size)
    g = np.exp(-(x**2 + y**2) / (2.0 * sigma**2))
    theta = np.deg2rad(angle_deg)
    # Derivative along the unit direction (cos, sin); y grows downward.
    d = -(np.cos(theta) * x + np.sin(theta) * y) / sigma**2 * g
    return d


def _log(size: int, sigma: float) -> np.ndarray:
    y, x = _grid(size)
    r2 = x**2 + y**2
    return (r2 - 2.0 * sigma**2) / sigma**4 * np.exp(-r2 / (2.0 * sigma**2))


def _zero_dc_unit(f: np.ndarray) -> np.ndarray:
    f = f - f.mean()  # exact zero response to constants
    n = np.linalg.norm(f)
    return f / n if n > 0 else f


def default_filter_bank() -> np.ndarray:
    """The fixed (8, 9, 9) bank; all filters except the Gaussian have exactly
    zero DC response."""
    sigma = 1.2
    bank = [
        _zero_dc_unit(_deriv_of_gaussian(BANK_SIZE, sigma, a))
        for a in (0.0, 45.0, 90.0, 135.0)
    ]
    bank.append(_zero_dc_unit(_log(BANK_SIZE, 1.0)))
    bank.append(_zero_dc_unit(_log(BANK_SIZE, 2.0)))
    bank.append(_gaussian(BANK_SIZE, sigma))
    bank.append(_zero_dc_unit(_gaussian(BANK_SIZE, 1.0) - _gaussian(BANK_SIZE, 2.0)))
    return np.stack(bank)


_DEFAULT_BANK: np.ndarray | None = None


def _bank() -> np.ndarray:
    global _DEFAULT_BANK
    if _DEFAULT_BANK is None:
        _DEFAULT_BANK = default_filter_bank()
    return _DEFAULT_BANK


def load_filter_bank(path) -> np.ndarray:
    """Load an alternative (8, k, k) filter bank from a .npy file."""
    bank = np.load(str(path))
    if bank.ndim != 3 or bank.shape[0] != N_CHANNELS:
        raise ParameterError(f"filter bank must be ({N_CHANNELS}, k, k), got {bank.shape}")
    if bank.shape[1] != bank.shape[2] or bank.shape[1] % 2 == 0:
        raise ParameterError("filter bank kernels must be square with odd size")
    if not np.all(np.isfinite(bank)):
        raise ParameterError("filter bank contains non-finite taps")
    return bank.astype(np.float64)


def extract_features(image: ImageF | np.ndarray, bank: np.ndarray | None = None) -> FeaturePyramid:
    """Apply the filter bank at five scales.

    Level 1 filters the input; each next level filters the Gaussian-smoothed,
    2x-downsampled channel mean of the previous level. Replicate borders
    everywhere; fully deterministic.
    """
    if isinstance(image, ImageF):
        x = to_grayscale(image).plane().astype(np.float64)
    else:
        x = np.asarray(image, dtype=np.float64)
        if x.ndim == 3 and x.shape[2] == 1:
            x = x[:, :, 0]
        if x.ndim != 2:
            raise ParameterError("expected a 2-D array or 1-channel image")
    if min(x.shape) < MIN_INPUT:
        raise ParameterError(
            f"input must be >= {MIN_INPUT} px per side, got {x.shape}"
        )
    filters = _bank() if bank is None else bank
    levels = []
    for _ in range(N_LEVELS):
        maps = np.stack(
            [ndimage.correlate(x, f, mode="nearest") for f in filters]
        )
        levels.append(maps)
        smooth = ndimage.gaussian_filter(maps.mean(axis=0), 1.0, mode="nearest")
        x = smooth[::2, ::2]
    return FeaturePyramid(levels)


def information_measure(pyr: FeaturePyramid) -> float:
    """Mean squared Frobenius norm of the Laplacian of every feature map,
    averaged per level and across levels."""
    total = 0.0
    for lvl in pyr.levels:
        d, h, w = lvl.shape
        acc = 0.0
        for k in range(d):
            lap = ndimage.convolve(lvl[k], LAPLACIAN, mode="nearest")
            acc += float((lap**2).sum())
        total += acc / (h * w * d)
    return total / N_LEVELS


def preservation_degrees(hi_i: float, hi_j: float, c: float) -> PreservationWeights:
    """Softmax of (hI_i / c, hI_j / c) with max-subtraction for stability."""
    if c <= 0:
        raise ParameterError(f"temperature must be > 0, got {c}")
    if not (np.isfinite(hi_i) and np.isfinite(hi_j)):
        raise ParameterError("information measures must be finite")
    zi, zj = hi_i / c, hi_j / c
    m = max(zi, zj)
    ei, ej = np.exp(zi - m), np.exp(zj - m)
    s = ei + ej
    return PreservationWeights(float(ei / s), float(ej / s), float(c))


__all__ = [
    "FeaturePyramid",
    "LAPLACIAN",
    "MIN_INPUT",
    "PreservationWeights",
    "default_filter_bank",
    "extract_features",
    "information_measure",
    "load_filter_bank",
    "preservation_degrees",
]
