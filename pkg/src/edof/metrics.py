"""Objective evaluation: information entropy, local contrast, SSIM wrapper.

Both no-reference metrics respect the validity mask so warp canvas never
depresses scores. Local contrast is a Michelson-style windowed
(max - min) / (max + min) mean over non-overlapping, fully valid tiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricUndefinedError, ParameterError
from .image import ImageF, to_grayscale
from .ssim import ssim_masked

LC_EPSILON = 1e-6


@dataclass
class MetricsReport:
    ie: float  # bits, [0, 8]
    lc: float  # dimensionless, [0, 1]
    ssim_vs_reference: float | None
    valid_pixel_fraction: float

    def to_dict(self) -> dict:
        d = {
            "ie": self.ie,
            "lc": self.lc,
            "valid_pixel_fraction": self.valid_pixel_fraction,
        }
        if self.ssim_vs_reference is not None:
            d["ssim_vs_reference"] = self.ssim_vs_reference
        return d

    @staticmethod
    def csv_header() -> str:
        return "ie,lc,ssim_vs_reference,valid_pixel_fraction"

    def csv_row(self) -> str:
        s = "" if self.ssim_vs_reference is None else f"{self.ssim_vs_reference:.6f}"
        return f"{self.ie:.6f},{self.lc:.6f},{s},{self.valid_pixel_fraction:.6f}"


def information_entropy(image: ImageF) -> float:
    """Shannon entropy in bits of the 256-bin histogram of valid pixels."""
    gray = to_grayscale(image)
    values = gray.plane()[gray.mask]
    if values.size == 0:
        raise MetricUndefinedError("no valid pixels for information entropy")
    bins = np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.int64)
    counts = np.bincount(bins, minlength=256)
    p = counts[counts > 0] / values.size
    return float(-(p * np.log2(p)).sum())


def local_contrast(image: ImageF, window: int = 8) -> float:
    """Mean Michelson contrast over non-overlapping fully-valid tiles."""
    if window < 1:
        raise ParameterError("window must be >= 1")
    gray = to_grayscale(image)
    g = gray.plane().astype(np.float64)
    m = gray.mask
    h, w = g.shape
    th, tw = h // window, w // window
    if th == 0 or tw == 0:
        raise MetricUndefinedError("image smaller than one contrast tile")
    g = g[: th * window, : tw * window].reshape(th, window, tw, window)
    mm = m[: th * window, : tw * window].reshape(th, window, tw, window)
    full = mm.all(axis=(1, 3))
    if not full.any():
        raise MetricUndefinedError("no fully valid contrast tile")
    tmax = g.max(axis=(1, 3))
    tmin = g.min(axis=(1, 3))
    contrast = (tmax - tmin) / (tmax + tmin + LC_EPSILON)
    return float(contrast[full].mean())


def evaluate(image: ImageF, reference: ImageF | None = None, lc_window: int = 8) -> MetricsReport:
    """Assemble IE, LC, optional masked SSIM against a reference, and the
    valid-pixel fraction."""
    ssim_score = None
    if reference is not None:
        if (reference.height, reference.width) != (image.height, image.width):
            raise ParameterError(
                f"reference size {(reference.height, reference.width)} does not "
                f"match image {(image.height, image.width)}"
            )
        ssim_score = ssim_masked(
            to_grayscale(image), to_grayscale(reference), image.mask, reference.mask
        )
    return MetricsReport(
        ie=information_entropy(image),
        lc=local_contrast(image, lc_window),
        ssim_vs_reference=ssim_score,
        valid_pixel_fraction=image.valid_fraction(),
    )


__all__ = [
    "LC_EPSILON",
    "MetricsReport",
    "evaluate",
    "information_entropy",
    "local_contrast",
]
