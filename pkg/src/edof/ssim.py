"""Structural similarity with an analytic gradient, plus MSE.

SSIM uses the standard 11x11 Gaussian window (sigma 1.5) and constants
C1 = 0.01^2, C2 = 0.03^2 on the [0, 1] range. Statistics are computed at
every fully-interior window position (valid-mode correlation) and the score
is their mean. The gradient of the mean score with respect to the first
image is exact: window statistics are linear in the raw moments, and the
adjoint of valid-mode correlation is full-mode convolution.
"""

from __future__ import annotations

import numpy as np
from scipy import signal

from .errors import ParameterError
from .image import ImageF

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    half = size // 2
    y, x = np.mgrid[-half : half + 1, -half : half + 1]
    w = np.exp(-(x**2 + y**2) / (2.0 * sigma**2))
    return w / w.sum()


_WINDOW = gaussian_window()


def as_plane(image) -> np.ndarray:
    """Accept an ImageF (1-channel) or bare 2-D array; returns float64."""
    if isinstance(image, ImageF):
        return image.plane().astype(np.float64)
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ParameterError(f"expected a 2-D image, got shape {arr.shape}")
    return arr


def _corr_valid(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    return signal.correlate(a, w, mode="valid")


def _adjoint(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    # Adjoint of valid-mode correlation is full-mode convolution.
    return signal.convolve(a, w, mode="full")


def ssim(x, y, window: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean SSIM between x and y and its gradient with respect to x."""
    xa = as_plane(x)
    ya = as_plane(y)
    if xa.shape != ya.shape:
        raise ParameterError(f"size mismatch: {xa.shape} vs {ya.shape}")
    w = _WINDOW if window is None else window
    if min(xa.shape) < w.shape[0]:
        raise ParameterError(
            f"image {xa.shape} smaller than the {w.shape[0]}x{w.shape[1]} window"
        )

    mu_x = _corr_valid(xa, w)
    mu_y = _corr_valid(ya, w)
    sxx = _corr_valid(xa * xa, w)
    syy = _corr_valid(ya * ya, w)
    sxy = _corr_valid(xa * ya, w)
    var_x = sxx - mu_x**2
    var_y = syy - mu_y**2
    cov = sxy - mu_x * mu_y

    a1 = 2.0 * mu_x * mu_y + C1
    a2 = 2.0 * cov + C2
    b1 = mu_x**2 + mu_y**2 + C1
    b2 = var_x + var_y + C2
    smap = (a1 * a2) / (b1 * b2)
    score = float(smap.mean())

    # Partials with respect to the raw moments (mu_x, sxx, sxy).
    d_mu_sig_fixed = (a2 / b2) * (2.0 * mu_y * b1 - 2.0 * mu_x * a1) / b1**2
    d_var = -smap / b2  # dS/d(sxx) through var_x
    d_cov = 2.0 * a1 / (b1 * b2)  # dS/d(sxy)
    d_mu = d_mu_sig_fixed - 2.0 * mu_x * d_var - mu_y * d_cov

    npos = smap.size
    grad = (
        _adjoint(d_mu, w)
        + 2.0 * xa * _adjoint(d_var, w)
        + ya * _adjoint(d_cov, w)
    ) / npos
    return score, grad


def ssim_score_only(x, y, window: np.ndarray | None = None) -> float:
    return ssim(x, y, window)[0]


def ssim_masked(x, y, mask_x: np.ndarray, mask_y: np.ndarray) -> float:
    """Mean SSIM over window positions whose footprint is fully valid in both
    masks. Raises when no window qualifies."""
    xa = as_plane(x)
    ya = as_plane(y)
    if xa.shape != ya.shape:
        raise ParameterError(f"size mismatch: {xa.shape} vs {ya.shape}")
    w = _WINDOW
    if min(xa.shape) < w.shape[0]:
        raise ParameterError("image smaller than the SSIM window")
    joint = (mask_x & mask_y).astype(np.float64)
    count = signal.correlate(joint, np.ones_like(w), mode="valid")
    ok = count >= w.size - 0.5
    if not ok.any():
        raise ParameterError("no fully valid SSIM window")
    smap = _ssim_map(xa, ya, w)
    return float(smap[ok].mean())


def _ssim_map(xa: np.ndarray, ya: np.ndarray, w: np.ndarray) -> np.ndarray:
    mu_x = _corr_valid(xa, w)
    mu_y = _corr_valid(ya, w)
    var_x = _corr_valid(xa * xa, w) - mu_x**2
    var_y = _corr_valid(ya * ya, w) - mu_y**2
    cov = _corr_valid(xa * ya, w) - mu_x * mu_y
    return ((2 * mu_x * mu_y + C1) * (2 * cov + C2)) / (
        (mu_x**2 + mu_y**2 + C1) * (var_x + var_y + C2)
    )


def mse(x, y) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to x."""
    xa = as_plane(x)
    ya = as_plane(y)
    if xa.shape != ya.shape:
        raise ParameterError(f"size mismatch: {xa.shape} vs {ya.shape}")
    diff = xa - ya
    return float((diff**2).mean()), 2.0 * diff / diff.size


__all__ = [
    "C1",
    "C2",
    "WINDOW_SIGMA",
    "WINDOW_SIZE",
    "as_plane",
    "gaussian_window",
    "mse",
    "ssim",
    "ssim_masked",
    "ssim_score_only",
]
