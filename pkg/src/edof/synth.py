"""Synthetic varifocal multiview grid generator with ground truth.

Scenes are fronto-parallel textured layers at distinct depths, so a single
homography per view is geometrically exact. Defocus is modeled as a Gaussian
blur whose sigma grows linearly with the depth distance between a layer and
the view's focus depth. All randomness flows from explicit seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .align import Homography, fit_homography_dlt
from .errors import ParameterError
from .image import ImageF, ViewGrid, sample_bilinear

Rect = tuple[int, int, int, int]  # (y0, x0, y1, x1), end-exclusive


@dataclass(frozen=True)
class LayerSpec:
    depth: float
    texture_seed: int
    region: Rect


@dataclass
class SceneSpec:
    layers: list[LayerSpec]
    canvas: tuple[int, int] = (512, 512)
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.layers) < 2:
            raise ParameterError("scene needs >= 2 layers")
        depths = [l.depth for l in self.layers]
        if len(set(depths)) != len(depths):
            raise ParameterError("layer depths must be distinct")
        h, w = self.canvas
        covered = np.zeros((h, w), dtype=bool)
        for layer in self.layers:
            y0, x0, y1, x1 = layer.region
            covered[max(0, y0) : min(h, y1), max(0, x0) : min(w, x1)] = True
        if not covered.all():
            raise ParameterError("layer regions must cover the canvas")


@dataclass(frozen=True)
class ViewSlot:
    focus_depth: float
    homography_true: Homography


@dataclass
class CaptureSpec:
    grid: list[ViewSlot]  # row-major, 9 slots
    blur_coefficient: float = 2.0  # blur sigma in pixels per scene depth unit
    noise_sigma: float = 0.0

    def __post_init__(self):
        if len(self.grid) != 9:
            raise ParameterError(f"capture grid must have 9 slots, got {len(self.grid)}")
        if self.blur_coefficient < 0 or self.noise_sigma < 0:
            raise ParameterError("blur coefficient and noise sigma must be >= 0")

    @property
    def focus_depths(self) -> list[float]:
        return [s.focus_depth for s in self.grid]


@dataclass
class GroundTruth:
    all_in_focus: ImageF
    homographies: list[Homography]
    focus_depths: list[float]


# ---------------------------------------------------------------------------
# Procedural texture: hashed value noise, consistent across any sample window


_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xC2B2AE3D27D4EB4F)


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """SplitMix64-style avalanche of lattice coordinates into [0, 1)."""
    seed_term = np.uint64((seed * 0x165667B19E3779F9) & 0xFFFFFFFFFFFFFFFF)
    h = (
        ix.astype(np.int64).astype(np.uint64) * _C1
        ^ iy.astype(np.int64).astype(np.uint64) * _C2
        ^ seed_term
    )
    h ^= h >> np.uint64(30)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(27)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(31)
    return h.astype(np.float64) / 2.0**64


def _value_noise(seed: int, ys: np.ndarray, xs: np.ndarray, period: int) -> np.ndarray:
    iy0 = np.floor_divide(ys, period)
    ix0 = np.floor_divide(xs, period)
    fy = (ys - iy0 * period) / period
    fx = (xs - ix0 * period) / period
    fy = fy * fy * (3.0 - 2.0 * fy)
    fx = fx * fx * (3.0 - 2.0 * fx)
    # Hash each lattice point once, then gather per pixel.
    ly0, ly1 = int(iy0.min()), int(iy0.max()) + 1
    lx0, lx1 = int(ix0.min()), int(ix0.max()) + 1
    lyy, lxx = np.mgrid[ly0 : ly1 + 1, lx0 : lx1 + 1]
    lattice = _hash01(lxx, lyy, seed)
    ri = iy0 - ly0
    ci = ix0 - lx0
    v00 = lattice[ri, ci]
    v01 = lattice[ri, ci + 1]
    v10 = lattice[ri + 1, ci]
    v11 = lattice[ri + 1, ci + 1]
    return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11)

_OCTAVES = ((32, 0.5), (16, 0.25), (8, 0.15), (4, 0.12))
_CHECKER_AMP = 0.08
_CHECKER_PERIOD = 2  # keeps detail below Nyquist so resampling preserves it


def texture(seed: int, y0: int, x0: int, height: int, width: int) -> np.ndarray:
    """Band-limited value noise plus high-frequency checker detail over an
    arbitrary window of the infinite texture plane; values stay inside (0, 1)."""
    ys, xs = np.mgrid[y0 : y0 + height, x0 : x0 + width]
    acc = np.zeros((height, width), dtype=np.float64)
    for period, amp in _OCTAVES:
        acc += amp * _value_noise(seed, ys, xs, period)
    acc /= sum(a for _, a in _OCTAVES)
    checker = (
        (np.floor_divide(xs, _CHECKER_PERIOD) + np.floor_divide(ys, _CHECKER_PERIOD)) & 1
    ).astype(np.float64)
    return 0.08 + 0.72 * acc + _CHECKER_AMP * checker


# ---------------------------------------------------------------------------
# Rendering


def _region_map(scene: SceneSpec, pad: tuple[int, int, int, int]) -> np.ndarray:
    """Layer index per padded-canvas pixel (painter order, later layers win);
    padding pixels inherit the nearest canvas pixel's layer."""
    h, w = scene.canvas
    owner = np.full((h, w), -1, dtype=np.int32)
    for i, layer in enumerate(scene.layers):
        y0, x0, y1, x1 = layer.region
        owner[max(0, y0) : min(h, y1), max(0, x0) : min(w, x1)] = i
    top, bottom, left, right = pad
    return np.pad(owner, ((top, bottom), (left, right)), mode="edge")


def _padding_for(capture: CaptureSpec, canvas: tuple[int, int]) -> tuple[int, int, int, int]:
    """Pad the canonical frame far enough that every view samples inside it."""
    h, w = canvas
    corners = np.array(
        [[0.0, 0.0], [w - 1.0, 0.0], [w - 1.0, h - 1.0], [0.0, h - 1.0]]
    )
    min_x = min_y = 0.0
    max_x, max_y = w - 1.0, h - 1.0
    for slot in capture.grid:
        c = slot.homography_true.apply(corners)
        min_x = min(min_x, c[:, 0].min())
        min_y = min(min_y, c[:, 1].min())
        max_x = max(max_x, c[:, 0].max())
        max_y = max(max_y, c[:, 1].max())
    top = int(math.ceil(-min_y)) + 2
    left = int(math.ceil(-min_x)) + 2
    bottom = int(math.ceil(max_y - (h - 1))) + 2
    right = int(math.ceil(max_x - (w - 1))) + 2
    return top, bottom, left, right


def _composite(
    textures: list[np.ndarray], owner: np.ndarray, sigmas: list[float]
) -> np.ndarray:
    out = np.zeros_like(textures[0])
    for i, tex in enumerate(textures):
        sel = owner == i
        if not sel.any():
            continue
        blurred = (
            ndimage.gaussian_filter(tex, sigmas[i], mode="nearest")
            if sigmas[i] > 0
            else tex
        )
        out[sel] = blurred[sel]
    return out


def render_scene(scene: SceneSpec, capture: CaptureSpec) -> tuple[ViewGrid, GroundTruth]:
    """Render the nine views plus a zero-blur ground-truth reference.

    Each view composites the scene layers blurred by
    sigma = blur_coefficient * |layer depth - focus depth|, warps the result
    by the slot's true homography (view pixel p samples the canonical frame at
    H(p)) and adds clamped Gaussian noise. Identical inputs give bit-identical
    outputs.
    """
    layer_depths = {l.depth for l in scene.layers}
    if not layer_depths <= set(capture.focus_depths):
        missing = sorted(layer_depths - set(capture.focus_depths))
        raise ParameterError(f"no view focuses on layer depths {missing}")

    pad = _padding_for(capture, scene.canvas)
    top, bottom, left, right = pad
    h, w = scene.canvas
    ph, pw = h + top + bottom, w + left + right
    textures = [
        texture(l.texture_seed, -top, -left, ph, pw) for l in scene.layers
    ]
    owner = _region_map(scene, pad)

    sharp = _composite(textures, owner, [0.0] * len(scene.layers))
    all_in_focus = ImageF(
        sharp[top : top + h, left : left + w].astype(np.float32)[:, :, None]
    )

    ys, xs = np.mgrid[0:h, 0:w]
    base = np.stack([xs.ravel(), ys.ravel(), np.ones(h * w)], axis=1)
    views = []
    frames: dict[float, np.ndarray] = {}  # views sharing a focus share blur
    for v, slot in enumerate(capture.grid):
        sigmas = [
            capture.blur_coefficient * abs(l.depth - slot.focus_depth)
            for l in scene.layers
        ]
        if slot.focus_depth not in frames:
            frames[slot.focus_depth] = _composite(textures, owner, sigmas)
        frame = frames[slot.focus_depth]
        if all(s == 0 for s in sigmas) and np.allclose(
            slot.homography_true.m, np.eye(3)
        ):
            data = frame[top : top + h, left : left + w]
        else:
            mapped = base @ slot.homography_true.m.T
            sx = mapped[:, 0] / mapped[:, 2] + left
            sy = mapped[:, 1] / mapped[:, 2] + top
            vals, _ = sample_bilinear(frame[:, :, None], None, sx, sy)
            data = vals[:, 0].reshape(h, w)
        if capture.noise_sigma > 0:
            rng = np.random.default_rng([scene.rng_seed, v])
            data = data + rng.normal(0.0, capture.noise_sigma, size=data.shape)
        data = np.clip(data, 0.0, 1.0).astype(np.float32)
        views.append(ImageF(data[:, :, None]))

    gt = GroundTruth(
        all_in_focus,
        [s.homography_true for s in capture.grid],
        capture.focus_depths,
    )
    return ViewGrid(views, 3, 3, capture.focus_depths), gt


# ---------------------------------------------------------------------------
# Default scene and capture builders


def default_scene(
    n_layers: int = 3, canvas: tuple[int, int] = (512, 512), seed: int = 0
) -> SceneSpec:
    """Vertical-strip layout with depths 1..n and per-layer texture seeds."""
    if n_layers < 2:
        raise ParameterError("need >= 2 layers")
    h, w = canvas
    bounds = [round(i * w / n_layers) for i in range(n_layers + 1)]
    layers = [
        LayerSpec(
            depth=float(i + 1),
            texture_seed=seed * 1009 + i,
            region=(0, bounds[i], h, bounds[i + 1]),
        )
        for i in range(n_layers)
    ]
    return SceneSpec(layers, canvas, rng_seed=seed)


def default_capture(
    n_depths: int,
    max_shift: float,
    canvas: tuple[int, int] = (512, 512),
    seed: int = 0,
    blur_coefficient: float = 2.0,
    noise_sigma: float = 0.0,
    perspective: float = 0.02,
) -> CaptureSpec:
    """Cyclic focus-depth assignment plus seeded random view homographies.

    Slot (r, c) focuses at depth index (c + r * ceil(n/3)) mod n, so
    horizontally and vertically adjacent slots differ in focus. The center
    view gets the identity homography (it is the default benchmark); other
    views get a translation up to ``max_shift`` pixels plus a perspective
    perturbation displacing each corner by at most ``perspective`` of the
    canvas extent per axis.
    """
    if n_depths < 1:
        raise ParameterError("n_depths must be >= 1")
    if n_depths > 9:
        raise ParameterError("n_depths must be <= 9")
    h, w = canvas
    depths = [float(k + 1) for k in range(n_depths)]
    row_step = max(1, math.ceil(n_depths / 3))
    corners = np.array(
        [[0.0, 0.0], [w - 1.0, 0.0], [w - 1.0, h - 1.0], [0.0, h - 1.0]]
    )
    slots = []
    for r in range(3):
        for c in range(3):
            depth = depths[(c + r * row_step) % n_depths]
            if (r, c) == (1, 1) or (max_shift == 0 and perspective == 0):
                hom = Homography.identity()
            else:
                rng = np.random.default_rng([seed, r, c])
                t = rng.uniform(-max_shift, max_shift, size=2)
                jitter = rng.uniform(-perspective, perspective, size=(4, 2)) * (w, h)
                hom = fit_homography_dlt(corners, corners + t + jitter)
            slots.append(ViewSlot(depth, hom))
    return CaptureSpec(slots, blur_coefficient, noise_sigma)


__all__ = [
    "CaptureSpec",
    "GroundTruth",
    "LayerSpec",
    "SceneSpec",
    "ViewSlot",
    "default_capture",
    "default_scene",
    "render_scene",
    "texture",
]
