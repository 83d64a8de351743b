"""Viewpoint alignment: feature detection, matching, robust homography
estimation and perspective warping onto a shared canvas.

The detector is a determinant-of-Hessian blob detector built on integral-image
box filters at three octave scales; descriptors summarize Haar-like gradients
over a 4x4 cell grid (64 values, L2-normalized). Orientation assignment is
deliberately omitted: the grids this toolkit consumes are rotation-free.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (
    AlignmentError,
    DegenerateHomographyError,
    EstimationError,
    ParameterError,
)
from .image import ImageF, ViewGrid, sample_bilinear, to_grayscale

# Box-filter sizes per scale (lobe 3, 5, 7) and the SURF-style Dxy weight.
FILTER_SIZES = (9, 15, 21)
DXY_WEIGHT = 0.9

# Snap tolerance: coordinates this close to an integer are treated as exact,
# so numerical dust on identity-like homographies cannot inflate offsets.
_SNAP = 1e-7


def _ceil(v: float) -> int:
    r = round(v)
    if abs(v - r) <= _SNAP:
        return int(r)
    return int(math.ceil(v))


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float
    response: float


@dataclass(frozen=True)
class Match:
    index_a: int
    index_b: int
    distance: float
    ratio: float


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, normalized so m[2,2] == 1 where possible."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ParameterError(f"homography must be 3x3, got {m.shape}")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) < 1e-12:
            raise ParameterError("homography is singular")
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        m = np.eye(3)
        m[0, 2] = dx
        m[1, 2] = dy
        return cls(m)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def compose(self, other: "Homography") -> "Homography":
        """self applied after other: (self @ other)(p) = self(other(p))."""
        return Homography(self.m @ other.m)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 2) points; raises if any point hits the plane at infinity."""
        pts = np.asarray(points, dtype=np.float64)
        ones = np.ones((pts.shape[0], 1))
        ph = np.hstack([pts, ones]) @ self.m.T
        w = ph[:, 2]
        if np.any(np.abs(w) < 1e-12):
            raise DegenerateHomographyError("point maps to the plane at infinity")
        return ph[:, :2] / w[:, None]


@dataclass
class AlignedView:
    """A view resampled into the shared benchmark canvas."""

    view_index: int
    image: ImageF
    offset: tuple[int, int]  # (dx, dy) translation baked into homography_total
    homography_total: Homography


@dataclass
class ViewAlignStats:
    view_index: int
    match_count: int
    inlier_count: int
    mean_inlier_error: float


@dataclass
class AlignmentResult:
    views: list[AlignedView]
    stats: list[ViewAlignStats]
    canvas_size: tuple[int, int]
    benchmark_index: int
    offset: tuple[int, int]


@dataclass
class AlignParams:
    detect_threshold: float = 2e-5
    max_points: int = 600
    ratio_threshold: float = 0.75
    inlier_threshold: float = 3.0
    confidence: float = 0.995
    max_iterations: int = 2000
    seed: int = 0


# ---------------------------------------------------------------------------
# Detection


def _integral_image(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    ii = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(plane, axis=0), axis=1, out=ii[1:, 1:])
    return ii


def _box(ii, m, hc, wc, a0, a1, b0, b1):
    """Box sums over rows [y+a0, y+a1], cols [x+b0, x+b1] for the interior
    region y in [m, m+hc), x in [m, m+wc)."""
    return (
        ii[m + a1 + 1 : m + a1 + 1 + hc, m + b1 + 1 : m + b1 + 1 + wc]
        - ii[m + a0 : m + a0 + hc, m + b1 + 1 : m + b1 + 1 + wc]
        - ii[m + a1 + 1 : m + a1 + 1 + hc, m + b0 : m + b0 + wc]
        + ii[m + a0 : m + a0 + hc, m + b0 : m + b0 + wc]
    )


def _hessian_response(ii: np.ndarray, size: int, h: int, w: int) -> np.ndarray:
    """Determinant-of-Hessian response for one box-filter size; -inf outside
    the region where the filter support fits."""
    lobe = size // 3
    half = (lobe - 1) // 2
    m = size // 2 + 1
    hc, wc = h - 2 * m, w - 2 * m
    if hc <= 0 or wc <= 0:
        return np.full((h, w), -np.inf)
    inv_area = 1.0 / (size * size)
    # Dyy: full column band minus 3x the middle lobe (weights +1, -2, +1).
    outer = _box(ii, m, hc, wc, -(half + lobe), half + lobe, -(lobe - 1), lobe - 1)
    mid = _box(ii, m, hc, wc, -half, half, -(lobe - 1), lobe - 1)
    dyy = (outer - 3.0 * mid) * inv_area
    outer = _box(ii, m, hc, wc, -(lobe - 1), lobe - 1, -(half + lobe), half + lobe)
    mid = _box(ii, m, hc, wc, -(lobe - 1), lobe - 1, -half, half)
    dxx = (outer - 3.0 * mid) * inv_area
    dxy = (
        _box(ii, m, hc, wc, -lobe, -1, 1, lobe)
        + _box(ii, m, hc, wc, 1, lobe, -lobe, -1)
        - _box(ii, m, hc, wc, -lobe, -1, -lobe, -1)
        - _box(ii, m, hc, wc, 1, lobe, 1, lobe)
    ) * inv_area
    resp = np.full((h, w), -np.inf)
    resp[m : m + hc, m : m + wc] = dxx * dyy - (DXY_WEIGHT * dxy) ** 2
    return resp


def _refine_axis(r_minus: float, r_0: float, r_plus: float) -> float:
    den = r_minus - 2.0 * r_0 + r_plus
    if not np.isfinite(den) or abs(den) < 1e-18 or not np.isfinite(r_minus + r_plus):
        return 0.0
    off = 0.5 * (r_minus - r_plus) / den
    return float(np.clip(off, -0.5, 0.5))


def detect_features(image: ImageF, threshold: float = 2e-5,
                    max_points: int = 600) -> list[Keypoint]:
    """Determinant-of-Hessian keypoints at three octave scales.

    Candidates must be local maxima of the (scale, y, x) response volume in a
    3x3x3 neighborhood and exceed ``threshold``; the strongest ``max_points``
    are returned sorted by descending response.
    """
    if image.channels != 1:
        raise ParameterError("detect_features requires a 1-channel image")
    h, w = image.height, image.width
    if min(h, w) < 32:
        raise ParameterError(f"image too small for detection: {h}x{w}")
    ii = _integral_image(image.plane().astype(np.float64))
    volume = np.stack([_hessian_response(ii, s, h, w) for s in FILTER_SIZES])
    peak = ndimage.maximum_filter(volume, size=3, mode="constant", cval=-np.inf)
    cand = (volume >= peak) & (volume > threshold) & np.isfinite(volume)
    ss, ys, xs = np.nonzero(cand)
    if ss.size == 0:
        return []
    order = np.argsort(volume[ss, ys, xs])[::-1][: max(0, max_points)]
    kps = []
    for s, y, x in zip(ss[order], ys[order], xs[order]):
        r = volume[s]
        ox = _refine_axis(r[y, x - 1], r[y, x], r[y, x + 1]) if 0 < x < w - 1 else 0.0
        oy = _refine_axis(r[y - 1, x], r[y, x], r[y + 1, x]) if 0 < y < h - 1 else 0.0
        kps.append(
            Keypoint(
                x=float(x) + ox,
                y=float(y) + oy,
                scale=1.2 * FILTER_SIZES[s] / 9.0,
                response=float(volume[s, y, x]),
            )
        )
    return kps


# ---------------------------------------------------------------------------
# Description and matching

_GRID = 20  # samples per axis in the descriptor patch
_CELL = 5  # samples per axis in one of the 4x4 cells
_WEIGHT_SIGMA = 3.3  # Gaussian weighting of samples, in sample units


def compute_descriptors(
    image: ImageF, keypoints: list[Keypoint]
) -> tuple[list[Keypoint], np.ndarray]:
    """Haar-gradient descriptors on a scale-proportional 20x20 sample patch.

    Returns the surviving keypoints (those whose patch fits inside the image)
    and a matching (K, 64) float array of L2-normalized descriptors. Patches
    with no gradient yield the zero vector, which the matcher treats as
    unmatchable.
    """
    if image.channels != 1:
        raise ParameterError("compute_descriptors requires a 1-channel image")
    if not keypoints:
        return [], np.zeros((0, 64))
    h, w = image.height, image.width
    xs = np.array([k.x for k in keypoints])
    ys = np.array([k.y for k in keypoints])
    sc = np.array([k.scale for k in keypoints])
    # Patch extent: samples at +-9.5s plus the +-s Haar arm.
    reach = 10.5 * sc
    keep = (xs - reach >= 0) & (xs + reach <= w - 1) & (ys - reach >= 0) & (ys + reach <= h - 1)
    kept = [k for k, ok in zip(keypoints, keep) if ok]
    if not kept:
        return [], np.zeros((0, 64))
    xs, ys, sc = xs[keep], ys[keep], sc[keep]

    u = np.arange(_GRID) - (_GRID - 1) / 2.0
    uu, vv = np.meshgrid(u, u, indexing="ij")  # (row, col) sample offsets
    wgt = np.exp(-(uu**2 + vv**2) / (2.0 * _WEIGHT_SIGMA**2)).ravel()
    px = xs[:, None] + sc[:, None] * vv.ravel()[None, :]
    py = ys[:, None] + sc[:, None] * uu.ravel()[None, :]
    s = sc[:, None]

    sample_mask = None if image.mask.all() else image.mask

    def bl(x, y):
        vals, _ = sample_bilinear(image.data, sample_mask, x, y)
        return vals[..., 0]

    dx = bl(px + s, py) - bl(px - s, py)
    dy = bl(px, py + s) - bl(px, py - s)
    dx *= wgt[None, :]
    dy *= wgt[None, :]

    k = len(kept)
    blocks = lambda a: a.reshape(k, 4, _CELL, 4, _CELL).sum(axis=(2, 4))
    dxg = dx.reshape(k, _GRID, _GRID)
    dyg = dy.reshape(k, _GRID, _GRID)
    feats = np.stack(
        [blocks(dxg), blocks(dyg), blocks(np.abs(dxg)), blocks(np.abs(dyg))], axis=-1
    ).reshape(k, 64)
    norms = np.linalg.norm(feats, axis=1)
    nz = norms > 1e-12
    feats[nz] /= norms[nz, None]
    feats[~nz] = 0.0
    return kept, feats


def match_features(
    desc_a: np.ndarray, desc_b: np.ndarray, ratio_threshold: float = 0.75
) -> list[Match]:
    """Ratio-test matching with a mutual-best cross check.

    For each descriptor in ``a`` the nearest and second-nearest neighbors in
    ``b`` are found by Euclidean distance; a match survives only if
    nearest/second-nearest < ``ratio_threshold`` and the nearest neighbor's
    own best match points back. Returns [] when ``b`` has fewer than two
    descriptors (the ratio is undefined).
    """
    a = np.asarray(desc_a, dtype=np.float64)
    b = np.asarray(desc_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ParameterError("descriptors must be 2-D arrays")
    if len(a) == 0 or len(b) < 2:
        return []
    ok_a = np.linalg.norm(a, axis=1) > 1e-12
    ok_b = np.linalg.norm(b, axis=1) > 1e-12
    d2 = np.maximum(
        (a**2).sum(1)[:, None] + (b**2).sum(1)[None, :] - 2.0 * (a @ b.T), 0.0
    )
    dist = np.sqrt(d2)
    dist[:, ~ok_b] = np.inf
    dist[~ok_a, :] = np.inf

    idx2 = np.argpartition(dist, 1, axis=1)[:, :2]
    row = np.arange(len(a))
    pair = dist[row[:, None], idx2]
    swap = pair[:, 0] > pair[:, 1]
    idx2[swap] = idx2[swap][:, ::-1]
    pair[swap] = pair[swap][:, ::-1]
    d1, d2nd = pair[:, 0], pair[:, 1]

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d2nd > 0, d1 / d2nd, np.where(d1 == 0, 1.0, np.inf))
    ratio = np.where(np.isfinite(d1), ratio, np.inf)
    col_best = np.argmin(dist, axis=0)

    matches = []
    for i in np.nonzero(ratio < ratio_threshold)[0]:
        j = int(idx2[i, 0])
        if col_best[j] == i:
            matches.append(Match(int(i), j, float(d1[i]), float(ratio[i])))
    return matches


# ---------------------------------------------------------------------------
# Homography estimation


def _normalization(points: np.ndarray) -> np.ndarray:
    """Hartley conditioning transform: centroid to origin, mean distance sqrt(2)."""
    c = points.mean(axis=0)
    d = np.sqrt(((points - c) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2.0) / max(d, 1e-12)
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1]], dtype=np.float64)


def _dlt(pa: np.ndarray, pb: np.ndarray) -> np.ndarray | None:
    """Direct linear transform on pre-normalized correspondences."""
    n = len(pa)
    x, y = pa[:, 0], pa[:, 1]
    u, v = pb[:, 0], pb[:, 1]
    zero = np.zeros(n)
    one = np.ones(n)
    a = np.empty((2 * n, 9))
    a[0::2] = np.column_stack([x, y, one, zero, zero, zero, -u * x, -u * y, -u])
    a[1::2] = np.column_stack([zero, zero, zero, x, y, one, -v * x, -v * y, -v])
    try:
        _, _, vt = np.linalg.svd(a)
    except np.linalg.LinAlgError:
        return None
    hm = vt[-1].reshape(3, 3)
    if abs(hm[2, 2]) < 1e-12 or abs(np.linalg.det(hm)) < 1e-12:
        return None
    return hm / hm[2, 2]


def fit_homography_dlt(points_a: np.ndarray, points_b: np.ndarray) -> Homography:
    """Least-squares homography from >= 4 correspondences via normalized DLT."""
    pa = np.asarray(points_a, dtype=np.float64)
    pb = np.asarray(points_b, dtype=np.float64)
    if pa.shape != pb.shape or pa.ndim != 2 or pa.shape[1] != 2:
        raise ParameterError("point sets must both be (N, 2)")
    if len(pa) < 4:
        raise ParameterError(f"need >= 4 correspondences, got {len(pa)}")
    ta = _normalization(pa)
    tb = _normalization(pb)
    pan = (np.column_stack([pa, np.ones(len(pa))]) @ ta.T)[:, :2]
    pbn = (np.column_stack([pb, np.ones(len(pb))]) @ tb.T)[:, :2]
    hn = _dlt(pan, pbn)
    if hn is None:
        raise EstimationError("degenerate point configuration for DLT")
    return Homography(np.linalg.inv(tb) @ hn @ ta)


def _symmetric_transfer_error(
    m: np.ndarray, pa: np.ndarray, pb: np.ndarray
) -> np.ndarray:
    minv = np.linalg.inv(m)

    def proj(mat, pts):
        ph = np.column_stack([pts, np.ones(len(pts))]) @ mat.T
        w = ph[:, 2]
        w = np.where(np.abs(w) < 1e-12, 1e-12, w)
        return ph[:, :2] / w[:, None]

    fwd = ((proj(m, pa) - pb) ** 2).sum(axis=1)
    bwd = ((proj(minv, pb) - pa) ** 2).sum(axis=1)
    return np.sqrt(fwd + bwd)


def _degenerate_sample(pts: np.ndarray) -> bool:
    """True when any 3 of the 4 points are (nearly) collinear."""
    for skip in range(4):
        tri = np.delete(pts, skip, axis=0)
        u = tri[1] - tri[0]
        v = tri[2] - tri[0]
        area = 0.5 * abs(u[0] * v[1] - u[1] * v[0])
        if area < 1e-9:
            return True
    return False


def estimate_homography(
    points_a: np.ndarray,
    points_b: np.ndarray,
    inlier_threshold: float = 3.0,
    confidence: float = 0.995,
    max_iterations: int = 2000,
    seed: int = 0,
) -> tuple[Homography, np.ndarray]:
    """RANSAC homography from point correspondences.

    Hypotheses come from normalized-DLT fits of 4-point samples; inliers are
    points whose symmetric transfer error is below ``inlier_threshold``
    pixels. The iteration budget adapts as log(1-confidence)/log(1-w^4) for
    the best inlier ratio w seen so far, capped at ``max_iterations``. The
    final model is a DLT re-fit on all inliers of the best hypothesis.
    """
    pa = np.asarray(points_a, dtype=np.float64)
    pb = np.asarray(points_b, dtype=np.float64)
    if pa.shape != pb.shape or pa.ndim != 2 or pa.shape[1] != 2:
        raise ParameterError("point sets must both be (N, 2)")
    n = len(pa)
    if n < 4:
        raise ParameterError(f"need >= 4 correspondences, got {n}")

    ta = _normalization(pa)
    tb = _normalization(pb)
    pan = (np.column_stack([pa, np.ones(n)]) @ ta.T)[:, :2]
    pbn = (np.column_stack([pb, np.ones(n)]) @ tb.T)[:, :2]
    tb_inv = np.linalg.inv(tb)

    rng = np.random.default_rng(seed)
    best_count = 0
    best_inliers: np.ndarray | None = None
    best_err = np.inf
    needed = max_iterations
    it = 0
    while it < min(max_iterations, needed):
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        if _degenerate_sample(pan[idx]) or _degenerate_sample(pbn[idx]):
            continue
        hn = _dlt(pan[idx], pbn[idx])
        if hn is None:
            continue
        m = tb_inv @ hn @ ta
        if abs(np.linalg.det(m)) < 1e-12:
            continue
        err = _symmetric_transfer_error(m, pa, pb)
        inl = err < inlier_threshold
        count = int(inl.sum())
        total = float(err[inl].sum())
        if count > best_count or (count == best_count and total < best_err):
            best_count = count
            best_inliers = inl
            best_err = total
            w = count / n
            if 0.0 < w < 1.0:
                denom = math.log(max(1.0 - w**4, 1e-12))
                needed = min(
                    max_iterations,
                    int(math.ceil(math.log(max(1.0 - confidence, 1e-12)) / denom)),
                )
            elif w >= 1.0:
                needed = it

    if best_inliers is None or best_count < 4:
        raise EstimationError(
            f"RANSAC found no hypothesis with >= 4 inliers ({n} correspondences)"
        )
    # Refit on inliers and iterate until the inlier set stabilizes; each round
    # re-scores every correspondence against the refit model.
    inliers = best_inliers
    model = fit_homography_dlt(pa[inliers], pb[inliers])
    for _ in range(3):
        err = _symmetric_transfer_error(model.m, pa, pb)
        refreshed = err < inlier_threshold
        if refreshed.sum() < 4 or np.array_equal(refreshed, inliers):
            break
        inliers = refreshed
        model = fit_homography_dlt(pa[inliers], pb[inliers])
    return model, inliers


# ---------------------------------------------------------------------------
# Warping


def _corners(height: int, width: int) -> np.ndarray:
    return np.array(
        [[0.0, 0.0], [width - 1.0, 0.0], [width - 1.0, height - 1.0], [0.0, height - 1.0]]
    )


def modify_homography(
    h: Homography, source_size: tuple[int, int]
) -> tuple[Homography, tuple[int, int], tuple[int, int]]:
    """Prepend the translation that keeps warped content at nonnegative
    coordinates.

    Returns (modified homography, (dx, dy) offset, canvas (height, width)).
    The canvas encloses both the warped source quadrilateral and the
    benchmark frame shifted by the offset.
    """
    sh, sw = source_size
    warped = h.apply(_corners(sh, sw))
    dx = max(0, _ceil(-warped[:, 0].min()))
    dy = max(0, _ceil(-warped[:, 1].min()))
    modified = Homography.translation(dx, dy).compose(h)
    max_x = max(warped[:, 0].max() + dx, dx + sw - 1)
    max_y = max(warped[:, 1].max() + dy, dy + sh - 1)
    canvas = (_ceil(max_y) + 1, _ceil(max_x) + 1)
    return modified, (dx, dy), canvas


def warp_image(image: ImageF, h_modified: Homography, canvas_size: tuple[int, int]) -> ImageF:
    """Inverse-map every canvas pixel through the homography and bilinearly
    sample the source; pixels outside the source get value 0, mask false."""
    ch, cw = canvas_size
    inv = h_modified.inverse().m
    ys, xs = np.mgrid[0:ch, 0:cw]
    pts = np.stack([xs.ravel(), ys.ravel(), np.ones(ch * cw)], axis=1) @ inv.T
    w = pts[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = np.where(np.abs(w) > 1e-12, pts[:, 0] / w, np.nan)
        sy = np.where(np.abs(w) > 1e-12, pts[:, 1] / w, np.nan)
    mask = None if image.mask.all() else image.mask
    vals, valid = sample_bilinear(image.data, mask, sx, sy)
    data = vals.reshape(ch, cw, image.channels).astype(np.float32)
    return ImageF(np.clip(data, 0.0, 1.0), valid.reshape(ch, cw))


# ---------------------------------------------------------------------------
# Grid alignment


def worker_count(n_tasks: int) -> int:
    """Worker threads for per-view work, capped by EDOF_THREADS and the task
    count.

    Defaults to 1: the numpy kernels here already saturate the cores through
    BLAS, and extra Python threads measurably slow alignment down. Results
    are identical for any worker count (per-call seeds, indexed reduction).
    """
    env = os.environ.get("EDOF_THREADS")
    cap = 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            pass
    cap = min(cap, os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def _estimate_view(
    view: ImageF,
    bench_kps: list[Keypoint],
    bench_desc: np.ndarray,
    params: AlignParams,
) -> tuple[Homography, ViewAlignStats]:
    gray = to_grayscale(view)
    kps = detect_features(gray, params.detect_threshold, params.max_points)
    kps, desc = compute_descriptors(gray, kps)
    matches = match_features(desc, bench_desc, params.ratio_threshold)
    if len(matches) < 4:
        raise EstimationError(f"only {len(matches)} matches, need >= 4")
    pa = np.array([[kps[m.index_a].x, kps[m.index_a].y] for m in matches])
    pb = np.array([[bench_kps[m.index_b].x, bench_kps[m.index_b].y] for m in matches])
    h, inliers = estimate_homography(
        pa,
        pb,
        params.inlier_threshold,
        params.confidence,
        params.max_iterations,
        params.seed,
    )
    err = _symmetric_transfer_error(h.m, pa[inliers], pb[inliers])
    stats = ViewAlignStats(
        view_index=-1,
        match_count=len(matches),
        inlier_count=int(inliers.sum()),
        mean_inlier_error=float(err.mean()) if err.size else 0.0,
    )
    return h, stats


def align_grid(
    grid: ViewGrid,
    benchmark_index: int = 4,
    params: AlignParams | None = None,
    skip_failed: bool = False,
) -> AlignmentResult:
    """Align every view of the grid into the benchmark view's frame.

    All outputs share one union canvas (and one integer offset) so block
    positions correspond across views. With ``skip_failed`` true, views whose
    homography cannot be estimated are dropped instead of raising.
    """
    params = params or AlignParams()
    n = len(grid.views)
    if not (0 <= benchmark_index < n):
        raise ParameterError(f"benchmark index {benchmark_index} out of range")

    bench_gray = to_grayscale(grid.views[benchmark_index])
    bench_kps = detect_features(bench_gray, params.detect_threshold, params.max_points)
    bench_kps, bench_desc = compute_descriptors(bench_gray, bench_kps)

    homographies: dict[int, Homography] = {benchmark_index: Homography.identity()}
    stats: list[ViewAlignStats] = [
        ViewAlignStats(benchmark_index, 0, 0, 0.0)
    ]
    failures: list[int] = []
    others = [v for v in range(n) if v != benchmark_index]

    def run(v: int):
        return _estimate_view(grid.views[v], bench_kps, bench_desc, params)

    workers = worker_count(len(others))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda v: _try(run, v), others))
    else:
        outcomes = [_try(run, v) for v in others]
    for v, outcome in zip(others, outcomes):
        if isinstance(outcome, Exception):
            failures.append(v)
        else:
            h, st = outcome
            homographies[v] = h
            stats.append(
                ViewAlignStats(v, st.match_count, st.inlier_count, st.mean_inlier_error)
            )
    if failures and not skip_failed:
        raise AlignmentError(
            f"alignment failed for views {sorted(failures)}", tuple(sorted(failures))
        )

    # Union canvas: one offset keeps every view's warped corners nonnegative.
    min_x = min_y = 0.0
    max_x = max_y = 0.0
    corners = {}
    for v, h in homographies.items():
        img = grid.views[v]
        c = h.apply(_corners(img.height, img.width))
        corners[v] = c
        min_x = min(min_x, c[:, 0].min())
        min_y = min(min_y, c[:, 1].min())
        max_x = max(max_x, c[:, 0].max())
        max_y = max(max_y, c[:, 1].max())
    dx = max(0, _ceil(-min_x))
    dy = max(0, _ceil(-min_y))
    canvas = (_ceil(max_y + dy) + 1, _ceil(max_x + dx) + 1)
    shift = Homography.translation(dx, dy)

    order = sorted(homographies)
    totals = {v: shift.compose(homographies[v]) for v in order}

    def warp_one(v: int) -> AlignedView:
        warped = warp_image(grid.views[v], totals[v], canvas)
        return AlignedView(v, warped, (dx, dy), totals[v])

    workers = worker_count(len(order))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            aligned = list(pool.map(warp_one, order))
    else:
        aligned = [warp_one(v) for v in order]
    stats.sort(key=lambda s: s.view_index)
    return AlignmentResult(aligned, stats, canvas, benchmark_index, (dx, dy))


def _try(fn, v):
    try:
        return fn(v)
    except (EstimationError, ParameterError) as exc:
        return exc


def identity_alignment(grid: ViewGrid) -> AlignmentResult:
    """Treat equally sized raw views as already aligned (identity warps, zero
    offset, canvas = source size). Used by the no-alignment ablation arm."""
    first = grid.views[0]
    canvas = (first.height, first.width)
    for v in grid.views:
        if (v.height, v.width) != canvas:
            raise ParameterError("identity alignment requires equally sized views")
    views = [
        AlignedView(i, v.copy(), (0, 0), Homography.identity())
        for i, v in enumerate(grid.views)
    ]
    stats = [ViewAlignStats(i, 0, 0, 0.0) for i in range(len(grid.views))]
    return AlignmentResult(views, stats, canvas, -1, (0, 0))


__all__ = [
    "AlignParams",
    "AlignedView",
    "AlignmentResult",
    "Homography",
    "Keypoint",
    "Match",
    "ViewAlignStats",
    "align_grid",
    "compute_descriptors",
    "detect_features",
    "estimate_homography",
    "fit_homography_dlt",
    "identity_alignment",
    "match_features",
    "modify_homography",
    "warp_image",
    "worker_count",
]
