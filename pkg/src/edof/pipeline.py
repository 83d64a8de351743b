"""Block-wise fusion orchestration: split, select, fuse, splice.

Color inputs are fused on luminance; chroma comes from the primary view of
each block (per-channel offsets against its own luminance), so the network
only ever sees single-channel data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .align import AlignedView
from .blocks import BlockGrid, BlockSelection, crop, select_sharpest_pair, split_blocks
from .errors import FusionError, ParameterError, SelectionError
from .image import ImageF, to_grayscale
from .network import FusionNet, fuse


@dataclass
class FuseOptions:
    rows: int = 3
    cols: int = 3
    coverage_threshold: float = 0.5
    selection: str = "sharpest"  # or "first_two": skip the sharpness ranking


@dataclass
class BlockOutcome:
    position: tuple[int, int]
    primary_view: int
    secondary_view: int | None  # None marks the single-view fallback path
    scores: list[float]
    coverage: list[float]


@dataclass
class FusionReport:
    outcomes: list[BlockOutcome] = field(default_factory=list)

    def fallback_positions(self) -> list[tuple[int, int]]:
        return [o.position for o in self.outcomes if o.secondary_view is None]

    def to_dict(self) -> dict:
        return {
            "blocks": [
                {
                    "position": list(o.position),
                    "primary_view": o.primary_view,
                    "secondary_view": o.secondary_view,
                    "scores": o.scores,
                    "coverage": o.coverage,
                }
                for o in self.outcomes
            ]
        }


def splice_blocks(
    fused: list[tuple[tuple[int, int], ImageF]], grid: BlockGrid
) -> ImageF:
    """Reassemble per-cell sub-images into the full canvas."""
    h, w = grid.canvas_size
    expected = set(grid.positions())
    got = [pos for pos, _ in fused]
    if len(got) != len(set(got)):
        dup = sorted({p for p in got if got.count(p) > 1})
        raise ParameterError(f"duplicate block entries at {dup}")
    missing = expected - set(got)
    if missing:
        raise ParameterError(f"missing block entries at {sorted(missing)}")
    channels = fused[0][1].channels
    data = np.zeros((h, w, channels), dtype=np.float32)
    mask = np.zeros((h, w), dtype=bool)
    for pos, sub in fused:
        y0, y1, x0, x1 = grid.cell(pos)
        if (sub.height, sub.width) != (y1 - y0, x1 - x0) or sub.channels != channels:
            raise ParameterError(
                f"block at {pos} has shape {(sub.height, sub.width, sub.channels)}, "
                f"cell expects {(y1 - y0, x1 - x0, channels)}"
            )
        data[y0:y1, x0:x1] = sub.data
        mask[y0:y1, x0:x1] = sub.mask
    return ImageF(data, mask)


def _first_two_selection(
    views: list[ImageF],
    grid: BlockGrid,
    position: tuple[int, int],
    coverage_threshold: float,
) -> BlockSelection:
    """Ablation arm: take the first two covered views in index order."""
    cell = grid.cell(position)
    coverage = [crop(v, cell).valid_fraction() for v in views]
    eligible = [i for i, cov in enumerate(coverage) if cov >= coverage_threshold]
    if len(eligible) < 2:
        raise SelectionError(
            f"only {len(eligible)} eligible views at block {position}", position
        )
    return BlockSelection(
        position, eligible[0], eligible[1], [0.0] * len(views), coverage
    )


def _chroma_transfer(primary: ImageF, fused_luma: ImageF) -> ImageF:
    """Replace the primary block's luminance while keeping its chroma."""
    if primary.channels == 1:
        return fused_luma
    luma = to_grayscale(primary).plane()
    shift = fused_luma.plane() - luma
    data = np.clip(primary.data + shift[:, :, None], 0.0, 1.0)
    return ImageF(data.astype(np.float32), fused_luma.mask.copy())


def fuse_pipeline(
    aligned: list[AlignedView],
    net: FusionNet,
    options: FuseOptions | None = None,
) -> tuple[ImageF, FusionReport]:
    """Split the shared canvas, fuse the two sharpest sources per block and
    splice the results back together.

    Blocks where fewer than two views qualify fall back to the sub-image of
    the best-covered view. Failures elsewhere are wrapped with the block
    position for context.
    """
    options = options or FuseOptions()
    if len(aligned) < 2:
        raise ParameterError("need >= 2 aligned views")
    canvas = (aligned[0].image.height, aligned[0].image.width)
    for av in aligned:
        if (av.image.height, av.image.width) != canvas:
            raise ParameterError("aligned views must share one canvas")
    grid = split_blocks(canvas, options.rows, options.cols)
    views = [av.image for av in aligned]
    grays = [to_grayscale(v) for v in views]

    report = FusionReport()
    fused: list[tuple[tuple[int, int], ImageF]] = []
    for pos in grid.positions():
        cell = grid.cell(pos)
        try:
            if options.selection == "first_two":
                sel = _first_two_selection(grays, grid, pos, options.coverage_threshold)
            else:
                sel = select_sharpest_pair(
                    grays, grid, pos, options.coverage_threshold
                )
        except SelectionError:
            coverage = [crop(v, cell).valid_fraction() for v in grays]
            best = int(np.argmax(coverage))
            fused.append((pos, crop(views[best], cell)))
            report.outcomes.append(
                BlockOutcome(pos, best, None, [0.0] * len(views), coverage)
            )
            continue
        try:
            block_i = crop(grays[sel.primary_view], cell)
            block_j = crop(grays[sel.secondary_view], cell)
            fused_luma = fuse(net, block_i, block_j)
            out = _chroma_transfer(crop(views[sel.primary_view], cell), fused_luma)
        except ParameterError as exc:
            raise FusionError(f"block {pos}: {exc}", pos) from exc
        fused.append((pos, out))
        report.outcomes.append(
            BlockOutcome(
                pos, sel.primary_view, sel.secondary_view, sel.scores, sel.coverage
            )
        )
    return splice_blocks(fused, grid), report


# ---------------------------------------------------------------------------
# Training data extraction


def collect_block_pairs(
    aligned: list[AlignedView],
    rows: int = 3,
    cols: int = 3,
    coverage_threshold: float = 0.5,
) -> list[tuple[ImageF, ImageF]]:
    """Sharpest (primary, secondary) luminance pairs for every block where
    selection succeeds."""
    canvas = (aligned[0].image.height, aligned[0].image.width)
    grid = split_blocks(canvas, rows, cols)
    grays = [to_grayscale(av.image) for av in aligned]
    pairs = []
    for pos in grid.positions():
        try:
            sel = select_sharpest_pair(grays, grid, pos, coverage_threshold)
        except SelectionError:
            continue
        cell = grid.cell(pos)
        pairs.append((crop(grays[sel.primary_view], cell), crop(grays[sel.secondary_view], cell)))
    return pairs


def sample_training_patches(
    pairs: list[tuple[ImageF, ImageF]],
    patch_size: int,
    count: int,
    seed: int = 0,
) -> list[tuple[ImageF, ImageF]]:
    """Crop ``count`` fully-valid patches from the given block pairs.

    Crops cycle through the pairs in order with seeded random offsets; pairs
    with no fully-valid window of the requested size are skipped.
    """
    if patch_size < 1:
        raise ParameterError("patch size must be >= 1")
    rng = np.random.default_rng(seed)
    usable = []
    for a, b in pairs:
        if a.height < patch_size or a.width < patch_size:
            continue
        joint = (a.mask & b.mask).astype(np.float64)
        window = np.ones((patch_size, patch_size))
        counts = signal.correlate(joint, window, mode="valid")
        good = np.argwhere(counts >= patch_size * patch_size - 0.5)
        if len(good):
            usable.append((a, b, good))
    if not usable:
        return []
    patches = []
    i = 0
    while len(patches) < count:
        a, b, good = usable[i % len(usable)]
        y, x = good[rng.integers(len(good))]
        cell = (int(y), int(y) + patch_size, int(x), int(x) + patch_size)
        patches.append((crop(a, cell), crop(b, cell)))
        i += 1
    return patches


__all__ = [
    "BlockOutcome",
    "FuseOptions",
    "FusionReport",
    "collect_block_pairs",
    "fuse_pipeline",
    "sample_training_patches",
    "splice_blocks",
]
