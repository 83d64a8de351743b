"""Sub-image grids, mean-gradient sharpness scoring and source selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError, SelectionError
from .image import ImageF


@dataclass(frozen=True)
class BlockGrid:
    """Cell boundaries over a shared canvas; all views use the same grid."""

    rows: int
    cols: int
    row_bounds: tuple[int, ...]  # length rows + 1, strictly increasing
    col_bounds: tuple[int, ...]

    def cell(self, position: tuple[int, int]) -> tuple[int, int, int, int]:
        """(y0, y1, x0, x1) pixel bounds of the cell, end-exclusive."""
        r, c = position
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            raise ParameterError(f"block position {position} out of range")
        return (
            self.row_bounds[r],
            self.row_bounds[r + 1],
            self.col_bounds[c],
            self.col_bounds[c + 1],
        )

    def positions(self) -> list[tuple[int, int]]:
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    @property
    def canvas_size(self) -> tuple[int, int]:
        return self.row_bounds[-1], self.col_bounds[-1]


class MeanGradient(NamedTuple):
    value: float
    has_content: bool  # false when no valid difference pairs exist


@dataclass
class BlockSelection:
    position: tuple[int, int]
    primary_view: int
    secondary_view: int
    scores: list[float]  # per-view mean gradients, full view order
    coverage: list[float]  # per-view valid fraction inside the block


def split_blocks(canvas_size: tuple[int, int], rows: int, cols: int) -> BlockGrid:
    """Split a canvas into rows x cols cells; the last row/column absorbs the
    division remainder."""
    h, w = canvas_size
    if rows < 1 or cols < 1:
        raise ParameterError("rows and cols must be >= 1")
    if h < rows or w < cols:
        raise ParameterError(f"canvas {canvas_size} smaller than grid {rows}x{cols}")
    rh, cw = h // rows, w // cols
    row_bounds = tuple(r * rh for r in range(rows)) + (h,)
    col_bounds = tuple(c * cw for c in range(cols)) + (w,)
    return BlockGrid(rows, cols, row_bounds, col_bounds)


def crop(image: ImageF, cell: tuple[int, int, int, int]) -> ImageF:
    y0, y1, x0, x1 = cell
    return ImageF(image.data[y0:y1, x0:x1].copy(), image.mask[y0:y1, x0:x1].copy())


def mean_gradient(sub: ImageF) -> MeanGradient:
    """Mean gradient sharpness score.

    MG = mean over valid interior pixels of sqrt((dx^2 + dy^2) / 2) with
    forward differences; a pixel contributes only when it and both forward
    neighbors are mask-valid, and excluded pixels drop out of the count too.
    """
    if sub.channels != 1:
        raise ParameterError("mean_gradient requires a 1-channel sub-image")
    if min(sub.height, sub.width) < 2:
        raise ParameterError("sub-image must be at least 2x2")
    g = sub.plane().astype(np.float64)
    m = sub.mask
    dx = g[:-1, 1:] - g[:-1, :-1]
    dy = g[1:, :-1] - g[:-1, :-1]
    valid = m[:-1, :-1] & m[:-1, 1:] & m[1:, :-1]
    count = int(valid.sum())
    if count == 0:
        return MeanGradient(0.0, False)
    mag = np.sqrt((dx**2 + dy**2) / 2.0)
    return MeanGradient(float(mag[valid].sum() / count), True)


def select_sharpest_pair(
    views: list[ImageF],
    grid: BlockGrid,
    position: tuple[int, int],
    coverage_threshold: float = 0.5,
) -> BlockSelection:
    """Pick the two sharpest views at a block position.

    Views need coverage >= coverage_threshold to be eligible; eligible views
    are ranked by mean gradient descending with ties broken by lower view
    index. Raises SelectionError when fewer than two views qualify.
    """
    cell = grid.cell(position)
    scores: list[float] = []
    coverage: list[float] = []
    eligible: list[int] = []
    for i, view in enumerate(views):
        sub = crop(view, cell)
        cov = sub.valid_fraction()
        mg = mean_gradient(sub)
        scores.append(mg.value)
        coverage.append(cov)
        if cov >= coverage_threshold and mg.has_content:
            eligible.append(i)
    if len(eligible) < 2:
        raise SelectionError(
            f"only {len(eligible)} eligible views at block {position}", position
        )
    ranked = sorted(eligible, key=lambda i: (-scores[i], i))
    return BlockSelection(position, ranked[0], ranked[1], scores, coverage)


__all__ = [
    "BlockGrid",
    "BlockSelection",
    "MeanGradient",
    "crop",
    "mean_gradient",
    "select_sharpest_pair",
    "split_blocks",
]
