"""Polar-ray contour codec used as the contour-based baseline.

A mask is summarized by its mass center and ``K`` ray lengths at angles
``2*pi*k/K`` from the +x (column) axis, measured in cell units with cell
``(r, c)`` located at ``(r, c)``.  Decoding fills the star polygon spanned by
the ray tips, so the output is always one connected region: holes and
separate components cannot be represented.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .masks import EmptyMaskError, MaskError, as_mask, polygon_rasterize

# 8-connectivity for component counting
CONNECTIVITY = np.ones((3, 3), dtype=bool)
SUBSAMPLES = 6


@dataclass(frozen=True)
class PolarShape:
    center: tuple[float, float]
    rays: np.ndarray

    def __post_init__(self):
        if len(self.rays) < 3:
            raise MaskError(f"need at least 3 rays, got {len(self.rays)}")
        if np.any(np.asarray(self.rays) < 0):
            raise MaskError("ray lengths must be non-negative")

    @property
    def K(self) -> int:
        return len(self.rays)

    def angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.K) / self.K


def mass_center(grid) -> tuple[float, float]:
    """Mean ``(row, col)`` of the set cells."""
    grid = as_mask(grid, "grid")
    rows, cols = np.nonzero(grid)
    if rows.size == 0:
        raise EmptyMaskError("mass center of an empty grid is undefined")
    return float(rows.mean()), float(cols.mean())


def polar_encode(grid, K: int = 36, subsamples: int = SUBSAMPLES) -> PolarShape:
    """Longest center-to-mask distance inside each of ``K`` angular bins.

    Each set cell is represented by ``subsamples**2`` points spread over its
    unit square, so rays reach the outer edge of the mask and narrow bins at
    large ``K`` still see the cells they cross.  A bin with no sample points
    (e.g. the open side of a crescent) gets a zero ray.
    """
    if K < 3:
        raise MaskError(f"need at least 3 rays, got {K}")
    grid = as_mask(grid, "grid")
    cr, cc = mass_center(grid)
    rows, cols = np.nonzero(grid)
    offs = (np.arange(subsamples) + 0.5) / subsamples - 0.5
    oy, ox = np.meshgrid(offs, offs, indexing="ij")
    dy = (rows[:, None] + oy.reshape(1, -1) - cr).reshape(-1)
    dx = (cols[:, None] + ox.reshape(1, -1) - cc).reshape(-1)
    dist = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx)
    # bin k spans [theta_k - pi/K, theta_k + pi/K)
    bins = np.floor(theta * K / (2.0 * np.pi) + 0.5).astype(np.int64) % K
    rays = np.zeros(K)
    np.maximum.at(rays, bins, dist)
    return PolarShape((cr, cc), rays)


def polar_decode(shape: PolarShape, m: int) -> np.ndarray:
    """Rasterize the star polygon of ``shape`` onto an ``m x m`` grid.

    Cells are kept only if they are connected to the center cell, so
    sub-cell slivers near the polygon apex never form extra components.
    """
    rays = np.asarray(shape.rays, dtype=np.float64)
    out = np.zeros((m, m), dtype=np.uint8)
    if not np.any(rays > 0):
        return out
    cr, cc = shape.center
    theta = shape.angles()
    # cell (r, c) has its center at polygon coordinates (c + 0.5, r + 0.5)
    xs = cc + 0.5 + rays * np.cos(theta)
    ys = cr + 0.5 + rays * np.sin(theta)
    filled = polygon_rasterize([np.stack([xs, ys], axis=1)], m, m)

    r0 = int(np.clip(np.floor(cr + 0.5), 0, m - 1))
    c0 = int(np.clip(np.floor(cc + 0.5), 0, m - 1))
    filled[r0, c0] = 1
    labels, _ = ndimage.label(filled, structure=CONNECTIVITY)
    out[labels == labels[r0, c0]] = 1
    return out


def count_components(grid) -> int:
    """Number of 8-connected components of set cells."""
    _, n = ndimage.label(as_mask(grid, "grid"), structure=CONNECTIVITY)
    return int(n)
