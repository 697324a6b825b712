"""Raster primitives for binary instance masks.

Masks are plain 2-D ``numpy.uint8`` arrays holding 0/1 values, row-major.
A "grid" is the square ``m x m`` mask produced by :func:`crop_resize`.
Polygon coordinates follow the COCO convention: ``x`` is the column axis,
``y`` the row axis, and pixel ``(r, c)`` covers ``[c, c+1) x [r, r+1)`` so its
center sits at ``(c + 0.5, r + 0.5)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class MaskError(ValueError):
    """Invalid mask, polygon or box input."""


class EmptyMaskError(MaskError):
    """Operation needs at least one set pixel."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel box; ``(x0, y0)`` is the top-left pixel."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise MaskError(f"box extent must be positive, got {self.w}x{self.h}")
        if self.x0 < 0 or self.y0 < 0:
            raise MaskError(f"box origin must be non-negative, got ({self.x0}, {self.y0})")

    def check_inside(self, height: int, width: int) -> None:
        if self.x0 + self.w > width or self.y0 + self.h > height:
            raise MaskError(f"{self} exceeds a {height}x{width} image")


def as_mask(data, name: str = "mask") -> np.ndarray:
    """Validate ``data`` as a 2-D binary mask and return it as uint8."""
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MaskError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype == np.bool_:
        return arr.astype(np.uint8)
    if not np.isin(arr, (0, 1)).all():
        raise MaskError(f"{name} must contain only 0/1 values")
    return arr.astype(np.uint8, copy=False)


def polygon_rasterize(polygons: Sequence[Sequence[float]], height: int, width: int) -> np.ndarray:
    """Fill polygons onto an ``height x width`` canvas.

    Each polygon is either a flat COCO list ``[x0, y0, x1, y1, ...]`` or a
    sequence of ``(x, y)`` pairs.  A pixel is set when its center lies inside
    at least one polygon, each polygon tested with the even-odd rule.
    """
    if height < 1 or width < 1:
        raise MaskError(f"canvas must be at least 1x1, got {height}x{width}")
    out = np.zeros((height, width), dtype=np.uint8)
    for poly in polygons:
        pts = _polygon_points(poly)
        out |= _fill_even_odd(pts, height, width)
    return out


def _polygon_points(poly) -> np.ndarray:
    pts = np.asarray(poly, dtype=np.float64)
    if pts.ndim == 1:
        if pts.size % 2:
            raise MaskError("flat polygon needs an even number of coordinates")
        pts = pts.reshape(-1, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise MaskError(f"polygon must be a list of (x, y) points, got shape {pts.shape}")
    if len(pts) < 3:
        raise MaskError(f"polygon needs at least 3 vertices, got {len(pts)}")
    if not np.isfinite(pts).all():
        raise MaskError("polygon coordinates must be finite")
    return pts


def _fill_even_odd(pts: np.ndarray, height: int, width: int) -> np.ndarray:
    # Every edge crossing the scanline y = r + 0.5 toggles all pixels whose
    # center lies at or right of the crossing; parity of toggles = inside.
    x0, y0 = pts[:, 0], pts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    ys = np.arange(height, dtype=np.float64) + 0.5

    # half-open rule on y so shared vertices are counted once
    crosses = (y0[None, :] <= ys[:, None]) != (y1[None, :] <= ys[:, None])
    rows, edges = np.nonzero(crosses)
    if rows.size == 0:
        return np.zeros((height, width), dtype=np.uint8)
    t = (ys[rows] - y0[edges]) / (y1[edges] - y0[edges])
    xs = x0[edges] + t * (x1[edges] - x0[edges])
    cols = np.clip(np.ceil(xs - 0.5), 0, width).astype(np.int64)

    toggles = np.zeros((height, width + 1), dtype=np.int64)
    np.add.at(toggles, (rows, cols), 1)
    return (np.cumsum(toggles[:, :width], axis=1) & 1).astype(np.uint8)


def tight_bbox(mask) -> BBox:
    """Smallest box containing every set pixel."""
    mask = as_mask(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise EmptyMaskError("cannot take the bounding box of an empty mask")
    cols = np.flatnonzero(mask.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def _bilinear_weights(n_out: int, n_in: int) -> np.ndarray:
    """Row-stochastic ``n_out x n_in`` matrix resampling ``n_in`` samples to ``n_out``.

    Output sample ``j`` sits at ``(j + 0.5) * n_in / n_out - 0.5`` in input
    index space (centers aligned), clamped to the valid range.
    """
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    weights = np.zeros((n_out, n_in), dtype=np.float64)
    idx = np.arange(n_out)
    np.add.at(weights, (idx, lo), 1.0 - frac)
    np.add.at(weights, (idx, hi), frac)
    return weights


def resample(field: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinearly resample a real 2-D field to ``out_h x out_w``."""
    in_h, in_w = field.shape
    if (in_h, in_w) == (out_h, out_w):
        return field.astype(np.float64)
    return _bilinear_weights(out_h, in_h) @ field.astype(np.float64) @ _bilinear_weights(out_w, in_w).T


def crop_resize(mask, box: BBox, m: int = 28) -> np.ndarray:
    """Crop ``mask`` to ``box`` and resample it onto an ``m x m`` grid.

    The crop is bilinearly resampled and binarized at 0.5 (ties set).
    """
    mask = as_mask(mask)
    if m < 2:
        raise MaskError(f"grid side must be >= 2, got {m}")
    box.check_inside(*mask.shape)
    crop = mask[box.y0:box.y0 + box.h, box.x0:box.x0 + box.w]
    return (resample(crop, m, m) >= 0.5).astype(np.uint8)


def paste(grid, box: BBox, height: int, width: int) -> np.ndarray:
    """Place an ``m x m`` grid back into a ``height x width`` canvas at ``box``."""
    grid = as_mask(grid, "grid")
    box.check_inside(height, width)
    out = np.zeros((height, width), dtype=np.uint8)
    out[box.y0:box.y0 + box.h, box.x0:box.x0 + box.w] = resample(grid, box.h, box.w) >= 0.5
    return out


def iou(a, b) -> float:
    """Intersection over union of two same-sized masks; 1.0 when both are empty."""
    a = as_mask(a, "a")
    b = as_mask(b, "b")
    if a.shape != b.shape:
        raise MaskError(f"shape mismatch: {a.shape} vs {b.shape}")
    inter = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a | b))
    return 1.0 if union == 0 else inter / union


def batch_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise IoU of two ``(n, d)`` stacks of flattened binary masks."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise MaskError(f"shape mismatch: {a.shape} vs {b.shape}")
    inter = np.count_nonzero(a & b, axis=1)
    union = np.count_nonzero(a | b, axis=1)
    out = np.ones(len(a), dtype=np.float64)
    nz = union > 0
    out[nz] = inter[nz] / union[nz]
    return out
