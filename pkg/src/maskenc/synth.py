"""Seeded synthetic instance corpora.

Shapes are drawn in image space as COCO-style records, then pushed through
the same rasterize/crop/resample path as real annotations.  Simply-connected
families are stored as polygons; ``donut`` and ``two-blob`` are stored as RLE
because a single polygon cannot describe them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .coco import InstanceRecord, record_to_grid
from .masks import polygon_rasterize
from .polar import count_components
from .rle import rle_encode

FAMILIES = ("blob", "disk", "bar", "donut", "two-blob", "crescent")
CATEGORY_IDS = {name: i + 1 for i, name in enumerate(FAMILIES)}

_CIRCLE_VERTS = 64


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusSpec:
    families: Sequence[str] = FAMILIES
    count: int = 100
    image_size: int = 96
    m: int = 28
    seed: int = 0

    def __post_init__(self):
        unknown = [f for f in self.families if f not in CATEGORY_IDS]
        if unknown:
            raise SynthError(f"unknown shape families {unknown}; choose from {list(FAMILIES)}")
        if self.count < 1:
            raise SynthError(f"count must be >= 1, got {self.count}")
        if self.image_size < 32:
            raise SynthError(f"image size must be >= 32, got {self.image_size}")


def _circle(cx, cy, rx, ry=None, phase=0.0, n=_CIRCLE_VERTS):
    ry = rx if ry is None else ry
    t = phase + 2.0 * np.pi * np.arange(n) / n
    return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)


def _rotate(pts, cx, cy, angle):
    c, s = np.cos(angle), np.sin(angle)
    d = pts - (cx, cy)
    return np.stack([cx + c * d[:, 0] - s * d[:, 1], cy + s * d[:, 0] + c * d[:, 1]], axis=1)


def _blob(rng, cx, cy, radius, n=_CIRCLE_VERTS):
    t = 2.0 * np.pi * np.arange(n) / n
    r = np.ones(n)
    for k in (2, 3, 4):
        r += rng.uniform(0.0, 0.25 / (k - 1)) * np.cos(k * t + rng.uniform(0, 2 * np.pi))
    r *= radius
    return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], axis=1)


def _crescent(rng, cx, cy, R):
    # outer disk minus an offset disk that cuts through it
    r = R * rng.uniform(0.7, 0.9)
    d = R * rng.uniform(0.35, 0.6)
    x = (R * R - r * r + d * d) / (2 * d)
    y = np.sqrt(max(R * R - x * x, 0.0))
    a0 = np.arctan2(y, x)
    b0 = np.arctan2(y, x - d)
    outer = np.linspace(a0, 2 * np.pi - a0, 48)
    inner = np.linspace(2 * np.pi - b0, b0, 32)[1:-1]
    pts = np.concatenate([
        np.stack([R * np.cos(outer), R * np.sin(outer)], axis=1),
        np.stack([d + r * np.cos(inner), r * np.sin(inner)], axis=1),
    ])
    return _rotate(pts + (cx, cy), cx, cy, rng.uniform(0, 2 * np.pi))


def _family_mask(family, rng, size):
    """Return ``(segmentation, is_rle_mask)`` for one shape."""
    c = size / 2.0
    jitter = size * 0.08
    cx, cy = c + rng.uniform(-jitter, jitter), c + rng.uniform(-jitter, jitter)
    R = size * rng.uniform(0.22, 0.34)
    if family == "blob":
        return [_blob(rng, cx, cy, R)], False
    if family == "disk":
        return [_circle(cx, cy, R)], False
    if family == "bar":
        half_len, half_w = R, R / rng.uniform(3.0, 6.0)
        pts = np.array([[-half_len, -half_w], [half_len, -half_w], [half_len, half_w], [-half_len, half_w]]) + (cx, cy)
        return [_rotate(pts, cx, cy, rng.uniform(0, np.pi))], False
    if family == "crescent":
        return [_crescent(rng, cx, cy, R)], False
    if family == "donut":
        outer = polygon_rasterize([_circle(cx, cy, R)], size, size)
        inner = polygon_rasterize([_circle(cx, cy, R * rng.uniform(0.45, 0.7))], size, size)
        return outer & (1 - inner), True
    if family == "two-blob":
        angle = rng.uniform(0, 2 * np.pi)
        sep = size * rng.uniform(0.22, 0.3)
        r1, r2 = size * rng.uniform(0.1, 0.15, size=2)
        dx, dy = np.cos(angle) * sep, np.sin(angle) * sep
        a = polygon_rasterize([_blob(rng, c + dx, c + dy, r1)], size, size)
        b = polygon_rasterize([_blob(rng, c - dx, c - dy, r2)], size, size)
        return a | b, True
    raise SynthError(f"unknown family {family!r}")


def _valid(family: str, grid: np.ndarray) -> bool:
    if family == "two-blob":
        return count_components(grid) == 2
    if family == "donut":
        return count_components(1 - grid) >= 2  # background split: a hole exists
    return True


def synth_records(spec: CorpusSpec) -> Iterator[InstanceRecord]:
    """Deterministic stream of records, ``spec.count`` per family.

    Shapes whose grid would violate the family guarantee (two components for
    ``two-blob``, an enclosed hole for ``donut``) are redrawn.
    """
    size = spec.image_size
    ann_id = 0
    for family in spec.families:
        rng = np.random.default_rng([spec.seed, CATEGORY_IDS[family]])
        made = 0
        while made < spec.count:
            seg, is_mask = _family_mask(family, rng, size)
            if is_mask:
                seg = rle_encode(seg)
            else:
                seg = [[float(v) for v in p.reshape(-1)] for p in seg]
            rec = InstanceRecord(
                image_id=ann_id + 1,
                height=size,
                width=size,
                category_id=CATEGORY_IDS[family],
                segmentation=seg,
                ann_id=ann_id + 1,
            )
            grid = record_to_grid(rec, spec.m)
            if isinstance(grid, np.ndarray) and _valid(family, grid):
                ann_id += 1
                made += 1
                yield rec


def synth_corpus(spec: CorpusSpec) -> Iterator[tuple[np.ndarray, int]]:
    """Yield ``(grid, category_id)`` pairs for ``spec``."""
    for rec in synth_records(spec):
        yield record_to_grid(rec, spec.m), rec.category_id


def category_names() -> dict:
    return {v: k for k, v in CATEGORY_IDS.items()}
