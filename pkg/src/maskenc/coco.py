"""COCO instance annotations: streaming reader and grid extraction."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

import numpy as np

from .jsonstream import JSONStreamError, iter_array
from .masks import crop_resize, polygon_rasterize, tight_bbox
from .rle import RLE, RLEError, rle_decode

log = logging.getLogger(__name__)


class CocoFormatError(ValueError):
    """The annotation file is not valid COCO instances JSON."""


class RecordError(ValueError):
    """A single annotation cannot be interpreted."""


@dataclass(frozen=True)
class InstanceRecord:
    image_id: int
    height: int
    width: int
    category_id: int
    segmentation: Union[list, RLE]
    iscrowd: bool = False
    bbox: Optional[tuple[float, float, float, float]] = None
    area: Optional[float] = None
    ann_id: Optional[int] = None

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise RecordError(f"image size must be positive, got {self.height}x{self.width}")
        if isinstance(self.segmentation, list) and not self.segmentation:
            raise RecordError("segmentation is empty")

    def to_mask(self) -> np.ndarray:
        if isinstance(self.segmentation, RLE):
            return rle_decode(self.segmentation)
        return polygon_rasterize(self.segmentation, self.height, self.width)

    def to_coco(self) -> dict:
        seg = self.segmentation.to_coco() if isinstance(self.segmentation, RLE) else self.segmentation
        out = {
            "id": self.ann_id,
            "image_id": self.image_id,
            "category_id": self.category_id,
            "iscrowd": int(self.iscrowd),
            "segmentation": seg,
        }
        if self.bbox is not None:
            out["bbox"] = list(self.bbox)
        if self.area is not None:
            out["area"] = self.area
        return out


@dataclass(frozen=True)
class Exclusion:
    """A record that produced no usable grid."""

    ann_id: Optional[int]
    reason: str


@dataclass
class ExclusionLog:
    """Counts grids produced versus records dropped, by reason."""

    records_in: int = 0
    grids_out: int = 0
    reasons: dict = field(default_factory=dict)

    def add(self, reason: str) -> None:
        self.reasons[reason] = self.reasons.get(reason, 0) + 1

    @property
    def excluded(self) -> int:
        return sum(self.reasons.values())


def parse_segmentation(seg, height: int, width: int) -> Union[list, RLE]:
    if isinstance(seg, dict):
        try:
            rle = RLE.from_coco(seg)
        except (KeyError, TypeError) as exc:
            raise RecordError(f"bad RLE segmentation: {exc}") from exc
        if (rle.height, rle.width) != (height, width):
            raise RecordError(f"RLE size {rle.height}x{rle.width} differs from image {height}x{width}")
        return rle
    if isinstance(seg, list) and seg and all(isinstance(p, list) for p in seg):
        polys = [[float(v) for v in p] for p in seg]
        if any(len(p) < 6 or len(p) % 2 for p in polys):
            raise RecordError("polygon with fewer than 3 vertices")
        return polys
    raise RecordError(f"unknown segmentation shape {type(seg).__name__}")


def _image_sizes(path: Path) -> dict:
    return {img["id"]: (int(img["height"]), int(img["width"])) for img in _items(path, "images")}


def _items(path: Path, key: str) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as f:
        try:
            yield from iter_array(f, key)
        except JSONStreamError as exc:
            raise CocoFormatError(f"{path}: malformed JSON: {exc}") from exc


def load_coco(
    path,
    categories: Optional[Iterable[int]] = None,
    max_count: Optional[int] = None,
    include_crowd: bool = False,
    errors: Optional[list] = None,
) -> Iterator[InstanceRecord]:
    """Stream :class:`InstanceRecord` objects from a COCO instances file.

    The file is read twice (image sizes, then annotations) so memory does not
    grow with the number of annotations.  Annotations that cannot be parsed
    are appended to ``errors`` as :class:`Exclusion` and skipped.
    """
    path = Path(path)
    sizes = _image_sizes(path)
    cats = None if categories is None else set(categories)
    emitted = 0
    for ann in _items(path, "annotations"):
        if max_count is not None and emitted >= max_count:
            return
        crowd = bool(ann.get("iscrowd", 0))
        if crowd and not include_crowd:
            continue
        cat = int(ann.get("category_id", -1))
        if cats is not None and cat not in cats:
            continue
        ann_id = ann.get("id")
        try:
            h, w = sizes[ann["image_id"]]
            seg = parse_segmentation(ann.get("segmentation"), h, w)
            bbox = ann.get("bbox")
            rec = InstanceRecord(
                image_id=ann["image_id"],
                height=h,
                width=w,
                category_id=cat,
                segmentation=seg,
                iscrowd=crowd,
                bbox=tuple(float(v) for v in bbox) if bbox else None,
                area=float(ann["area"]) if "area" in ann else None,
                ann_id=ann_id,
            )
        except (RecordError, RLEError, KeyError) as exc:
            if errors is not None:
                errors.append(Exclusion(ann_id, f"record error: {exc}"))
            log.debug("skipping annotation %s: %s", ann_id, exc)
            continue
        emitted += 1
        yield rec


def record_to_grid(rec: InstanceRecord, m: int = 28) -> Union[np.ndarray, Exclusion]:
    """Rasterize a record, crop it to its tight box and resample to ``m x m``."""
    try:
        mask = rec.to_mask() if isinstance(rec.segmentation, RLE) else _polygon_window(rec)
    except ValueError as exc:
        return Exclusion(rec.ann_id, f"invalid segmentation: {exc}")
    if not mask.any():
        return Exclusion(rec.ann_id, "empty")
    grid = crop_resize(mask, tight_bbox(mask), m)
    if not grid.any():
        return Exclusion(rec.ann_id, "empty after resize")
    return grid


def _polygon_window(rec: InstanceRecord) -> np.ndarray:
    # Rasterize only the polygons' bounding window; cropping happens next anyway
    # and integer shifts do not change which pixel centers are inside.
    pts = [np.asarray(p, dtype=np.float64).reshape(-1, 2) for p in rec.segmentation]
    allp = np.concatenate(pts)
    x0 = int(np.clip(np.floor(allp[:, 0].min()), 0, rec.width - 1))
    y0 = int(np.clip(np.floor(allp[:, 1].min()), 0, rec.height - 1))
    x1 = int(np.clip(np.ceil(allp[:, 0].max()), x0 + 1, rec.width))
    y1 = int(np.clip(np.ceil(allp[:, 1].max()), y0 + 1, rec.height))
    return polygon_rasterize([p - (x0, y0) for p in pts], y1 - y0, x1 - x0)


def grids_from_records(records: Iterable[InstanceRecord], m: int, stats: Optional[ExclusionLog] = None):
    """Yield ``(grid, record)`` pairs, tallying exclusions into ``stats``."""
    for rec in records:
        if stats is not None:
            stats.records_in += 1
        out = record_to_grid(rec, m)
        if isinstance(out, Exclusion):
            if stats is not None:
                stats.add(out.reason)
            continue
        if stats is not None:
            stats.grids_out += 1
        yield out, rec


def write_coco(path, records: Iterable[InstanceRecord], categories: dict) -> None:
    """Write records as a minimal COCO instances file (deterministic bytes)."""
    images = {}
    anns = []
    for rec in records:
        images.setdefault(rec.image_id, {"id": rec.image_id, "height": rec.height, "width": rec.width})
        anns.append(rec.to_coco())
    doc = {
        "images": list(images.values()),
        "annotations": anns,
        "categories": [{"id": k, "name": v} for k, v in sorted(categories.items())],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, separators=(",", ":"))
        f.write("\n")

