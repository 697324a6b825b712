"""COCO-compatible run-length encoding.

Runs are taken over the mask in column-major (Fortran) order and alternate
zeros/ones, always starting with a (possibly empty) zero run.  The compressed
string form packs each count, or for index > 2 its difference to the count two
positions back, into 6-bit little-endian groups offset by ASCII ``'0'``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import MaskError, as_mask


class RLEError(MaskError):
    """Malformed run-length data."""


@dataclass(frozen=True)
class RLE:
    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise RLEError(f"RLE size must be positive, got {self.height}x{self.width}")
        if any(c < 0 for c in self.counts):
            raise RLEError("RLE counts must be non-negative")
        total = sum(self.counts)
        if total != self.height * self.width:
            raise RLEError(f"RLE counts sum to {total}, expected {self.height * self.width}")

    @classmethod
    def from_coco(cls, obj: dict) -> "RLE":
        """Build from a COCO ``{"size": [h, w], "counts": ...}`` dict."""
        h, w = (int(v) for v in obj["size"])
        counts = obj["counts"]
        if isinstance(counts, (str, bytes)):
            return cls(h, w, tuple(string_to_counts(counts)))
        return cls(h, w, tuple(int(c) for c in counts))

    def to_coco(self, compressed: bool = True) -> dict:
        counts = counts_to_string(self.counts) if compressed else list(self.counts)
        return {"size": [self.height, self.width], "counts": counts}


def rle_encode(mask) -> RLE:
    """Run-length encode a binary mask."""
    mask = as_mask(mask)
    flat = mask.ravel(order="F")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0] == 1:
        runs.insert(0, 0)
    return RLE(mask.shape[0], mask.shape[1], tuple(runs))


def rle_decode(rle) -> np.ndarray:
    """Expand an :class:`RLE` (or COCO dict) to a uint8 mask."""
    if isinstance(rle, dict):
        rle = RLE.from_coco(rle)
    counts = np.asarray(rle.counts, dtype=np.int64)
    values = np.arange(counts.size, dtype=np.int64) & 1
    flat = np.repeat(values.astype(np.uint8), counts)
    return flat.reshape((rle.height, rle.width), order="F")


def counts_to_string(counts) -> str:
    """Compress run counts to the COCO string form."""
    out = []
    counts = [int(c) for c in counts]
    for i, x in enumerate(counts):
        if i > 2:
            x -= counts[i - 2]
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = x != -1 if c & 0x10 else x != 0
            if more:
                c |= 0x20
            out.append(chr(c + 48))
    return "".join(out)


def string_to_counts(s) -> list[int]:
    """Inverse of :func:`counts_to_string`."""
    if isinstance(s, bytes):
        s = s.decode("ascii")
    counts: list[int] = []
    p = 0
    n = len(s)
    while p < n:
        x = 0
        k = 0
        more = True
        while more:
            if p >= n:
                raise RLEError("compressed RLE string ends inside a count")
            c = ord(s[p]) - 48
            if c < 0 or c > 63:
                raise RLEError(f"invalid character {s[p]!r} at offset {p} in compressed RLE")
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and c & 0x10:
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts
