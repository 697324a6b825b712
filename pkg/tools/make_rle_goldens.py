"""Generate compressed-RLE golden fixtures with the reference COCO toolkit.

Requires ``pycocotools``.  Writes ``tests/fixtures/rle_goldens.json``: a list
of ``{"size": [h, w], "counts": str, "bits": base64}`` entries where ``bits``
is ``numpy.packbits`` of the row-major mask.  This package's own encoder is
deliberately not used, so the fixtures are an independent reference.

    python3 tools/make_rle_goldens.py [--count 64] [--seed 2024]
"""
import argparse
import base64
import json
from pathlib import Path

import numpy as np
from pycocotools import mask as cocomask

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "rle_goldens.json"


def sample_mask(rng, i):
    h, w = rng.integers(1, 60, size=2)
    if i == 0:
        return np.zeros((h, w), dtype=np.uint8)
    if i == 1:
        return np.ones((h, w), dtype=np.uint8)
    kind = i % 3
    if kind == 0:
        return (rng.random((h, w)) < rng.random()).astype(np.uint8)
    yy, xx = np.mgrid[:h, :w]
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    r = rng.uniform(1, max(h, w))
    disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if kind == 1:
        return disk.astype(np.uint8)
    # long runs exercise multi-word and negative-delta counts
    return (disk ^ (xx > rng.uniform(0, w))).astype(np.uint8)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=64)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    entries = []
    for i in range(args.count):
        m = sample_mask(rng, i)
        rle = cocomask.encode(np.asfortranarray(m))
        counts = rle["counts"].decode("ascii") if isinstance(rle["counts"], bytes) else rle["counts"]
        entries.append({
            "size": [int(v) for v in rle["size"]],
            "counts": counts,
            "bits": base64.b64encode(np.packbits(m.reshape(-1)).tobytes()).decode("ascii"),
        })
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(entries, indent=1) + "\n")
    print(f"wrote {len(entries)} fixtures -> {args.out}")


if __name__ == "__main__":
    main()
