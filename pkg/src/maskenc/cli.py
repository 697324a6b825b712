"""Command-line front end.

Subcommands::

    synth    write a seeded synthetic corpus as COCO JSON
    fit      learn a codebook from COCO annotations
    sweep    reconstruction error against number of components (CSV, SVG)
    encode   annotations -> code container
    decode   code container -> per-record RLE JSON
    compare  PCA codec versus polar-ray codec (CSV, SVG)

Exit status: 0 success, 1 runtime failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .codebook import Codebook, CodebookError, FitAccumulator, merge, solve, truncate
from .coco import Exclusion, ExclusionLog, load_coco, record_to_grid, write_coco
from .container import ContainerError, codes_from_bytes, load_codebook, save_codebook, save_codes
from .evaluation import PCACodec, PolarCodec, compare_codecs, emit_report, recon_curve
from .masks import BBox, paste, tight_bbox
from .rle import rle_encode
from .synth import FAMILIES, CorpusSpec, category_names, synth_records

log = logging.getLogger("maskenc")

DEFAULT_M = 28
DEFAULT_N = 60
RECORD_CHUNK = 2048


class UsageError(Exception):
    pass


# -- corpus pipeline --------------------------------------------------------

def _grid_chunk(records, m):
    grids, cats, keys, reasons = [], [], [], []
    for rec in records:
        out = record_to_grid(rec, m)
        if isinstance(out, Exclusion):
            reasons.append(out.reason)
            continue
        grids.append(out)
        cats.append(rec.category_id)
        keys.append(rec)
    stack = np.stack(grids) if grids else np.zeros((0, m, m), dtype=np.uint8)
    return stack, cats, keys, reasons


def iter_grid_chunks(records, m: int, threads: int, stats: ExclusionLog):
    """Rasterize records in ordered chunks on a thread pool.

    Yields ``(grids, categories, records)`` per chunk in input order.
    """
    records = iter(records)

    def chunks():
        while True:
            block = list(itertools.islice(records, RECORD_CHUNK))
            if not block:
                return
            yield block

    def account(result, n_in):
        grids, cats, keys, reasons = result
        stats.records_in += n_in
        stats.grids_out += len(grids)
        for r in reasons:
            stats.add(r)
        return grids, cats, keys

    if threads <= 1:
        for block in chunks():
            yield account(_grid_chunk(block, m), len(block))
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        pending = []
        for block in chunks():
            pending.append((pool.submit(_grid_chunk, block, m), len(block)))
            if len(pending) >= 2 * threads:
                fut, n = pending.pop(0)
                yield account(fut.result(), n)
        for fut, n in pending:
            yield account(fut.result(), n)


def load_grids(path, m: int, threads: int, include_crowd: bool = False):
    """Materialize every grid of an annotation file with categories and records."""
    stats = ExclusionLog()
    errors: list = []
    grids, cats, recs = [], [], []
    for g, c, r in iter_grid_chunks(load_coco(path, include_crowd=include_crowd, errors=errors), m, threads, stats):
        grids.append(g)
        cats.extend(c)
        recs.extend(r)
    for e in errors:
        stats.records_in += 1
        stats.add("record error")
    corpus = np.concatenate(grids) if grids else np.zeros((0, m, m), dtype=np.uint8)
    return corpus, cats, recs, stats


def accumulate_file(path, m: int, threads: int, class_specific: bool):
    """Stream an annotation file into an agnostic accumulator (and per-category ones)."""
    stats = ExclusionLog()
    errors: list = []
    total = FitAccumulator(m)
    per_cat: dict = {}
    for grids, cats, _ in iter_grid_chunks(load_coco(path, errors=errors), m, threads, stats):
        total = merge(total, FitAccumulator(m).add_batch(grids))
        if class_specific:
            cats = np.asarray(cats)
            for c in sorted(set(cats.tolist())):
                acc = per_cat.setdefault(c, FitAccumulator(m))
                acc.add_batch(grids[cats == c])
    for _ in errors:
        stats.records_in += 1
        stats.add("record error")
    return total, per_cat, stats


def _category_path(out: Path, cat: int) -> Path:
    return out.with_name(f"{out.stem}.cat{cat}{out.suffix}")


# -- subcommands ------------------------------------------------------------

def _summary(stats: ExclusionLog) -> dict:
    return {"records": stats.records_in, "grids": stats.grids_out, "excluded": dict(sorted(stats.reasons.items()))}


def cmd_fit(args) -> int:
    n = _single_components(args)
    m = args.mask_size
    if n > m * m:
        raise UsageError(f"--components {n} exceeds mask dimension {m * m}")
    total, per_cat, stats = accumulate_file(args.annotations, m, args.threads, args.class_specific)
    cb = solve(total, n, args.whiten, args.scale)
    out = Path(args.out)
    meta = {"m": m, "components": n, "whiten": args.whiten, "scale": args.scale, **_summary(stats)}
    save_codebook(cb, out, meta)
    print(f"grids fitted: {stats.grids_out}")
    print(f"records read: {stats.records_in}")
    print(f"exclusions: {stats.excluded} {json.dumps(dict(sorted(stats.reasons.items())))}")
    print("top eigenvalues: " + " ".join(f"{v:.6g}" for v in cb.eigenvalues[:10]))
    print(f"codebook: {out}")
    for cat, acc in sorted(per_cat.items()):
        if acc.count < n:
            print(f"category {cat}: {acc.count} grids < {n} components, skipped", file=sys.stderr)
            continue
        path = _category_path(out, cat)
        save_codebook(solve(acc, n, args.whiten, args.scale, class_id=cat), path, {**meta, "grids": acc.count})
        print(f"category {cat}: {acc.count} grids -> {path}")
    return 0


def _obtain_codebook(args, n_max: int, corpus: np.ndarray) -> Codebook:
    if args.codebook:
        cb = load_codebook(args.codebook)
        if cb.m != args.mask_size:
            raise UsageError(f"codebook grid side {cb.m} differs from --mask-size {args.mask_size}")
        if cb.n_components < n_max:
            raise UsageError(f"codebook has {cb.n_components} components, {n_max} requested")
        return cb
    acc = FitAccumulator(args.mask_size)
    for start in range(0, len(corpus), 4096):
        acc = merge(acc, FitAccumulator(args.mask_size).add_batch(corpus[start:start + 4096]))
    return solve(acc, n_max, args.whiten, args.scale)


def cmd_sweep(args) -> int:
    ns = args.components or list(range(10, 101, 10))
    if max(ns) > args.mask_size ** 2 or min(ns) < 1:
        raise UsageError(f"component counts must lie in [1, {args.mask_size ** 2}]")
    corpus, _, _, stats = load_grids(args.annotations, args.mask_size, args.threads)
    if len(corpus) == 0:
        raise UsageError("no usable grids in the annotation file")
    cb = _obtain_codebook(args, max(ns), corpus)
    curve = recon_curve(corpus, cb, ns, threads=args.threads)
    Path(args.out).write_bytes(emit_report(curve, "csv"))
    if args.plot:
        Path(args.plot).write_bytes(emit_report(curve, "svg"))
    for p in curve.points:
        print(f"N={p.n:4d}  mIoU={p.miou:.5f}  err={p.err:.5f}")
    print(f"grids: {stats.grids_out}, exclusions: {stats.excluded}")
    return 0


def cmd_compare(args) -> int:
    corpus, cats, _, stats = load_grids(args.annotations, args.mask_size, args.threads)
    if len(corpus) == 0:
        raise UsageError("no usable grids in the annotation file")
    wanted = args.codec or ["pca", "polar"]
    codecs = []
    if "pca" in wanted:
        n = _single_components(args)
        codecs.append(PCACodec(truncate(_obtain_codebook(args, n, corpus), n)))
    if "polar" in wanted:
        codecs.append(PolarCodec(args.rays))
    report = compare_codecs(corpus, codecs, categories=cats, threads=args.threads)
    Path(args.out).write_bytes(emit_report(report, "csv"))
    if args.plot:
        Path(args.plot).write_bytes(emit_report(report, "svg"))
    for name, st in report.codecs.items():
        print(f"{name}: mean IoU {st.mean_iou:.5f}, median {st.median_iou:.5f}, n={st.count}")
    print(f"exclusions: {stats.excluded}")
    return 0


def cmd_encode(args) -> int:
    cb = load_codebook(args.codebook)
    stats = ExclusionLog()
    codes, keys, records = [], [], []
    for grids, _, recs in iter_grid_chunks(load_coco(args.annotations), cb.m, args.threads, stats):
        if len(grids):
            codes.append(cb.encode_batch(grids))
        for rec in recs:
            mask = rec.to_mask()
            box = tight_bbox(mask)
            keys.append(-1 if rec.ann_id is None else int(rec.ann_id))
            records.append([rec.image_id, rec.height, rec.width, box.x0, box.y0, box.w, box.h])
    codes = np.concatenate(codes) if codes else np.zeros((0, cb.n_components))
    save_codes(codes, keys, args.out, {"m": cb.m, "components": cb.n_components, "records": records})
    print(f"encoded {len(keys)} records ({stats.excluded} excluded) -> {args.out}")
    return 0


def cmd_decode(args) -> int:
    cb = load_codebook(args.codebook)
    codes, keys, meta = codes_from_bytes(Path(args.codes).read_bytes(), cb)
    records = meta.get("records", [])
    if len(records) != len(keys):
        raise UsageError("code container lacks placement records for its codes")
    out = []
    for code, key, (image_id, h, w, x0, y0, bw, bh) in zip(codes, keys, records):
        grid = (cb.decode_soft_batch(code[None, :])[0] >= args.threshold).astype(np.uint8).reshape(cb.m, cb.m)
        mask = paste(grid, BBox(x0, y0, bw, bh), h, w)
        out.append({"id": int(key), "image_id": image_id, "segmentation": rle_encode(mask).to_coco()})
    Path(args.out).write_text(json.dumps(out, separators=(",", ":")) + "\n", encoding="utf-8")
    print(f"decoded {len(out)} masks -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    families = args.families.split(",") if args.families else list(FAMILIES)
    unknown = [f for f in families if f not in FAMILIES]
    if unknown:
        raise UsageError(f"unknown shape families {unknown}; choose from {', '.join(FAMILIES)}")
    spec = CorpusSpec(families=tuple(families), count=args.count, image_size=args.image_size,
                      m=args.mask_size, seed=args.seed)
    recs = list(synth_records(spec))
    write_coco(args.out, recs, {k: v for k, v in category_names().items() if v in families})
    print(f"wrote {len(recs)} synthetic annotations -> {args.out}")
    return 0


# -- argument parsing -------------------------------------------------------

def _components(text: str) -> list[int]:
    """Parse ``60``, ``10,20,30`` or ``10:100:10`` (inclusive range)."""
    try:
        if ":" in text:
            lo, hi, step = (int(v) for v in text.split(":"))
            return list(range(lo, hi + 1, step))
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid component list {text!r}") from None


def _single_components(args) -> int:
    if not args.components:
        return DEFAULT_N
    if len(args.components) != 1:
        raise UsageError("this subcommand takes a single --components value")
    return args.components[0]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mask-size", type=int, default=DEFAULT_M, help="grid side m (default 28)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads (default: all cores; 1 = serial reference run)")
    common.add_argument("-v", "--verbose", action="store_true")

    fitting = argparse.ArgumentParser(add_help=False)
    fitting.add_argument("--components", type=_components, default=None,
                         help="number of components N (default 60); sweep accepts a list")
    fitting.add_argument("--whiten", choices=("none", "eigen"), default="none")
    fitting.add_argument("--scale", choices=("none", "std"), default="none")

    p = argparse.ArgumentParser(prog="maskenc", description="Linear mask encoding toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fit", parents=[common, fitting], help="learn a codebook")
    s.add_argument("--annotations", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--class-specific", action="store_true", help="also write one codebook per category")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("sweep", parents=[common, fitting], help="reconstruction error curve")
    s.add_argument("--annotations", required=True)
    s.add_argument("--codebook", help="pre-fitted codebook (default: fit on the annotations)")
    s.add_argument("--out", required=True, help="CSV output")
    s.add_argument("--plot", help="SVG output")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("compare", parents=[common, fitting], help="PCA versus polar-ray codec")
    s.add_argument("--annotations", required=True)
    s.add_argument("--codebook")
    s.add_argument("--rays", type=int, default=36)
    s.add_argument("--codec", action="append", choices=("pca", "polar"), help="codec to include (repeatable)")
    s.add_argument("--out", required=True, help="CSV output")
    s.add_argument("--plot", help="SVG output")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("encode", parents=[common], help="encode annotations to codes")
    s.add_argument("--annotations", required=True)
    s.add_argument("--codebook", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("decode", parents=[common], help="decode codes to RLE masks")
    s.add_argument("--codes", required=True)
    s.add_argument("--codebook", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    s.add_argument("--families", help=f"comma-separated subset of {','.join(FAMILIES)}")
    s.add_argument("--count", type=int, default=100, help="masks per family")
    s.add_argument("--image-size", type=int, default=96)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.mask_size < 2:
        parser.error("--mask-size must be >= 2")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (UsageError, CodebookError, ContainerError, ValueError) as exc:
        print(f"maskenc {args.command}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, (UsageError, CodebookError, ContainerError)) else 1
    except OSError as exc:
        print(f"maskenc {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
