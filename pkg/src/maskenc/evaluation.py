"""Corpus-level reconstruction studies.

Reconstruction error is reported as ``1 - mIoU`` between each grid and its
encode/decode roundtrip.  Corpora are any iterable of ``m x m`` grids (or a
stacked array); they are processed in fixed-size chunks, optionally on a
thread pool, and per-mask IoUs are combined with ``math.fsum`` so results do
not depend on chunking or thread count.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .codebook import Codebook, FitAccumulator, merge, solve, truncate
from .masks import batch_iou
from .polar import polar_decode, polar_encode

CHUNK = 4096
HIST_BINS = 20


class EvalError(ValueError):
    pass


# -- codecs -----------------------------------------------------------------

class Codec:
    """Maps a ``(n, m, m)`` stack of grids to its reconstruction."""

    name = "codec"

    def roundtrip(self, grids: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class IdentityCodec(Codec):
    name = "identity"

    def roundtrip(self, grids):
        return grids.copy()


class PCACodec(Codec):
    def __init__(self, codebook: Codebook, threshold: float = 0.5, name: Optional[str] = None):
        self.codebook = codebook
        self.threshold = threshold
        self.name = name or f"pca-{codebook.n_components}"

    def roundtrip(self, grids):
        cb = self.codebook
        soft = cb.decode_soft_batch(cb.encode_batch(grids))
        return (soft >= self.threshold).astype(np.uint8).reshape(grids.shape)


class PolarCodec(Codec):
    def __init__(self, rays: int = 36, name: Optional[str] = None):
        self.rays = rays
        self.name = name or f"polar-{rays}"

    def roundtrip(self, grids):
        m = grids.shape[-1]
        out = np.zeros_like(grids, dtype=np.uint8)
        for i, g in enumerate(grids):
            if g.any():
                out[i] = polar_decode(polar_encode(g, self.rays), m)
        return out


class FunctionCodec(Codec):
    """Wrap per-grid ``encode``/``decode`` callables."""

    def __init__(self, encode: Callable, decode: Callable, name: str = "custom"):
        self.encode = encode
        self.decode = decode
        self.name = name

    def roundtrip(self, grids):
        return np.stack([np.asarray(self.decode(self.encode(g)), dtype=np.uint8) for g in grids]).reshape(grids.shape)


# -- corpus plumbing --------------------------------------------------------

def iter_chunks(corpus, size: int = CHUNK) -> Iterator[np.ndarray]:
    """Group a grid stream into ``(n, m, m)`` uint8 stacks."""
    if isinstance(corpus, np.ndarray):
        for start in range(0, len(corpus), size):
            yield np.asarray(corpus[start:start + size], dtype=np.uint8)
        return
    it = iter(corpus)
    while True:
        block = list(itertools.islice(it, size))
        if not block:
            return
        yield np.stack(block).astype(np.uint8, copy=False)


def _map_chunks(fn, corpus, threads: int = 1, size: int = CHUNK) -> list:
    chunks = iter_chunks(corpus, size)
    if threads <= 1:
        return [fn(c) for c in chunks]
    # bounded window keeps a streamed corpus from being read ahead in full
    out, pending = [], []
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for c in chunks:
            pending.append(pool.submit(fn, c))
            if len(pending) >= 2 * threads:
                out.append(pending.pop(0).result())
        out.extend(f.result() for f in pending)
    return out


def fit_corpus(corpus, m: int, n_components: int, whiten_mode: str = "none", scale_mode: str = "none",
               class_id: Optional[int] = None, threads: int = 1) -> Codebook:
    """Shard the corpus, accumulate statistics per shard, merge and solve."""
    return solve(accumulate_corpus(corpus, m, threads), n_components, whiten_mode, scale_mode, class_id)


def accumulate_corpus(corpus, m: int, threads: int = 1) -> FitAccumulator:
    parts = _map_chunks(lambda c: FitAccumulator(m).add_batch(c), corpus, threads)
    acc = FitAccumulator(m)
    for p in parts:
        acc = merge(acc, p)
    return acc


# -- metrics ----------------------------------------------------------------

def _exact_mean(values: Sequence[np.ndarray]) -> tuple[float, int]:
    flat = np.concatenate(values) if values else np.zeros(0)
    if flat.size == 0:
        raise EvalError("empty corpus")
    return math.fsum(flat.tolist()) / flat.size, flat.size


def per_mask_iou(corpus, codec: Codec, threads: int = 1) -> np.ndarray:
    def run(chunk):
        n = len(chunk)
        return batch_iou(chunk.reshape(n, -1), codec.roundtrip(chunk).reshape(n, -1))

    parts = _map_chunks(run, corpus, threads)
    return np.concatenate(parts) if parts else np.zeros(0)


def corpus_miou(corpus, codec: Codec, threads: int = 1) -> float:
    """Mean IoU between each grid and its roundtrip through ``codec``."""
    ious = per_mask_iou(corpus, codec, threads)
    return _exact_mean([ious])[0]


@dataclass(frozen=True)
class CurvePoint:
    n: int
    miou: float

    @property
    def err(self) -> float:
        return 1.0 - self.miou


@dataclass(frozen=True)
class ReconCurve:
    points: tuple[CurvePoint, ...]

    def __post_init__(self):
        ns = [p.n for p in self.points]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise EvalError(f"component counts must be strictly increasing, got {ns}")

    def miou_at(self, n: int) -> float:
        for p in self.points:
            if p.n == n:
                return p.miou
        raise KeyError(n)

    def is_nonincreasing(self, slack: float = 1e-6) -> bool:
        errs = [p.err for p in self.points]
        return all(b <= a + slack for a, b in zip(errs, errs[1:]))


def recon_curve(corpus, codebook: Codebook, ns: Iterable[int], threads: int = 1) -> ReconCurve:
    """Reconstruction mIoU for each truncation of ``codebook`` in ``ns``."""
    ns = sorted(set(int(n) for n in ns))
    if not ns:
        raise EvalError("no component counts requested")
    codecs = [PCACodec(truncate(codebook, n)) for n in ns]

    def run(chunk):
        flat = chunk.reshape(len(chunk), -1)
        return [batch_iou(flat, c.roundtrip(chunk).reshape(len(chunk), -1)) for c in codecs]

    parts = _map_chunks(run, corpus, threads)
    points = []
    for j, n in enumerate(ns):
        miou, _ = _exact_mean([p[j] for p in parts])
        points.append(CurvePoint(n, miou))
    return ReconCurve(tuple(points))


@dataclass
class CodecStats:
    count: int
    mean_iou: float
    median_iou: float
    histogram: list

    @classmethod
    def from_ious(cls, ious: np.ndarray) -> "CodecStats":
        mean, n = _exact_mean([ious])
        hist, _ = np.histogram(ious, bins=HIST_BINS, range=(0.0, 1.0))
        return cls(n, mean, float(np.median(ious)), hist.tolist())


@dataclass
class CodecReport:
    codecs: dict  # name -> CodecStats, sorted by name
    per_category: dict = field(default_factory=dict)  # category -> {name -> CodecStats}

    def mean(self, name: str) -> float:
        return self.codecs[name].mean_iou


def compare_codecs(corpus, codecs: Sequence[Codec], categories: Optional[Sequence[int]] = None,
                   threads: int = 1) -> CodecReport:
    """Evaluate several codecs on the same grids.

    ``corpus`` must be re-iterable (e.g. a list or array) since each codec
    walks it once.  ``categories`` enables a per-category breakdown.
    """
    names = [c.name for c in codecs]
    if len(set(names)) != len(names):
        raise EvalError(f"codec names must be unique, got {names}")
    if isinstance(corpus, Iterator):
        raise EvalError("compare_codecs needs a re-iterable corpus")
    report = CodecReport({})
    cats = None if categories is None else np.asarray(categories)
    for codec in sorted(codecs, key=lambda c: c.name):
        ious = per_mask_iou(corpus, codec, threads)
        if ious.size == 0:
            raise EvalError("empty corpus")
        report.codecs[codec.name] = CodecStats.from_ious(ious)
        if cats is not None:
            if len(cats) != len(ious):
                raise EvalError(f"{len(cats)} category labels for {len(ious)} grids")
            for cat in sorted(set(cats.tolist())):
                report.per_category.setdefault(cat, {})[codec.name] = CodecStats.from_ious(ious[cats == cat])
    return report


@dataclass
class ClassSplitResult:
    agnostic_miou: float
    specific_miou: float
    per_category: dict  # category -> (count, agnostic mIoU, specific mIoU)

    @property
    def difference(self) -> float:
        return self.agnostic_miou - self.specific_miou


def class_split_eval(grids, categories: Sequence[int], agnostic: Codebook,
                     specific: Mapping[int, Codebook], n_components: int, threads: int = 1) -> ClassSplitResult:
    """Compare one shared codebook against per-category codebooks at equal size."""
    grids = np.asarray(grids, dtype=np.uint8)
    cats = np.asarray(categories)
    if len(grids) != len(cats):
        raise EvalError(f"{len(cats)} category labels for {len(grids)} grids")
    if len(grids) == 0:
        raise EvalError("empty corpus")
    missing = sorted(set(cats.tolist()) - set(specific))
    if missing:
        raise EvalError(f"no class-specific codebook for categories {missing}")

    agn_ious = per_mask_iou(grids, PCACodec(truncate(agnostic, n_components)), threads)
    spec_ious = np.zeros(len(grids))
    table = {}
    for cat in sorted(set(cats.tolist())):
        sel = cats == cat
        cb = truncate(specific[cat], min(n_components, specific[cat].n_components))
        spec_ious[sel] = per_mask_iou(grids[sel], PCACodec(cb), threads)
        table[cat] = (
            int(sel.sum()),
            math.fsum(agn_ious[sel].tolist()) / sel.sum(),
            math.fsum(spec_ious[sel].tolist()) / sel.sum(),
        )
    return ClassSplitResult(
        agnostic_miou=_exact_mean([agn_ious])[0],
        specific_miou=_exact_mean([spec_ious])[0],
        per_category=table,
    )


# -- report emission --------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def curve_csv(curve: ReconCurve) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "miou", "err"])
    for p in curve.points:
        w.writerow([p.n, _fmt(p.miou), _fmt(p.err)])
    return buf.getvalue().encode("utf-8")


def report_csv(report: CodecReport) -> bytes:
    """One column per codec, one row per statistic."""
    names = list(report.codecs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["statistic"] + names)
    w.writerow(["count"] + [report.codecs[n].count for n in names])
    w.writerow(["mean_iou"] + [_fmt(report.codecs[n].mean_iou) for n in names])
    w.writerow(["median_iou"] + [_fmt(report.codecs[n].median_iou) for n in names])
    for b in range(HIST_BINS):
        label = f"hist_{b / HIST_BINS:.2f}_{(b + 1) / HIST_BINS:.2f}"
        w.writerow([label] + [report.codecs[n].histogram[b] for n in names])
    for cat, stats in sorted(report.per_category.items()):
        w.writerow([f"mean_iou_cat_{cat}"] + [_fmt(stats[n].mean_iou) if n in stats else "" for n in names])
    return buf.getvalue().encode("utf-8")


_SVG_W, _SVG_H = 640, 400
_PAD_L, _PAD_R, _PAD_T, _PAD_B = 70, 20, 30, 55
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _svg_frame(title: str, xlabel: str, ylabel: str, xticks, yticks, sx, sy) -> list:
    x0, x1 = _PAD_L, _SVG_W - _PAD_R
    y0, y1 = _SVG_H - _PAD_B, _PAD_T
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for t in xticks:
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{y0}" x2="{x:.2f}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{y0 + 18}" text-anchor="middle">{t:g}</text>')
    for t in yticks:
        y = sy(t)
        out.append(f'<line x1="{x0 - 5}" y1="{y:.2f}" x2="{x0}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{y + 4:.2f}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{_SVG_H - 12}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="18" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {(y0 + y1) / 2:.1f})">{ylabel}</text>')
    return out


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / n for i in range(n + 1)]


def curve_svg(curve: ReconCurve) -> bytes:
    """Line chart of reconstruction error against number of components."""
    ns = [p.n for p in curve.points]
    errs = [p.err for p in curve.points]
    xmin, xmax = (0, max(ns)) if len(ns) > 1 else (0, ns[0] * 2)
    ymax = max(max(errs) * 1.1, 1e-3)
    x0, x1 = _PAD_L, _SVG_W - _PAD_R
    y0, y1 = _SVG_H - _PAD_B, _PAD_T
    sx = lambda v: x0 + (v - xmin) / (xmax - xmin) * (x1 - x0)  # noqa: E731
    sy = lambda v: y0 - v / ymax * (y0 - y1)  # noqa: E731
    out = _svg_frame("Reconstruction error vs number of components", "number of components N",
                     "reconstruction error (1 - mIoU)", _nice_ticks(xmin, xmax), _nice_ticks(0.0, ymax), sx, sy)
    pts = " ".join(f"{sx(n):.2f},{sy(e):.2f}" for n, e in zip(ns, errs))
    out.append(f'<polyline fill="none" stroke="{_COLORS[0]}" stroke-width="2" points="{pts}"/>')
    for n, e in zip(ns, errs):
        out.append(f'<circle cx="{sx(n):.2f}" cy="{sy(e):.2f}" r="3" fill="{_COLORS[0]}" '
                   f'data-n="{n}" data-err="{_fmt(e)}"/>')
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def report_svg(report: CodecReport) -> bytes:
    """IoU histograms of each codec, one polyline per codec."""
    names = list(report.codecs)
    fracs = {n: np.asarray(report.codecs[n].histogram, dtype=float) / max(report.codecs[n].count, 1) for n in names}
    ymax = max(max(f.max() for f in fracs.values()) * 1.1, 1e-3)
    x0, x1 = _PAD_L, _SVG_W - _PAD_R
    y0, y1 = _SVG_H - _PAD_B, _PAD_T
    sx = lambda v: x0 + v * (x1 - x0)  # noqa: E731
    sy = lambda v: y0 - v / ymax * (y0 - y1)  # noqa: E731
    out = _svg_frame("IoU distribution per codec", "IoU", "fraction of masks",
                     _nice_ticks(0.0, 1.0), _nice_ticks(0.0, ymax), sx, sy)
    centers = (np.arange(HIST_BINS) + 0.5) / HIST_BINS
    for i, n in enumerate(names):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{sx(c):.2f},{sy(f):.2f}" for c, f in zip(centers, fracs[n]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}" '
                   f'data-codec="{n}" data-mean-iou="{_fmt(report.codecs[n].mean_iou)}"/>')
        out.append(f'<text x="{x0 + 10}" y="{y1 + 15 * (i + 1)}" fill="{color}">{n}: mean IoU '
                   f'{report.codecs[n].mean_iou:.4f}</text>')
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def emit_report(obj, fmt: str) -> bytes:
    """Render a :class:`ReconCurve` or :class:`CodecReport` as CSV or SVG bytes."""
    renderers = {
        (ReconCurve, "csv"): curve_csv,
        (ReconCurve, "svg"): curve_svg,
        (CodecReport, "csv"): report_csv,
        (CodecReport, "svg"): report_svg,
    }
    fn = renderers.get((type(obj), fmt))
    if fn is None:
        if fmt not in ("csv", "svg"):
            raise EvalError(f"unknown report format {fmt!r}")
        raise EvalError(f"cannot render {type(obj).__name__}")
    return fn(obj)
