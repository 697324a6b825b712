"""Linear mask dictionary learned by principal component analysis.

A flattened grid ``u`` is normalized (mean removed, optionally divided by a
per-dimension scale) and projected to a short code ``v = T @ normalize(u)``.
Reconstruction goes back through ``W``: ``u ~ denormalize(W @ v)``.  ``T`` and
``W`` minimize the mean squared reconstruction error over the fitting corpus,
which makes the rows of ``T`` the leading eigenvectors of the corpus
covariance.

Fitting is split in two so it can be sharded: :class:`FitAccumulator` collects
sufficient statistics (count, sum and ``sum(u u^T)``) and :func:`solve` turns
them into a :class:`Codebook`.  Grids are 0/1, so every statistic is an exact
integer in float64 and merging shards in any order gives identical results.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

WHITEN_MODES = ("none", "eigen")
SCALE_MODES = ("none", "std")
EPS = 1e-6


class CodebookError(ValueError):
    """Shape mismatch or unsolvable fit."""


def _flatten(grid, m: int) -> np.ndarray:
    arr = np.asarray(grid)
    if arr.shape == (m, m):
        return arr.reshape(-1).astype(np.float64)
    if arr.shape == (m * m,):
        return arr.astype(np.float64)
    raise CodebookError(f"expected a {m}x{m} grid, got shape {arr.shape}")


def _flatten_batch(grids, m: int) -> np.ndarray:
    arr = np.asarray(grids)
    if arr.ndim == 3 and arr.shape[1:] == (m, m):
        return arr.reshape(len(arr), -1).astype(np.float64)
    if arr.ndim == 2 and arr.shape[1] == m * m:
        return arr.astype(np.float64)
    raise CodebookError(f"expected a batch of {m}x{m} grids, got shape {arr.shape}")


@dataclass
class FitAccumulator:
    """Running sufficient statistics for the PCA fit."""

    m: int
    count: int = 0
    sum: np.ndarray = field(default=None, repr=False)
    cross: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        d = self.m * self.m
        if self.sum is None:
            self.sum = np.zeros(d)
        if self.cross is None:
            self.cross = np.zeros((d, d))

    @property
    def dim(self) -> int:
        return self.m * self.m

    def add(self, grid) -> "FitAccumulator":
        """Accumulate one grid in place and return self."""
        u = _flatten(grid, self.m)
        self.count += 1
        self.sum += u
        self.cross += np.outer(u, u)
        return self

    def add_batch(self, grids) -> "FitAccumulator":
        """Accumulate a stack of grids in place and return self."""
        U = _flatten_batch(grids, self.m)
        if len(U):
            self.count += len(U)
            self.sum += U.sum(axis=0)
            self.cross += U.T @ U
        return self

    def copy(self) -> "FitAccumulator":
        return FitAccumulator(self.m, self.count, self.sum.copy(), self.cross.copy())


def accumulate(acc: FitAccumulator, grid) -> FitAccumulator:
    """Return a new accumulator with ``grid`` added."""
    return acc.copy().add(grid)


def merge(a: FitAccumulator, b: FitAccumulator) -> FitAccumulator:
    """Fieldwise sum of two accumulators."""
    if a.m != b.m:
        raise CodebookError(f"cannot merge accumulators of grid side {a.m} and {b.m}")
    return FitAccumulator(a.m, a.count + b.count, a.sum + b.sum, a.cross + b.cross)


def accumulate_all(grids: Iterable, m: int) -> FitAccumulator:
    acc = FitAccumulator(m)
    for g in grids:
        acc.add(g)
    return acc


@dataclass(frozen=True)
class Codebook:
    """Frozen encoder/decoder pair.

    ``T`` is ``(N, m*m)``, ``W`` is ``(m*m, N)``.  ``eigenvalues`` are the
    covariance eigenvalues of the kept components, largest first.
    """

    m: int
    mean: np.ndarray
    T: np.ndarray
    W: np.ndarray
    eigenvalues: np.ndarray
    scale: Optional[np.ndarray] = None
    class_id: Optional[int] = None
    whiten_mode: str = "none"

    @property
    def n_components(self) -> int:
        return self.T.shape[0]

    @property
    def dim(self) -> int:
        return self.m * self.m

    def normalize(self, U: np.ndarray) -> np.ndarray:
        X = U - self.mean
        if self.scale is not None:
            X = X / self.scale
        return X

    def denormalize(self, X: np.ndarray) -> np.ndarray:
        if self.scale is not None:
            X = X * self.scale
        return X + self.mean

    def encode_batch(self, grids) -> np.ndarray:
        return self.normalize(_flatten_batch(grids, self.m)) @ self.T.T

    def decode_soft_batch(self, codes) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.float64)
        if codes.ndim != 2 or codes.shape[1] != self.n_components:
            raise CodebookError(f"expected codes of length {self.n_components}, got shape {codes.shape}")
        return self.denormalize(codes @ self.W.T)

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        arrays = ("mean", "T", "W", "eigenvalues")
        same_scale = (self.scale is None and other.scale is None) or (
            self.scale is not None and other.scale is not None and np.array_equal(self.scale, other.scale)
        )
        return (
            self.m == other.m
            and self.class_id == other.class_id
            and self.whiten_mode == other.whiten_mode
            and same_scale
            and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in arrays)
        )


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vecs), axis=1)
    signs = np.sign(vecs[np.arange(len(vecs)), idx])
    signs[signs == 0] = 1.0
    return vecs * signs[:, None]


def solve(
    acc: FitAccumulator,
    n_components: int,
    whiten_mode: str = "none",
    scale_mode: str = "none",
    class_id: Optional[int] = None,
) -> Codebook:
    """Turn accumulated statistics into a codebook with ``n_components`` rows."""
    d = acc.dim
    if whiten_mode not in WHITEN_MODES:
        raise CodebookError(f"unknown whiten mode {whiten_mode!r}")
    if scale_mode not in SCALE_MODES:
        raise CodebookError(f"unknown scale mode {scale_mode!r}")
    if n_components < 1 or n_components > d:
        raise CodebookError(f"number of components must be in [1, {d}], got {n_components}")
    if acc.count < n_components:
        raise CodebookError(f"underdetermined fit: {acc.count} samples for {n_components} components")

    mean = acc.sum / acc.count
    cov = acc.cross / acc.count - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    scale = None
    if scale_mode == "std":
        scale = np.maximum(np.sqrt(np.clip(np.diag(cov), 0.0, None)), EPS)
        cov = cov / np.outer(scale, scale)

    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:n_components]
    evals = np.clip(evals[order], 0.0, None)
    T = _fix_signs(np.ascontiguousarray(evecs[:, order].T))

    if whiten_mode == "none":
        W = T.T.copy()
    else:
        root = np.sqrt(np.maximum(evals, EPS))
        W = T.T * root[None, :]
        T = T / root[:, None]
    return Codebook(m=acc.m, mean=mean, T=T, W=W, eigenvalues=evals, scale=scale,
                    class_id=class_id, whiten_mode=whiten_mode)


def encode(cb: Codebook, grid) -> np.ndarray:
    """Project one grid to its code vector."""
    return cb.T @ cb.normalize(_flatten(grid, cb.m))


def decode_soft(cb: Codebook, code) -> np.ndarray:
    """Real-valued reconstruction (flattened, unclamped) of one code."""
    code = np.asarray(code, dtype=np.float64)
    if code.shape != (cb.n_components,):
        raise CodebookError(f"expected a code of length {cb.n_components}, got shape {code.shape}")
    return cb.denormalize(cb.W @ code)


def decode(cb: Codebook, code, threshold: float = 0.5) -> np.ndarray:
    """Binarized ``m x m`` reconstruction of one code."""
    return (decode_soft(cb, code) >= threshold).astype(np.uint8).reshape(cb.m, cb.m)


def truncate(cb: Codebook, n_components: int) -> Codebook:
    """Keep only the leading ``n_components`` components."""
    if n_components < 1 or n_components > cb.n_components:
        raise CodebookError(f"cannot truncate {cb.n_components} components to {n_components}")
    if n_components == cb.n_components:
        return cb
    return replace(
        cb,
        T=cb.T[:n_components].copy(),
        W=cb.W[:, :n_components].copy(),
        eigenvalues=cb.eigenvalues[:n_components].copy(),
    )
