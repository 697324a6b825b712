"""Little-endian binary containers for codebooks and code batches.

Codebook layout (``MEC1``)::

    magic    4s   b"MEC1"
    version  u16  1
    flags    u16  bit0 scale present, bit1 eigen whitening, bit2 W stored
    m        u32
    N        u32
    class_id i32  -1 for class-agnostic
    f64[m*m]      mean
    f64[m*m]      scale           (bit0)
    f64[N]        eigenvalues
    f64[N*m*m]    T, row-major
    f64[m*m*N]    W, row-major    (bit2; otherwise W = T^T)
    u32 + bytes   metadata, UTF-8 JSON

Codes layout (``MECC``) shares the header discipline::

    magic 4s, version u16, flags u16 (0), count u32, N u32,
    i64[count] record keys, f64[count*N] codes, u32 + bytes metadata
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .codebook import Codebook

CODEBOOK_MAGIC = b"MEC1"
CODES_MAGIC = b"MECC"
VERSION = 1

FLAG_SCALE = 1
FLAG_WHITEN = 2
FLAG_W = 4

_CB_HEADER = struct.Struct("<4sHHIIi")
_CODES_HEADER = struct.Struct("<4sHHII")
_U32 = struct.Struct("<I")


class ContainerError(ValueError):
    pass


class ContainerFormatError(ContainerError):
    """Wrong magic, version or flags."""


class ContainerLengthError(ContainerError):
    """File is shorter or longer than its header implies."""


def _meta_bytes(metadata: Optional[dict]) -> bytes:
    blob = json.dumps(metadata or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _U32.pack(len(blob)) + blob


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerLengthError(
                f"truncated container: need {n} bytes at offset {self.pos}, only {len(self.data) - self.pos} left"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def i64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<i8").astype(np.int64)

    def metadata(self) -> dict:
        (n,) = _U32.unpack(self.take(_U32.size))
        meta = json.loads(self.take(n).decode("utf-8"))
        if self.pos != len(self.data):
            raise ContainerLengthError(f"{len(self.data) - self.pos} trailing bytes after container")
        return meta


def _check_header(magic: bytes, version: int, expected: bytes) -> None:
    if magic != expected:
        raise ContainerFormatError(f"bad magic {magic!r}, expected {expected!r}")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported container version {version}")


def codebook_to_bytes(cb: Codebook, metadata: Optional[dict] = None) -> bytes:
    d, n = cb.dim, cb.n_components
    store_w = cb.whiten_mode != "none"
    flags = (FLAG_SCALE if cb.scale is not None else 0) | (FLAG_WHITEN if cb.whiten_mode == "eigen" else 0)
    flags |= FLAG_W if store_w else 0
    class_id = -1 if cb.class_id is None else int(cb.class_id)
    parts = [_CB_HEADER.pack(CODEBOOK_MAGIC, VERSION, flags, cb.m, n, class_id)]
    parts.append(np.asarray(cb.mean, dtype="<f8").tobytes())
    if cb.scale is not None:
        parts.append(np.asarray(cb.scale, dtype="<f8").tobytes())
    parts.append(np.asarray(cb.eigenvalues, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(cb.T, dtype="<f8").tobytes())
    if store_w:
        parts.append(np.ascontiguousarray(cb.W, dtype="<f8").tobytes())
    parts.append(_meta_bytes(metadata))
    return b"".join(parts)


def codebook_from_bytes(data: bytes) -> tuple[Codebook, dict]:
    r = _Reader(data)
    magic, version, flags, m, n, class_id = _CB_HEADER.unpack(r.take(_CB_HEADER.size))
    _check_header(magic, version, CODEBOOK_MAGIC)
    if flags & ~(FLAG_SCALE | FLAG_WHITEN | FLAG_W):
        raise ContainerFormatError(f"unknown flag bits {flags:#x}")
    d = m * m
    if n < 1 or n > d:
        raise ContainerFormatError(f"invalid component count {n} for grid side {m}")
    mean = r.f64(d)
    scale = r.f64(d) if flags & FLAG_SCALE else None
    evals = r.f64(n)
    T = r.f64(n * d).reshape(n, d)
    W = r.f64(d * n).reshape(d, n) if flags & FLAG_W else T.T.copy()
    meta = r.metadata()
    cb = Codebook(
        m=m,
        mean=mean,
        T=T,
        W=W,
        eigenvalues=evals,
        scale=scale,
        class_id=None if class_id == -1 else class_id,
        whiten_mode="eigen" if flags & FLAG_WHITEN else "none",
    )
    return cb, meta


def save_codebook(cb: Codebook, path, metadata: Optional[dict] = None) -> None:
    Path(path).write_bytes(codebook_to_bytes(cb, metadata))


def load_codebook(path, with_metadata: bool = False):
    cb, meta = codebook_from_bytes(Path(path).read_bytes())
    return (cb, meta) if with_metadata else cb


def codes_to_bytes(codes, keys: Sequence[int], metadata: Optional[dict] = None) -> bytes:
    codes = np.asarray(codes, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.int64).reshape(-1)
    if codes.ndim == 1 and codes.size == 0:
        codes = codes.reshape(0, 0)
    if codes.ndim != 2 or len(codes) != len(keys):
        raise ContainerError(f"{len(keys)} keys for a code batch of shape {codes.shape}")
    count, n = codes.shape
    header = _CODES_HEADER.pack(CODES_MAGIC, VERSION, 0, count, n)
    return header + keys.astype("<i8").tobytes() + np.ascontiguousarray(codes, dtype="<f8").tobytes() + _meta_bytes(metadata)


def codes_from_bytes(data: bytes, codebook: Optional[Codebook] = None):
    r = _Reader(data)
    magic, version, flags, count, n = _CODES_HEADER.unpack(r.take(_CODES_HEADER.size))
    _check_header(magic, version, CODES_MAGIC)
    if flags:
        raise ContainerFormatError(f"unknown flag bits {flags:#x}")
    keys = r.i64(count)
    codes = r.f64(count * n).reshape(count, n)
    meta = r.metadata()
    if codebook is not None and count and n != codebook.n_components:
        raise ContainerError(f"codes have {n} components but the codebook has {codebook.n_components}")
    return codes, keys, meta


def save_codes(codes, keys: Sequence[int], path, metadata: Optional[dict] = None) -> None:
    Path(path).write_bytes(codes_to_bytes(codes, keys, metadata))


def load_codes(path, codebook: Optional[Codebook] = None):
    """Return ``(codes, keys)``; validates the width against ``codebook`` if given."""
    codes, keys, _ = codes_from_bytes(Path(path).read_bytes(), codebook)
    return codes, keys
