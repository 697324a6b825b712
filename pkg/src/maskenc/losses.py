"""Code-space regression losses with analytic gradients.

Each loss returns a :class:`LossValue` holding the scalar and its gradient
with respect to the prediction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

COSINE_EPS = 1e-8


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossValue:
    value: float
    gradient: np.ndarray


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise LossError(f"prediction has length {p.size}, target has length {t.size}")
    return p, t


def l2_loss(pred, target) -> LossValue:
    p, t = _pair(pred, target)
    d = p - t
    return LossValue(float(d @ d), 2.0 * d)


def l1_loss(pred, target) -> LossValue:
    p, t = _pair(pred, target)
    d = p - t
    return LossValue(float(np.abs(d).sum()), np.sign(d))


def smooth_l1_loss(pred, target, beta: float = 1.0) -> LossValue:
    if not beta > 0:
        raise LossError(f"beta must be positive, got {beta}")
    p, t = _pair(pred, target)
    d = p - t
    a = np.abs(d)
    small = a < beta
    value = np.where(small, 0.5 * d * d / beta, a - 0.5 * beta).sum()
    grad = np.where(small, d / beta, np.sign(d))
    return LossValue(float(value), grad)


def cosine_loss(pred, target) -> LossValue:
    """``1 - cos(pred, target)`` with an epsilon-stabilized denominator."""
    p, t = _pair(pred, target)
    nt = float(np.linalg.norm(t))
    if nt == 0.0:
        raise LossError("cosine loss needs a non-zero target")
    np_ = float(np.linalg.norm(p))
    dot = float(p @ t)
    denom = np_ * nt + COSINE_EPS
    sim = dot / denom
    grad_sim = t / denom
    if np_ > 0.0:
        grad_sim = grad_sim - dot * nt * p / (np_ * denom * denom)
    return LossValue(float(1.0 - sim), -grad_sim)


LOSSES = {
    "l2": l2_loss,
    "l1": l1_loss,
    "smooth_l1": smooth_l1_loss,
    "cosine": cosine_loss,
}


def mask_loss(preds: Sequence, targets: Sequence, positive: Sequence[bool], kind: str = "l2", **params) -> LossValue:
    """Mean per-sample loss over positive samples.

    The gradient has the shape of ``preds`` (``n x N``) and is zero on
    negative rows.  With no positives the loss is 0.
    """
    if kind not in LOSSES:
        raise LossError(f"unknown loss kind {kind!r}; choose from {sorted(LOSSES)}")
    P = np.asarray(preds, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    pos = np.asarray(positive, dtype=bool).reshape(-1)
    # an empty batch may arrive as a flat empty list
    P = P.reshape(0, 0) if P.size == 0 and P.ndim != 2 else P
    Y = Y.reshape(0, 0) if Y.size == 0 and Y.ndim != 2 else Y
    if P.ndim != 2 or Y.ndim != 2:
        raise LossError(f"expected n x N batches, got shapes {P.shape} and {Y.shape}")
    if not (len(P) == len(Y) == len(pos)):
        raise LossError(f"got {len(P)} predictions, {len(Y)} targets and {len(pos)} flags")
    if P.shape != Y.shape:
        raise LossError(f"prediction batch {P.shape} does not match target batch {Y.shape}")

    fn = LOSSES[kind]
    n_pos = max(1, int(pos.sum()))
    values = []
    grad = np.zeros_like(P)
    for i in np.flatnonzero(pos):
        lv = fn(P[i], Y[i], **params)
        values.append(lv.value)
        grad[i] = lv.gradient / n_pos
    # fsum keeps the result independent of sample order
    return LossValue(math.fsum(values) / n_pos, grad)


def total_loss(det_loss: float, mask_loss: float, lambda_det: float = 1.0, lambda_mask: float = 1.0) -> float:
    """Weighted sum of the detection and mask terms."""
    return lambda_det * det_loss + lambda_mask * mask_loss
