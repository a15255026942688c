"""Focal loss and the contrastive focal tracking loss over assignment probabilities.

For a candidate embedding ``e_i``, references ``e_1..e_N`` and a ground-truth
label ``y`` in 0..N (0 = no existing identity), each label n contributes
``focal(p*(n))`` with ``p*(n) = p(n)`` if n == y else ``1 - p(n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .embedding import as_embedding, assignment_probabilities, stack_embeddings

EPS = 1e-8
REDUCTIONS = ("sum", "mean")


@dataclass(frozen=True)
class FocalParams:
    alpha_t: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.alpha_t <= 1.0:
            raise ValueError(f"alpha_t must lie in [0, 1], got {self.alpha_t}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


@dataclass
class TrackTrainingPair:
    candidate: np.ndarray
    references: List[np.ndarray] = field(default_factory=list)
    label: int = 0

    def __post_init__(self):
        self.candidate = as_embedding(self.candidate)
        refs = stack_embeddings(self.references, dim=self.candidate.shape[0])
        self.references = list(refs)
        if not 0 <= self.label <= len(self.references):
            raise ValueError(f"label {self.label} outside 0..{len(self.references)}")


def focal_loss(p: float, fp: FocalParams = FocalParams()) -> float:
    if not 0.0 < p <= 1.0:
        raise ValueError(f"focal loss needs p in (0, 1], got {p}")
    return -fp.alpha_t * (1.0 - p) ** fp.gamma * math.log(p)


def _focal_dloss_dp(q: float, fp: FocalParams) -> float:
    if q >= 1.0:
        # (1-q)^gamma log q vanishes at q=1 to first order for gamma >= 0
        return -fp.alpha_t if fp.gamma == 0 else 0.0
    one_minus = 1.0 - q
    d = one_minus ** fp.gamma / q
    if fp.gamma:
        d -= fp.gamma * one_minus ** (fp.gamma - 1) * math.log(q)
    return -fp.alpha_t * d


def contrastive_target(p_vec, gt_label: int, n: int) -> float:
    p = float(p_vec[n])
    return p if n == gt_label else 1.0 - p


def _targets(p_vec: np.ndarray, label: int) -> Tuple[np.ndarray, np.ndarray]:
    sign = -np.ones_like(p_vec)
    sign[label] = 1.0
    q = np.where(sign > 0, p_vec, 1.0 - p_vec)
    return q, sign


def contrastive_focal_loss(pair: TrackTrainingPair, fp: FocalParams = FocalParams(),
                           reduction: str = "sum") -> float:
    return contrastive_focal_loss_grad(pair, fp, reduction)[0]


def contrastive_focal_loss_grad(pair: TrackTrainingPair, fp: FocalParams = FocalParams(),
                                reduction: str = "sum") -> Tuple[float, np.ndarray]:
    """Loss and its gradient with respect to the candidate embedding."""
    if reduction not in REDUCTIONS:
        raise ValueError(f"reduction must be one of {REDUCTIONS}")
    p = assignment_probabilities(pair.candidate, pair.references)
    q, sign = _targets(p, pair.label)
    clamped = q < EPS
    q = np.maximum(q, EPS)

    losses = np.array([focal_loss(float(v), fp) for v in q])
    # clamped entries are constant in e_i
    dl_dq = np.array([0.0 if c else _focal_dloss_dp(float(v), fp) for v, c in zip(q, clamped)])
    g = dl_dq * sign

    # softmax over logits (0, e_i.e_1, ..., e_i.e_N): dL/dz_n = p_n (g_n - sum_k g_k p_k)
    dl_dz = p * (g - np.dot(g, p))
    if pair.references:
        grad = dl_dz[1:] @ np.stack(pair.references)
    else:
        grad = np.zeros_like(pair.candidate)

    loss = float(losses.sum())
    if reduction == "mean":
        loss /= len(p)
        grad = grad / len(p)
    return loss, grad


def finite_difference_grad(pair: TrackTrainingPair, fp: FocalParams = FocalParams(),
                           step: float = 1e-4, reduction: str = "sum") -> np.ndarray:
    """Central finite differences of the loss in each candidate coordinate."""
    grad = np.zeros_like(pair.candidate)
    for k in range(pair.candidate.shape[0]):
        hi = pair.candidate.copy()
        lo = pair.candidate.copy()
        hi[k] += step
        lo[k] -= step
        f_hi = contrastive_focal_loss(TrackTrainingPair(hi, pair.references, pair.label), fp, reduction)
        f_lo = contrastive_focal_loss(TrackTrainingPair(lo, pair.references, pair.label), fp, reduction)
        grad[k] = (f_hi - f_lo) / (2 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """Norm-wise relative difference between two gradient vectors."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)
