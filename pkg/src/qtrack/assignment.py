"""Exact linear assignment and the composite prediction-to-ground-truth matching cost.

The solver is a shortest-augmenting-path Hungarian method with dual potentials,
O(n^2 m) for an n x m matrix with n <= m (the matrix is transposed otherwise).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .geometry import BBox, FrameSize, giou, l1_box_distance

EPS = 1e-8
CLS_COST_FORMS = ("difference", "positive_only")


@dataclass(frozen=True)
class MatchCostWeights:
    """Weights of the classification, L1 and GIoU terms, plus the focal parameters
    used by the classification cost."""

    lambda_cls: float = 2.0
    lambda_l1: float = 5.0
    lambda_giou: float = 2.0
    alpha: float = 0.25
    gamma: float = 2.0
    cls_cost_form: str = "difference"

    def __post_init__(self):
        for name in ("lambda_cls", "lambda_l1", "lambda_giou"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if self.cls_cost_form not in CLS_COST_FORMS:
            raise ValueError(f"cls_cost_form must be one of {CLS_COST_FORMS}")


@dataclass
class Assignment:
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    total_cost: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.pairs)


@dataclass
class Prediction:
    """A scored box hypothesis with per-class (sigmoid-style) probabilities."""

    probs: np.ndarray
    box: BBox


@dataclass
class Target:
    class_id: int
    box: BBox


def focal_cls_cost(probs, target_class: int, alpha: float = 0.25, gamma: float = 2.0,
                   form: str = "difference") -> float:
    probs = np.asarray(probs, dtype=float)
    if not 0 <= target_class < probs.shape[0]:
        raise IndexError(f"class index {target_class} out of range for {probs.shape[0]} classes")
    if not 0.0 <= alpha <= 1.0 or gamma < 0:
        raise ValueError("alpha must lie in [0, 1] and gamma must be >= 0")
    p = float(probs[target_class])
    pos = alpha * (1 - p) ** gamma * -math.log(p + EPS)
    if form == "positive_only":
        return pos
    if form != "difference":
        raise ValueError(f"unknown classification cost form {form!r}")
    neg = alpha * p ** gamma * -math.log(1 - p + EPS)
    return pos - neg


def pairwise_match_cost(pred: Prediction, gt: Target, weights: MatchCostWeights,
                        frame: FrameSize) -> float:
    cost = 0.0
    if weights.lambda_cls:
        cost += weights.lambda_cls * focal_cls_cost(
            pred.probs, gt.class_id, weights.alpha, weights.gamma, weights.cls_cost_form)
    if weights.lambda_l1:
        cost += weights.lambda_l1 * l1_box_distance(pred.box, gt.box, frame)
    if weights.lambda_giou:
        cost += weights.lambda_giou * (1.0 - giou(pred.box, gt.box))
    return cost


def _check_cost(cost) -> np.ndarray:
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError(f"cost matrix must be 2D, got shape {cost.shape}")
    if np.isnan(cost).any():
        raise ValueError("cost matrix contains NaN")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix contains infinite entries")
    return cost


def hungarian_solve(cost) -> Assignment:
    """Minimum-cost assignment of cardinality min(rows, cols)."""
    cost = _check_cost(cost)
    rows, cols = cost.shape
    if rows == 0 or cols == 0:
        return Assignment()
    transposed = rows > cols
    c = cost.T if transposed else cost
    n, m = c.shape

    # 1-based arrays; column 0 is a virtual start node
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    row_of_col = np.zeros(m + 1, dtype=int)
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            free = ~used[1:]
            reduced = c[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            candidates = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]
            used_cols = np.flatnonzero(used)
            u[row_of_col[used_cols]] += delta
            v[used_cols] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1

    pairs = []
    for j in range(1, m + 1):
        i = int(row_of_col[j])
        if i:
            pairs.append((j - 1, i - 1) if transposed else (i - 1, j - 1))
    pairs.sort()
    total = float(sum(cost[r, k] for r, k in pairs))
    return Assignment(pairs, total)


def brute_force_assignment(cost, max_size: int = 8) -> Assignment:
    """Exhaustive minimum over all injective row->column maps. Test oracle only."""
    cost = _check_cost(cost)
    rows, cols = cost.shape
    if max(rows, cols) > max_size:
        raise ValueError(f"brute force limited to {max_size}x{max_size}, got {rows}x{cols}")
    if rows == 0 or cols == 0:
        return Assignment()
    transposed = rows > cols
    c = cost.T if transposed else cost
    perms = np.array(list(itertools.permutations(range(c.shape[1]), c.shape[0])), dtype=int)
    totals = c[np.arange(c.shape[0]), perms].sum(axis=1)
    best = int(np.argmin(totals))
    best_total = totals[best]
    best_pairs = [(int(k), r) if transposed else (r, int(k)) for r, k in enumerate(perms[best])]
    best_pairs.sort()
    return Assignment(best_pairs, float(best_total))


def match_predictions_to_gt(preds: Sequence[Prediction], gts: Sequence[Target],
                            weights: MatchCostWeights | None = None,
                            frame: FrameSize | None = None) -> Assignment:
    """Bind predictions to ground truth one-to-one. Pairs are (pred index, gt index)."""
    if not preds or not gts:
        return Assignment()
    weights = weights or MatchCostWeights()
    if frame is None:
        raise ValueError("frame size is required to normalize boxes for the L1 term")
    cost = np.array([[pairwise_match_cost(p, g, weights, frame) for g in gts] for p in preds])
    return hungarian_solve(cost)
