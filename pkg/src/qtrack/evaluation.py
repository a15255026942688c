"""Track-level AP/AR and identity-switch diagnostics.

Predicted tracks are matched to ground-truth tracks of the same class and
video by spatio-temporal IoU. AP is averaged over classes and over the IoU
thresholds 0.50:0.05:0.95; AR1/AR10 are recalls when at most 1/10 predictions
per video and class are kept.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .assignment import hungarian_solve
from .geometry import BBox, Mask, iou, track_st_iou

IOU_THRESHOLDS = np.round(np.arange(0.5, 0.951, 0.05), 2)


@dataclass
class GroundTruthTrack:
    identity: int
    class_id: int
    records: List[Tuple[int, BBox, Optional[Mask]]] = field(default_factory=list)
    score: float = 1.0
    video_id: str = ""

    def __post_init__(self):
        frames = [r[0] for r in self.records]
        if any(a >= b for a, b in zip(frames, frames[1:])):
            raise ValueError(f"track {self.identity}: frame indices must be strictly increasing")

    @property
    def has_masks(self) -> bool:
        return bool(self.records) and all(r[2] is not None for r in self.records)

    def regions(self, use_masks: bool):
        return [(f, m if use_masks else b) for f, b, m in self.records]


# predictions carry the same fields plus a meaningful score
ScoredTrack = GroundTruthTrack


@dataclass
class EvalReport:
    ap: float = 0.0
    ap50: float = 0.0
    ap75: float = 0.0
    ar1: float = 0.0
    ar10: float = 0.0
    id_switches: int = 0
    ap_per_threshold: Dict[float, float] = field(default_factory=dict)
    ap_per_class: Dict[int, float] = field(default_factory=dict)
    pr_curves: Dict[Tuple[int, float], Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return {"AP": self.ap, "AP50": self.ap50, "AP75": self.ap75,
                "AR1": self.ar1, "AR10": self.ar10, "id_switches": self.id_switches}

    def table(self) -> str:
        header = f"{'AP':>7} {'AP50':>7} {'AP75':>7} {'AR1':>7} {'AR10':>7} {'IDsw':>5}"
        row = (f"{100 * self.ap:7.2f} {100 * self.ap50:7.2f} {100 * self.ap75:7.2f} "
               f"{100 * self.ar1:7.2f} {100 * self.ar10:7.2f} {self.id_switches:5d}")
        return header + "\n" + row


def pair_st_iou(pred: GroundTruthTrack, gt: GroundTruthTrack) -> float:
    """Spatio-temporal IoU using masks when both tracks have them everywhere, boxes otherwise."""
    use_masks = pred.has_masks and gt.has_masks
    return track_st_iou(pred.regions(use_masks), gt.regions(use_masks))


def _rank_key(t: GroundTruthTrack):
    return (-t.score, t.video_id, t.identity)


def match_tracks(preds: Sequence[GroundTruthTrack], gts: Sequence[GroundTruthTrack],
                 iou_threshold: float, ious: Optional[np.ndarray] = None):
    """Greedy matching of score-ranked predictions to same-class ground truth.

    Returns (pred, gt or None) in rank order. ``ious`` may hold a precomputed
    pred x gt IoU matrix aligned with the input order.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must lie in (0, 1)")
    if ious is None:
        ious = np.array([[pair_st_iou(p, g) for g in gts] for p in preds]).reshape(len(preds), len(gts))
    order = sorted(range(len(preds)), key=lambda i: _rank_key(preds[i]))
    taken = np.zeros(len(gts), dtype=bool)
    decisions = []
    for i in order:
        p = preds[i]
        best, best_iou = None, iou_threshold
        for j, g in enumerate(gts):
            if taken[j] or g.class_id != p.class_id or g.video_id != p.video_id:
                continue
            if ious[i, j] >= best_iou and (best is None or ious[i, j] > ious[i, best]):
                best, best_iou = j, ious[i, j]
        if best is None:
            decisions.append((p, None))
        else:
            taken[best] = True
            decisions.append((p, gts[best]))
    return decisions


def _as_hits(decisions) -> np.ndarray:
    return np.array([d[1] is not None if isinstance(d, tuple) else bool(d) for d in decisions], dtype=bool)


def precision_recall(decisions, num_gt: int) -> Tuple[np.ndarray, np.ndarray]:
    """Recall and monotone (interpolated) precision along the ranked decisions."""
    hits = _as_hits(decisions)
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    recall = tp / num_gt if num_gt else np.zeros(len(hits))
    envelope = np.maximum.accumulate(precision[::-1])[::-1] if len(hits) else precision
    return recall, envelope


def average_precision(decisions, num_gt: int, recall_points: Optional[int] = None) -> float:
    """Area under the interpolated precision-recall curve.

    With ``recall_points=None`` the area is exact (step integration over every
    recall change). With ``recall_points=101`` the envelope is sampled on an
    evenly spaced recall grid and averaged, COCO style.
    """
    if num_gt < 0:
        raise ValueError("num_gt must be >= 0")
    hits = _as_hits(decisions)
    if num_gt == 0:
        return 1.0 if len(hits) == 0 else 0.0
    if len(hits) == 0:
        return 0.0
    recall, envelope = precision_recall(hits, num_gt)
    if recall_points is None:
        prev = np.concatenate(([0.0], recall[:-1]))
        return float(np.sum((recall - prev) * envelope))
    grid = np.linspace(0.0, 1.0, recall_points)
    idx = np.searchsorted(recall, grid, side="left")
    sampled = np.where(idx < len(recall), envelope[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(sampled.mean())


def _group(tracks):
    groups = defaultdict(list)
    for t in tracks:
        groups[(t.video_id, t.class_id)].append(t)
    return groups


def _flatten(tracks):
    if isinstance(tracks, dict):
        out = []
        for vid in sorted(tracks):
            for t in tracks[vid]:
                if not t.video_id:
                    t.video_id = vid
                out.append(t)
        return out
    return list(tracks)


def track_map(preds, gts, recall_points: Optional[int] = None) -> EvalReport:
    """Track AP/AR over all classes present in either predictions or ground truth.

    ``preds`` and ``gts`` are lists of tracks (grouped by their ``video_id``) or
    dicts mapping video id to track lists.
    """
    preds, gts = _flatten(preds), _flatten(gts)
    pred_groups, gt_groups = _group(preds), _group(gts)
    classes = sorted({c for _, c in pred_groups} | {c for _, c in gt_groups})
    report = EvalReport(id_switches=id_switch_count(preds, gts))
    if not classes:
        return report

    # IoU matrices per (video, class) computed once and shared across thresholds
    ious = {}
    for key in pred_groups.keys() | gt_groups.keys():
        ps, gs = pred_groups.get(key, []), gt_groups.get(key, [])
        ious[key] = np.array([[pair_st_iou(p, g) for g in gs] for p in ps]).reshape(len(ps), len(gs))

    ap_table = np.zeros((len(classes), len(IOU_THRESHOLDS)))
    recall_tables = {1: [], 10: []}
    for ci, c in enumerate(classes):
        keys = sorted(k for k in ious if k[1] == c)
        num_gt = sum(len(gt_groups.get(k, [])) for k in keys)
        for ti, thr in enumerate(IOU_THRESHOLDS):
            decisions = []
            for k in keys:
                decisions.extend(match_tracks(pred_groups.get(k, []), gt_groups.get(k, []), thr, ious[k]))
            decisions.sort(key=lambda d: _rank_key(d[0]))
            ap_table[ci, ti] = average_precision(decisions, num_gt, recall_points)
            if num_gt:
                report.pr_curves[(c, float(thr))] = precision_recall(decisions, num_gt)
        if num_gt == 0:
            continue
        for max_dets in recall_tables:
            per_thr = []
            for thr in IOU_THRESHOLDS:
                found = 0
                for k in keys:
                    ps = pred_groups.get(k, [])
                    keep = sorted(range(len(ps)), key=lambda i: _rank_key(ps[i]))[:max_dets]
                    sub = [ps[i] for i in keep]
                    sub_ious = ious[k][keep] if keep else ious[k][:0]
                    found += sum(g is not None for _, g in match_tracks(sub, gt_groups.get(k, []), thr, sub_ious))
                per_thr.append(found / num_gt)
            recall_tables[max_dets].append(per_thr)

    report.ap = float(ap_table.mean())
    report.ap50 = float(ap_table[:, 0].mean())
    report.ap75 = float(ap_table[:, 5].mean())
    report.ap_per_threshold = {float(t): float(v) for t, v in zip(IOU_THRESHOLDS, ap_table.mean(axis=0))}
    report.ap_per_class = {c: float(v) for c, v in zip(classes, ap_table.mean(axis=1))}
    if recall_tables[1]:
        report.ar1 = float(np.mean(recall_tables[1]))
        report.ar10 = float(np.mean(recall_tables[10]))
    return report


def id_switch_count(pred_tracks, gt_tracks, iou_threshold: float = 0.5) -> int:
    """Count changes of the predicted identity matched to each ground-truth identity.

    Boxes are matched per frame (and video). As in CLEAR-MOT, a ground-truth
    object keeps last frame's predicted identity while that pair still has
    IoU >= ``iou_threshold``; the remaining boxes are paired by Hungarian
    assignment on IoU, keeping pairs at or above the threshold.
    """
    pred_tracks, gt_tracks = _flatten(pred_tracks), _flatten(gt_tracks)

    def by_frame(tracks):
        frames = defaultdict(list)
        for t in tracks:
            for f, box, _ in t.records:
                frames[(t.video_id, f)].append((t.identity, box))
        return frames

    pred_frames, gt_frames = by_frame(pred_tracks), by_frame(gt_tracks)
    last_match = {}
    switches = 0
    for key in sorted(gt_frames):
        gts = gt_frames[key]
        preds = pred_frames.get(key, [])
        if not preds:
            continue
        overlap = np.array([[iou(g[1], p[1]) for p in preds] for g in gts])
        pred_index = {p[0]: k for k, p in enumerate(preds)}
        kept = {}
        for gi, (gid, _) in enumerate(gts):
            pi = pred_index.get(last_match.get((key[0], gid)))
            if pi is not None and overlap[gi, pi] >= iou_threshold:
                kept[gi] = pi
        free_g = [gi for gi in range(len(gts)) if gi not in kept]
        free_p = [pi for pi in range(len(preds)) if pi not in kept.values()]
        if free_g and free_p:
            sub = overlap[np.ix_(free_g, free_p)]
            for a, b in hungarian_solve(-sub).pairs:
                if sub[a, b] >= iou_threshold:
                    gi, pi = free_g[a], free_p[b]
                    gt_id = (key[0], gts[gi][0])
                    if gt_id in last_match and last_match[gt_id] != preds[pi][0]:
                        switches += 1
                    last_match[gt_id] = preds[pi][0]
    return switches
