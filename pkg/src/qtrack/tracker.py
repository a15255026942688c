"""Online instance association.

Each frame keeps the top-k scoring detections as candidates and scores every
candidate/track pair with a matching factor

    F = S * (1 + IoU) / 2 * (1 + score) / 2 * [same class]

where S is the bi-directional softmax similarity between candidate embeddings
and track memory embeddings. Candidates then claim tracks (greedily in score
order, or by Hungarian assignment on -F) when F reaches ``tau_new``; anything
left unclaimed opens a new identity.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .assignment import hungarian_solve
from .embedding import as_embedding, bidirectional_softmax, l2_normalize, stack_embeddings
from .geometry import BBox, Mask, iou

log = logging.getLogger(__name__)

ASSIGN_MODES = ("greedy", "hungarian")


@dataclass
class Detection:
    box: BBox
    class_id: int
    score: float
    embedding: np.ndarray
    mask: Optional[Mask] = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score must lie in [0, 1], got {self.score}")
        self.embedding = as_embedding(self.embedding)


@dataclass
class Track:
    identity: int
    class_id: int
    memory_embedding: np.ndarray
    memory_box: BBox
    last_active_frame: int
    records: List[Tuple[int, Detection]] = field(default_factory=list)

    @property
    def score(self) -> float:
        """Mean detection score over the track's records."""
        if not self.records:
            return 0.0
        return float(np.mean([d.score for _, d in self.records]))

    @property
    def max_score(self) -> float:
        return max((d.score for _, d in self.records), default=0.0)


@dataclass
class AssocConfig:
    top_k: int = 10
    tau_new: float = 0.1
    memory_momentum: float = 0.0
    keep_alive_frames: float = math.inf
    emit_score_threshold: float = 0.0
    assign_mode: str = "greedy"
    normalize_embeddings: bool = False

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.tau_new < 0:
            raise ValueError("tau_new must be >= 0")
        if not 0.0 <= self.memory_momentum <= 1.0:
            raise ValueError("memory_momentum must lie in [0, 1]")
        if self.keep_alive_frames < 0:
            raise ValueError("keep_alive_frames must be >= 0")
        if self.assign_mode not in ASSIGN_MODES:
            raise ValueError(f"assign_mode must be one of {ASSIGN_MODES}")


def select_candidates(dets: Sequence[Detection], k: int) -> List[Detection]:
    """Top-k detections by score, descending; equal scores keep input order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    return [dets[i] for i in order[:k]]


def matching_factor_matrix(cands: Sequence[Detection], tracks: Sequence[Track],
                           normalize_embeddings: bool = False) -> np.ndarray:
    if not cands or not tracks:
        return np.zeros((len(cands), len(tracks)))
    C = stack_embeddings([d.embedding for d in cands])
    R = stack_embeddings([t.memory_embedding for t in tracks])
    if C.shape[1] != R.shape[1]:
        raise ValueError(f"embedding dimensions differ: {C.shape[1]} vs {R.shape[1]}")
    if normalize_embeddings:
        C, R = l2_normalize(C), l2_normalize(R)
    S = bidirectional_softmax(C, R)
    spatial = np.array([[(1 + iou(d.box, t.memory_box)) / 2 for t in tracks] for d in cands])
    confidence = np.array([(1 + d.score) / 2 for d in cands])[:, None]
    same_class = np.array([[d.class_id == t.class_id for t in tracks] for d in cands])
    return S * spatial * confidence * same_class


def _greedy(F: np.ndarray, tau: float) -> dict:
    claimed = np.zeros(F.shape[1], dtype=bool)
    out = {}
    for m in range(F.shape[0]):
        row = np.where(claimed, -np.inf, F[m])
        if row.size == 0:
            continue
        # argmax returns the first maximum; tracks are ordered by identity
        n = int(np.argmax(row))
        if row[n] >= tau:
            out[m] = n
            claimed[n] = True
    return out


def _hungarian(F: np.ndarray, tau: float) -> dict:
    if F.size == 0:
        return {}
    result = hungarian_solve(-F)
    return {m: n for m, n in result.pairs if F[m, n] >= tau}


def associate_frame(state: List[Track], frame_index: int, dets: Sequence[Detection],
                    cfg: AssocConfig | None = None) -> Tuple[List[Track], List[Tuple[Detection, int]]]:
    """Assign identities to one frame's detections, updating ``state`` in place.

    ``state`` holds every track seen so far, including retired ones, so
    identities are never reused. Returns the state and (detection, identity)
    pairs for the selected candidates in descending score order.
    """
    cfg = cfg or AssocConfig()
    if any(frame_index <= t.last_active_frame for t in state):
        raise ValueError(f"frame {frame_index} is not after the last processed frame")

    cands = select_candidates(dets, cfg.top_k)
    active = sorted(
        (t for t in state if frame_index - t.last_active_frame <= cfg.keep_alive_frames),
        key=lambda t: t.identity,
    )
    F = matching_factor_matrix(cands, active, cfg.normalize_embeddings)
    matches = (_greedy if cfg.assign_mode == "greedy" else _hungarian)(F, cfg.tau_new)

    next_id = max((t.identity for t in state), default=0) + 1
    out = []
    mu = cfg.memory_momentum
    for m, det in enumerate(cands):
        if m in matches:
            track = active[matches[m]]
            track.memory_embedding = (1 - mu) * det.embedding + mu * track.memory_embedding
            track.memory_box = det.box
            track.last_active_frame = frame_index
            track.records.append((frame_index, det))
        else:
            track = Track(next_id, det.class_id, det.embedding.copy(), det.box, frame_index,
                          [(frame_index, det)])
            state.append(track)
            next_id += 1
            log.debug("frame %d: new identity %d", frame_index, track.identity)
        out.append((det, track.identity))
    return state, out


def track_video(frames: Iterable[Tuple[int, Sequence[Detection]]],
                cfg: AssocConfig | None = None) -> List[Track]:
    cfg = cfg or AssocConfig()
    state: List[Track] = []
    last = None
    for frame_index, dets in frames:
        if last is not None and frame_index <= last:
            raise ValueError(f"frame indices must be strictly increasing ({last} then {frame_index})")
        last = frame_index
        associate_frame(state, frame_index, dets, cfg)
    return [t for t in state if t.max_score >= cfg.emit_score_threshold]
