"""Deterministic synthetic videos with ground-truth identities.

Every random draw comes from one ``numpy.random.Philox`` (a counter-based
64-bit generator) seeded with the scenario seed, in a fixed draw order, so a
(config, seed) pair always produces the same scenario.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .evaluation import GroundTruthTrack
from .geometry import BBox, FrameSize, Mask
from .io import DetectionFile, TrackFile, serialize_detection_file, serialize_track_file
from .tracker import Detection

PRNG_NAME = "numpy.random.Philox"
MIN_ANCHOR_ANGLE_DEG = 60.0
MAX_ANCHOR_ATTEMPTS = 16


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    num_objects: int = 3
    num_frames: int = 36
    frame_width: int = 640
    frame_height: int = 360
    num_classes: int = 3
    embedding_dim: int = 32
    embedding_noise_sigma: float = 0.0
    max_speed: float = 4.0                 # pixels per frame, per axis
    min_box_frac: float = 0.1
    max_box_frac: float = 0.25
    box_jitter: float = 0.0                # fraction of frame size, per coordinate
    score_range: Tuple[float, float] = (0.7, 1.0)
    false_positive_rate: float = 0.0       # per object slot and frame
    occlusion_windows: Dict[int, List[Tuple[int, int]]] = field(default_factory=dict)
    with_masks: bool = True

    def __post_init__(self):
        if self.num_objects < 0 or self.num_frames < 0:
            raise ScenarioError("object and frame counts must be non-negative")
        if self.num_classes < 1 or self.embedding_dim < 1:
            raise ScenarioError("num_classes and embedding_dim must be positive")
        if self.embedding_noise_sigma < 0 or self.box_jitter < 0:
            raise ScenarioError("noise amplitudes must be non-negative")
        if not 0 < self.min_box_frac <= self.max_box_frac < 1:
            raise ScenarioError("box size fractions must satisfy 0 < min <= max < 1")
        lo, hi = self.score_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ScenarioError("score_range must lie inside [0, 1]")
        self.score_range = (float(lo), float(hi))
        self.occlusion_windows = {int(k): [tuple(w) for w in v] for k, v in self.occlusion_windows.items()}

    @property
    def frame(self) -> FrameSize:
        return FrameSize(self.frame_width, self.frame_height)

    def occluded(self, obj: int, frame_index: int) -> bool:
        return any(a <= frame_index <= b for a, b in self.occlusion_windows.get(obj, ()))

    def to_json(self) -> dict:
        d = asdict(self)
        d["score_range"] = list(self.score_range)
        d["occlusion_windows"] = {str(k): [list(w) for w in v] for k, v in self.occlusion_windows.items()}
        return d


@dataclass
class Scenario:
    frames: List[Tuple[int, List[Detection]]]
    gt_tracks: List[GroundTruthTrack]
    seed: int
    config: ScenarioConfig
    video_id: str = ""

    @property
    def num_detections(self) -> int:
        return sum(len(d) for _, d in self.frames)


def make_anchors(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Unit vectors with pairwise angle >= 60 degrees, by Gram-Schmidt on random draws."""
    if n == 0:
        return np.zeros((0, dim))
    if n > dim:
        raise ScenarioError(
            f"cannot place {n} anchors {MIN_ANCHOR_ANGLE_DEG:.0f} degrees apart in dimension {dim}; "
            f"need embedding_dim >= num_objects")
    max_cos = np.cos(np.radians(MIN_ANCHOR_ANGLE_DEG))
    for _ in range(MAX_ANCHOR_ATTEMPTS):
        q, _ = np.linalg.qr(rng.standard_normal((dim, n)))
        anchors = q.T
        gram = anchors @ anchors.T
        np.fill_diagonal(gram, -1.0)
        if gram.max() <= max_cos + 1e-12:
            return anchors
    raise ScenarioError("anchor separation check failed after retries")


def min_pairwise_angle(vectors: np.ndarray) -> float:
    if len(vectors) < 2:
        return 180.0
    unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    gram = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(gram, -1.0)
    return float(np.degrees(np.arccos(gram.max())))


def _trajectory(rng, cfg: ScenarioConfig):
    W, H = cfg.frame_width, cfg.frame_height
    span = max(cfg.num_frames - 1, 0)
    w = rng.uniform(cfg.min_box_frac, cfg.max_box_frac) * W
    h = rng.uniform(cfg.min_box_frac, cfg.max_box_frac) * H
    v = rng.uniform(-cfg.max_speed, cfg.max_speed, size=2)
    # cap speed so the whole path fits inside the frame
    room = np.array([W - w, H - h])
    if span:
        v = np.clip(v, -room / span, room / span)
    travel = v * span
    lo = np.maximum(0.0, -travel)
    hi = np.maximum(np.minimum(room, room - travel), lo)
    start = rng.uniform(lo, hi)
    return start, v, (w, h)


def _unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x)


def generate_scenario(cfg: ScenarioConfig, seed: int, video_id: str | None = None) -> Scenario:
    rng = np.random.Generator(np.random.Philox(seed))
    frame = cfg.frame
    W, H = cfg.frame_width, cfg.frame_height
    d = cfg.embedding_dim

    anchors = make_anchors(rng, cfg.num_objects, d)
    assert min_pairwise_angle(anchors) >= MIN_ANCHOR_ANGLE_DEG - 1e-9
    classes = rng.integers(0, cfg.num_classes, size=cfg.num_objects)
    paths = [_trajectory(rng, cfg) for _ in range(cfg.num_objects)]
    # per-component std sigma/sqrt(d) keeps the expected noise norm at sigma for any d
    noise_scale = cfg.embedding_noise_sigma / np.sqrt(d)

    gt_records: List[list] = [[] for _ in range(cfg.num_objects)]
    frames = []
    for t in range(cfg.num_frames):
        dets = []
        for k in range(cfg.num_objects):
            (x0, y0), (vx, vy), (w, h) = paths[k]
            true_box = BBox(x0 + vx * t, y0 + vy * t, x0 + vx * t + w, y0 + vy * t + h).clip(frame)
            gt_mask = Mask.from_box(true_box, frame) if cfg.with_masks else None
            gt_records[k].append((t, true_box, gt_mask))

            noise = rng.standard_normal(d) * noise_scale
            jitter = rng.uniform(-cfg.box_jitter, cfg.box_jitter, size=4) * [W, H, W, H]
            score = float(rng.uniform(*cfg.score_range))
            if cfg.occluded(k, t):
                continue
            if cfg.box_jitter:
                x1, y1, x2, y2 = np.array(true_box.as_list()) + jitter
                box = BBox(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2)).clip(frame)
            else:
                box = true_box
            mask = Mask.from_box(box, frame) if cfg.with_masks else None
            emb = anchors[k] if noise_scale == 0 else _unit(anchors[k] + noise)
            dets.append(Detection(box, int(classes[k]), score, emb.copy(), mask))

        for _ in range(int(rng.binomial(cfg.num_objects, cfg.false_positive_rate))):
            w, h = rng.uniform(cfg.min_box_frac, cfg.max_box_frac, size=2) * [W, H]
            x1, y1 = rng.uniform(0, W - w), rng.uniform(0, H - h)
            box = BBox(x1, y1, x1 + w, y1 + h)
            emb = _unit(rng.standard_normal(d))
            score = float(rng.uniform(0.05, cfg.score_range[0]))
            cls = int(rng.integers(0, cfg.num_classes))
            dets.append(Detection(box, cls, score, emb, Mask.from_box(box, frame) if cfg.with_masks else None))

        order = rng.permutation(len(dets))
        frames.append((t, [dets[i] for i in order]))

    vid = video_id if video_id is not None else f"sim-{seed}"
    gt_tracks = [
        GroundTruthTrack(k + 1, int(classes[k]), gt_records[k], video_id=vid)
        for k in range(cfg.num_objects)
    ]
    return Scenario(frames, gt_tracks, seed, cfg, vid)


def _header(s: Scenario) -> dict:
    return {"simulation": {"seed": int(s.seed), "prng": PRNG_NAME, "config": s.config.to_json()}}


def scenario_to_detfile(s: Scenario) -> bytes:
    df = DetectionFile(s.video_id, s.config.embedding_dim, s.frames, _header(s))
    return serialize_detection_file(df)


def scenario_to_gtfile(s: Scenario) -> bytes:
    return serialize_track_file(TrackFile(s.video_id, s.gt_tracks, _header(s)), include_score=False)
