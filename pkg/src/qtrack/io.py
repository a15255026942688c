"""JSON detection, track and ground-truth files.

Detection file::

    {"format_version": 1, "video_id": str, "embedding_dim": int,
     "frames": [{"frame_index": int,
                 "detections": [{"box": [x1, y1, x2, y2], "score": float,
                                 "class_id": int, "embedding": [float, ...],
                                 "mask_rle": {"size": [h, w], "counts": [...]}}]}]}

Track file (ground-truth files use the same layout, ``score`` optional)::

    {"format_version": 1, "video_id": str,
     "tracks": [{"identity": int, "class_id": int, "score": float,
                 "records": [{"frame_index": int, "box": [...], "mask_rle": {...}}]}]}

Any other top-level keys are carried through untouched in ``meta``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .evaluation import GroundTruthTrack
from .geometry import BBox, Mask, RLEError, rle_decode, rle_encode
from .tracker import Detection, Track

FORMAT_VERSION = 1

E_JSON = "E_JSON"
E_SCHEMA = "E_SCHEMA"
E_VERSION = "E_VERSION"
E_FRAME_ORDER = "E_FRAME_ORDER"
E_DIM_MISMATCH = "E_DIM_MISMATCH"
E_RLE = "E_RLE"
E_IDENTITY = "E_IDENTITY"


class FormatError(ValueError):
    """Invalid input file. ``code`` is a stable machine-readable tag."""

    def __init__(self, code: str, message: str, path: str = "", line: int | None = None):
        self.code = code
        self.path = path
        self.line = line
        where = ""
        if line is not None:
            where += f" (line {line})"
        if path:
            where += f" at {path}"
        super().__init__(f"{message}{where}")


@dataclass
class DetectionFile:
    video_id: str = ""
    embedding_dim: int = 0
    frames: List[Tuple[int, List[Detection]]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


@dataclass
class TrackFile:
    video_id: str = ""
    tracks: List[GroundTruthTrack] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def _load(data) -> dict:
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(E_JSON, f"not UTF-8: {exc}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise FormatError(E_JSON, f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise FormatError(E_SCHEMA, "top level must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(E_VERSION, f"unsupported format_version {version!r}", "format_version")
    return doc


def _require(obj, key, kind, path):
    if not isinstance(obj, dict) or key not in obj:
        raise FormatError(E_SCHEMA, f"missing field {key!r}", path)
    value = obj[key]
    ok = isinstance(value, kind) and not (isinstance(value, bool) and kind is not bool)
    if not ok:
        raise FormatError(E_SCHEMA, f"field {key!r} has wrong type {type(value).__name__}", f"{path}.{key}")
    return value


def _number(value, path) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise FormatError(E_SCHEMA, "expected a finite number", path)
    return float(value)


def _box(value, path) -> BBox:
    if not isinstance(value, list) or len(value) != 4:
        raise FormatError(E_SCHEMA, "box must be a list of 4 numbers", path)
    coords = [_number(v, f"{path}[{k}]") for k, v in enumerate(value)]
    try:
        return BBox(*coords)
    except ValueError as exc:
        raise FormatError(E_SCHEMA, str(exc), path) from None


def _mask(obj, path):
    if obj.get("mask_rle") is None:
        return None
    try:
        return rle_decode(obj["mask_rle"])
    except RLEError as exc:
        raise FormatError(E_RLE, str(exc), f"{path}.mask_rle") from None


def _check_order(indices, path):
    for k in range(1, len(indices)):
        if indices[k] <= indices[k - 1]:
            raise FormatError(E_FRAME_ORDER, f"frame_index {indices[k]} does not increase", f"{path}[{k}]")


def _meta(doc, known):
    return {k: v for k, v in doc.items() if k not in known}


def parse_detection_file(data) -> DetectionFile:
    doc = _load(data)
    video_id = _require(doc, "video_id", str, "$")
    dim = _require(doc, "embedding_dim", int, "$")
    raw_frames = _require(doc, "frames", list, "$")
    frames = []
    for fi, fr in enumerate(raw_frames):
        fpath = f"frames[{fi}]"
        index = _require(fr, "frame_index", int, fpath)
        dets = []
        for di, d in enumerate(_require(fr, "detections", list, fpath)):
            dpath = f"{fpath}.detections[{di}]"
            box = _box(_require(d, "box", list, dpath), f"{dpath}.box")
            score = _number(_require(d, "score", (int, float), dpath), f"{dpath}.score")
            if not 0.0 <= score <= 1.0:
                raise FormatError(E_SCHEMA, "score must lie in [0, 1]", f"{dpath}.score")
            class_id = _require(d, "class_id", int, dpath)
            if class_id < 0:
                raise FormatError(E_SCHEMA, "class_id must be >= 0", f"{dpath}.class_id")
            emb = _require(d, "embedding", list, dpath)
            if len(emb) != dim:
                raise FormatError(E_DIM_MISMATCH, f"embedding has length {len(emb)}, expected {dim}",
                                  f"{dpath}.embedding")
            emb = np.array([_number(v, f"{dpath}.embedding[{k}]") for k, v in enumerate(emb)])
            dets.append(Detection(box, class_id, score, emb, _mask(d, dpath)))
        frames.append((index, dets))
    _check_order([f for f, _ in frames], "frames")
    return DetectionFile(video_id, dim, frames, _meta(doc, {"format_version", "video_id", "embedding_dim", "frames"}))


def _rle(mask):
    return None if mask is None else rle_encode(mask)


def _floats(values) -> list:
    return [float(v) for v in values]


def detection_file_to_json(df: DetectionFile) -> dict:
    frames = []
    for index, dets in df.frames:
        out = []
        for d in dets:
            item = {"box": _floats(d.box.as_list()), "score": float(d.score), "class_id": int(d.class_id),
                    "embedding": _floats(d.embedding)}
            if d.mask is not None:
                item["mask_rle"] = _rle(d.mask)
            out.append(item)
        frames.append({"frame_index": int(index), "detections": out})
    doc = {"format_version": FORMAT_VERSION, "video_id": df.video_id,
           "embedding_dim": int(df.embedding_dim), "frames": frames}
    doc.update(df.meta)
    return doc


def dumps(doc: dict) -> bytes:
    return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")


def serialize_detection_file(df: DetectionFile) -> bytes:
    return dumps(detection_file_to_json(df))


def parse_track_file(data, require_score: bool = True) -> TrackFile:
    doc = _load(data)
    video_id = _require(doc, "video_id", str, "$")
    tracks = []
    seen = set()
    for ti, t in enumerate(_require(doc, "tracks", list, "$")):
        tpath = f"tracks[{ti}]"
        identity = _require(t, "identity", int, tpath)
        if identity in seen:
            raise FormatError(E_IDENTITY, f"duplicate identity {identity}", f"{tpath}.identity")
        seen.add(identity)
        class_id = _require(t, "class_id", int, tpath)
        if require_score or "score" in t:
            score = _number(_require(t, "score", (int, float), tpath), f"{tpath}.score")
        else:
            score = 1.0
        records = []
        for ri, r in enumerate(_require(t, "records", list, tpath)):
            rpath = f"{tpath}.records[{ri}]"
            index = _require(r, "frame_index", int, rpath)
            records.append((index, _box(_require(r, "box", list, rpath), f"{rpath}.box"), _mask(r, rpath)))
        _check_order([r[0] for r in records], f"{tpath}.records")
        tracks.append(GroundTruthTrack(identity, class_id, records, score, video_id))
    return TrackFile(video_id, tracks, _meta(doc, {"format_version", "video_id", "tracks"}))


def parse_gt_file(data) -> TrackFile:
    return parse_track_file(data, require_score=False)


def track_file_to_json(tf: TrackFile, include_score: bool = True) -> dict:
    tracks = []
    for t in tf.tracks:
        item = {"identity": int(t.identity), "class_id": int(t.class_id)}
        if include_score:
            item["score"] = float(t.score)
        records = []
        for index, box, mask in t.records:
            rec = {"frame_index": int(index), "box": _floats(box.as_list())}
            if mask is not None:
                rec["mask_rle"] = _rle(mask)
            records.append(rec)
        item["records"] = records
        tracks.append(item)
    doc = {"format_version": FORMAT_VERSION, "video_id": tf.video_id, "tracks": tracks}
    doc.update(tf.meta)
    return doc


def serialize_track_file(tf: TrackFile, include_score: bool = True) -> bytes:
    return dumps(track_file_to_json(tf, include_score))


def tracks_to_track_file(tracks: Sequence[Track], video_id: str = "", meta: dict | None = None) -> TrackFile:
    """Convert tracker output to the on-disk track layout, ordered by identity."""
    out = []
    for t in sorted(tracks, key=lambda t: t.identity):
        records = [(f, d.box, d.mask) for f, d in t.records]
        out.append(GroundTruthTrack(t.identity, t.class_id, records, t.score, video_id))
    return TrackFile(video_id, out, dict(meta or {}))
