"""Boxes, masks and the overlap measures used by matching, association and evaluation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np


@dataclass(frozen=True)
class FrameSize:
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame size must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in corner form, pixel coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(f"invalid box corners {self.as_list()}")

    @classmethod
    def from_cxcywh(cls, cx, cy, w, h, frame: FrameSize | None = None) -> "BBox":
        """Build a box from center form; normalized coordinates if ``frame`` is given."""
        if frame is not None:
            cx, w = cx * frame.width, w * frame.width
            cy, h = cy * frame.height, h * frame.height
        return cls(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_list(self) -> list:
        return [self.x1, self.y1, self.x2, self.y2]

    def normalized_cxcywh(self, frame: FrameSize) -> np.ndarray:
        return np.array([
            (self.x1 + self.x2) / 2 / frame.width,
            (self.y1 + self.y2) / 2 / frame.height,
            self.width / frame.width,
            self.height / frame.height,
        ])

    def clip(self, frame: FrameSize) -> "BBox":
        x1 = min(max(self.x1, 0.0), frame.width)
        y1 = min(max(self.y1, 0.0), frame.height)
        x2 = min(max(self.x2, x1), frame.width)
        y2 = min(max(self.y2, y1), frame.height)
        return BBox(x1, y1, x2, y2)


class Mask:
    """Binary instance mask stored as a (height, width) boolean grid."""

    def __init__(self, bits):
        bits = np.asarray(bits)
        if bits.ndim != 2 or bits.shape[0] <= 0 or bits.shape[1] <= 0:
            raise ValueError(f"mask must be a non-empty 2D grid, got shape {bits.shape}")
        self.bits = bits.astype(bool)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def from_box(cls, box: BBox, frame: FrameSize) -> "Mask":
        """Rasterize a box: pixel (r, c) is set when its center lies inside the box."""
        bits = np.zeros((frame.height, frame.width), dtype=bool)
        c0, c1 = int(np.ceil(box.x1 - 0.5)), int(np.ceil(box.x2 - 0.5))
        r0, r1 = int(np.ceil(box.y1 - 0.5)), int(np.ceil(box.y2 - 0.5))
        bits[max(r0, 0):max(r1, 0), max(c0, 0):max(c1, 0)] = True
        return cls(bits)

    def to_rle(self) -> dict:
        return rle_encode(self)

    @classmethod
    def from_rle(cls, rle: dict) -> "Mask":
        return rle_decode(rle)

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __repr__(self):
        return f"Mask({self.height}x{self.width}, area={self.area})"


class RLEError(ValueError):
    pass


def rle_encode(mask: Mask) -> dict:
    """COCO-style uncompressed RLE. Counts run over the column-major flattening
    and always start with a (possibly empty) run of zeros."""
    flat = mask.bits.flatten(order="F").astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(edges).tolist()
    if flat[0] == 1:
        counts.insert(0, 0)
    return {"size": [mask.height, mask.width], "counts": [int(c) for c in counts]}


def rle_decode(rle: dict) -> Mask:
    try:
        height, width = (int(v) for v in rle["size"])
        counts = list(rle["counts"])
    except (KeyError, TypeError, ValueError) as exc:
        raise RLEError(f"malformed RLE object: {exc}") from None
    if height <= 0 or width <= 0:
        raise RLEError(f"RLE size must be positive, got {[height, width]}")
    if any(not isinstance(c, (int, np.integer)) or isinstance(c, bool) or c < 0 for c in counts):
        raise RLEError("RLE counts must be non-negative integers")
    if sum(counts) != height * width:
        raise RLEError(f"RLE counts sum to {sum(counts)}, expected {height * width}")
    values = np.arange(len(counts)) % 2
    flat = np.repeat(values.astype(bool), counts)
    return Mask(flat.reshape((height, width), order="F"))


def rle_roundtrip(mask: Mask) -> Mask:
    return rle_decode(rle_encode(mask))


def _box_intersection(a: BBox, b: BBox) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    inter = _box_intersection(a, b)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def giou(a: BBox, b: BBox) -> float:
    inter = _box_intersection(a, b)
    union = a.area + b.area - inter
    hull = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    if hull <= 0:
        return 0.0
    iou_ = inter / union if union > 0 else 0.0
    return iou_ - (hull - union) / hull


def l1_box_distance(a: BBox, b: BBox, frame: FrameSize) -> float:
    """L1 distance between the normalized (cx, cy, w, h) views of two boxes."""
    return float(np.abs(a.normalized_cxcywh(frame) - b.normalized_cxcywh(frame)).sum())


def mask_iou(a: Mask, b: Mask) -> float:
    if a.bits.shape != b.bits.shape:
        raise ValueError(f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}")
    union = np.logical_or(a.bits, b.bits).sum()
    if union == 0:
        # two empty masks count as identical
        return 1.0
    return float(np.logical_and(a.bits, b.bits).sum() / union)


Region = Union[BBox, Mask]


def _region_inter_areas(a: Region, b: Region) -> Tuple[float, float, float]:
    if isinstance(a, BBox) and isinstance(b, BBox):
        return _box_intersection(a, b), a.area, b.area
    if isinstance(a, Mask) and isinstance(b, Mask):
        if a.bits.shape != b.bits.shape:
            raise ValueError(f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}")
        return float(np.logical_and(a.bits, b.bits).sum()), a.area, b.area
    raise TypeError("cannot compare a box with a mask; convert both tracks to one region type")


def track_st_iou(a: Sequence[Tuple[int, Region]], b: Sequence[Tuple[int, Region]]) -> float:
    """Spatio-temporal IoU of two tracks: summed intersections over summed unions.

    Frames where only one track is present contribute that region's area to the
    union. Returns 0 when the total union is empty.
    """
    for track in (a, b):
        frames = [f for f, _ in track]
        if any(f1 >= f2 for f1, f2 in zip(frames, frames[1:])):
            raise ValueError("frame indices must be strictly increasing within a track")
    regions_a = dict(a)
    regions_b = dict(b)
    inter_total = 0.0
    union_total = 0.0
    for f in regions_a.keys() | regions_b.keys():
        ra, rb = regions_a.get(f), regions_b.get(f)
        if ra is None:
            union_total += rb.area
        elif rb is None:
            union_total += ra.area
        else:
            inter, area_a, area_b = _region_inter_areas(ra, rb)
            inter_total += inter
            union_total += area_a + area_b - inter
    if union_total <= 0:
        return 0.0
    return inter_total / union_total
