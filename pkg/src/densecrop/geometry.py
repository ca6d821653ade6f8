"""Axis-aligned box kernels shared by every other module.

Coordinates are continuous pixels. The corner convention is (x1, y1)
top-left inclusive and (x2, y2) bottom-right exclusive, so zero-area
boxes are invalid and reprojection between coordinate frames is exact.
All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation

__all__ = [
    "Box",
    "Detection",
    "iou",
    "pairwise_iou",
    "scale_box",
    "enclosing_box",
    "project_into_crop",
    "reproject",
    "nms",
]


@dataclass(frozen=True)
class Box:
    """Rectangle with x1 < x2 and y1 < y2, finite coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvariantViolation(f"non-finite box coordinate: {v!r}")
            object.__setattr__(self, name, float(v))
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvariantViolation(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def contains(self, other: "Box") -> bool:
        """True when ``other`` lies inside this box (boundaries allowed)."""
        return (
            self.x1 <= other.x1
            and self.y1 <= other.y1
            and self.x2 >= other.x2
            and self.y2 >= other.y2
        )

    def intersection_area(self, other: "Box") -> float:
        iw = min(self.x2, other.x2) - max(self.x1, other.x1)
        ih = min(self.y2, other.y2) - max(self.y1, other.y1)
        if iw <= 0.0 or ih <= 0.0:
            return 0.0
        return iw * ih

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class Detection:
    """A scored class prediction: box, class id, confidence in [0, 1]."""

    box: Box
    class_id: int
    score: float

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise InvariantViolation(f"negative class id: {self.class_id}")
        if not (0.0 <= self.score <= 1.0):
            raise InvariantViolation(f"score outside [0, 1]: {self.score}")


def iou(a: Box, b: Box) -> float:
    """Intersection over union. Symmetric, 0 when disjoint, 1 when equal."""
    inter = a.intersection_area(b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def pairwise_iou(boxes: list[Box]) -> np.ndarray:
    """n x n IoU matrix with exact 1.0 on the diagonal."""
    n = len(boxes)
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        out[i, i] = 1.0
        for j in range(i + 1, n):
            v = iou(boxes[i], boxes[j])
            out[i, j] = v
            out[j, i] = v
    return out


def scale_box(b: Box, sigma: float, bounds: tuple[float, float]) -> Box:
    """Expand every side of ``b`` by ``sigma`` pixels, clipped to the image.

    ``bounds`` is (width, height). Expansion with sigma >= 0 on a box that
    lies inside the image cannot collapse it, but the invariant is still
    checked so out-of-bounds inputs fail loudly.
    """
    if sigma < 0:
        raise InvariantViolation(f"negative expansion: {sigma}")
    width, height = bounds
    return Box(
        max(0.0, b.x1 - sigma),
        max(0.0, b.y1 - sigma),
        min(float(width), b.x2 + sigma),
        min(float(height), b.y2 + sigma),
    )


def enclosing_box(boxes: list[Box]) -> Box:
    """Smallest box containing every input box. Empty input is an error."""
    if not boxes:
        raise InvariantViolation("enclosing_box of an empty list")
    return Box(
        min(b.x1 for b in boxes),
        min(b.y1 for b in boxes),
        max(b.x2 for b in boxes),
        max(b.y2 for b in boxes),
    )


def _crop_scales(crop: Box, crop_size: tuple[float, float]) -> tuple[float, float]:
    iw, ih = crop_size
    if iw <= 0 or ih <= 0:
        raise InvariantViolation(f"non-positive crop size {crop_size}")
    return (crop.x2 - crop.x1) / iw, (crop.y2 - crop.y1) / ih


def project_into_crop(b: Box, crop: Box, crop_size: tuple[float, float]) -> Box:
    """Map a box from parent-image pixels into upscaled-crop pixels.

    This is the inverse of :func:`reproject`: shift by the crop origin and
    scale up by the crop-to-output ratio.
    """
    sw, sh = _crop_scales(crop, crop_size)
    return Box(
        (b.x1 - crop.x1) / sw,
        (b.y1 - crop.y1) / sh,
        (b.x2 - crop.x1) / sw,
        (b.y2 - crop.y1) / sh,
    )


def reproject(p: Box, crop: Box, crop_size: tuple[float, float]) -> Box:
    """Map a box predicted in upscaled-crop pixels back to the parent image.

    With the upscaled crop rendered at ``crop_size`` = (I_W, I_H), the box is
    scaled down by (crop_width / I_W, crop_height / I_H) and shifted by the
    crop origin, so the result lies inside the crop region.
    """
    sw, sh = _crop_scales(crop, crop_size)
    return Box(
        sw * p.x1 + crop.x1,
        sh * p.y1 + crop.y1,
        sw * p.x2 + crop.x1,
        sh * p.y2 + crop.y1,
    )


def nms(dets: list[Detection], iou_thresh: float) -> list[Detection]:
    """Greedy per-class non-maximum suppression.

    Detections are visited by descending score (ties broken by input
    position, so the output is deterministic). A detection is kept iff its
    IoU with every already-kept detection of the same class is at most
    ``iou_thresh``. Returns kept detections in visiting order.
    """
    if not (0.0 < iou_thresh <= 1.0):
        raise InvariantViolation(f"iou_thresh outside (0, 1]: {iou_thresh}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept: list[Detection] = []
    for i in order:
        d = dets[i]
        if all(k.class_id != d.class_id or iou(k.box, d.box) <= iou_thresh for k in kept):
            kept.append(d)
    return kept
