"""Axis-aligned bounding boxes in center/size form."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    """Box stored as (center x, center y, width, height), in pixels.

    Width and height must be strictly positive. The on-disk corner form
    (x_min, y_min, w, h) converts losslessly up to float round-trip.
    """

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box size must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_corner(cls, x_min: float, y_min: float, w: float, h: float) -> "BoundingBox":
        return cls(x_min + w / 2.0, y_min + h / 2.0, w, h)

    def to_corner(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)

    @property
    def x_min(self) -> float:
        return self.cx - self.w / 2.0

    @property
    def y_min(self) -> float:
        return self.cy - self.h / 2.0

    @property
    def x_max(self) -> float:
        return self.cx + self.w / 2.0

    @property
    def y_max(self) -> float:
        return self.cy + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "BoundingBox":
        cx, cy, w, h = (float(v) for v in arr)
        return cls(cx, cy, w, h)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def iou_matrix(a_xyxy: np.ndarray, b_xyxy: np.ndarray) -> np.ndarray:
    """Pairwise IoU for boxes given as (N, 4) / (M, 4) arrays in x1,y1,x2,y2."""
    a = np.asarray(a_xyxy, dtype=np.float64)
    b = np.asarray(b_xyxy, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def clamp_to_image(box: BoundingBox, img_w: int, img_h: int, min_size: float = 1.0) -> BoundingBox:
    """Clamp a box to image bounds with a minimum side length.

    Tiny boxes near borders are kept at min_size rather than dropped.
    """
    w = min(max(box.w, min_size), float(img_w))
    h = min(max(box.h, min_size), float(img_h))
    cx = min(max(box.cx, w / 2.0), img_w - w / 2.0)
    cy = min(max(box.cy, h / 2.0), img_h - h / 2.0)
    return BoundingBox(cx, cy, w, h)
