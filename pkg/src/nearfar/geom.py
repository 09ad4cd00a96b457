"""Bounding-box parameterizations and intersection-over-union.

Two forms are used throughout the package:

* ``CornerBox``  -- ``[x1, y1, x2, y2]`` with top-left / bottom-right corners.
* ``StateBox``   -- ``(x, y, s, r)`` with center, area and width/height ratio,
  the measurement space of the Kalman filter.

Coordinates are continuous reals; sub-pixel boxes are legal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class CornerBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box coordinates: {vals}")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValueError(f"degenerate box (need x2>x1, y2>y1): {vals}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @classmethod
    def from_seq(cls, vals: Sequence[float]) -> "CornerBox":
        if len(vals) != 4:
            raise ValueError(f"expected 4 box coordinates, got {len(vals)}")
        return cls(*(float(v) for v in vals))


@dataclass(frozen=True)
class StateBox:
    x: float
    y: float
    s: float
    r: float

    def __post_init__(self):
        vals = (self.x, self.y, self.s, self.r)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite state box: {vals}")
        if self.s <= 0 or self.r <= 0:
            raise ValueError(f"state box needs s>0 and r>0: {vals}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.s, self.r], dtype=float)


def corner_to_state(b: CornerBox) -> StateBox:
    w = b.x2 - b.x1
    h = b.y2 - b.y1
    return StateBox(x=(b.x1 + b.x2) / 2.0, y=(b.y1 + b.y2) / 2.0, s=w * h, r=w / h)


def state_to_corner(sb: StateBox) -> CornerBox:
    w = math.sqrt(sb.s * sb.r)
    h = math.sqrt(sb.s / sb.r)
    return CornerBox(sb.x - w / 2.0, sb.y - h / 2.0, sb.x + w / 2.0, sb.y + h / 2.0)


def iou(a: CornerBox, b: CornerBox) -> float:
    """Intersection over union. Touching boxes (zero-area overlap) give 0."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    # identical boxes: guard against rounding making inter/union != 1
    if a == b:
        return 1.0
    return min(1.0, inter / union)


def iou_matrix(rows: Sequence[CornerBox], cols: Sequence[CornerBox]) -> np.ndarray:
    """Pairwise IoU, shape ``(len(rows), len(cols))``."""
    if len(rows) == 0 or len(cols) == 0:
        return np.zeros((len(rows), len(cols)))
    a = np.array([r.as_list() for r in rows], dtype=float)[:, None, :]
    b = np.array([c.as_list() for c in cols], dtype=float)[None, :, :]
    iw = np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0])
    ih = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    out = np.minimum(1.0, inter / (area_a + area_b - inter))
    same = np.all(a == b, axis=-1)
    out[same] = 1.0
    return out
