"""
Box and segment arithmetic.

Boxes are stored in center form (cx, cy, w, h). Corner form (x1, y1, x2, y2)
is derived on demand. Array-based helpers take (n, 4) corner arrays and use
exactly the same floating point operations as the scalar functions, so the
two paths agree bit for bit.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class Axis(str, enum.Enum):
    WIDTH = "width"
    HEIGHT = "height"


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box needs positive width and height, got w={self.w}, h={self.h}")

    @property
    def corners(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2,
                self.cx + self.w / 2, self.cy + self.h / 2)

    @property
    def area(self) -> float:
        x1, y1, x2, y2 = self.corners
        return (x2 - x1) * (y2 - y1)

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "Box":
        return cls((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)

    @classmethod
    def from_top_left(cls, x: float, y: float, w: float, h: float) -> "Box":
        return cls(x + w / 2, y + h / 2, w, h)

    def scaled(self, s: float) -> "Box":
        return Box(self.cx * s, self.cy * s, self.w * s, self.h * s)

    def segments(self) -> tuple["Segment", "Segment"]:
        """Split into its width and height segments."""
        return Segment(self.cx, self.w, Axis.WIDTH), Segment(self.cy, self.h, Axis.HEIGHT)


@dataclass(frozen=True)
class Segment:
    c: float
    l: float  # noqa: E741
    axis: Axis

    def __post_init__(self):
        if not self.l > 0:
            raise ValueError(f"segment length must be positive, got {self.l}")
        object.__setattr__(self, "axis", Axis(self.axis))

    @property
    def bounds(self) -> tuple[float, float]:
        return self.c - self.l / 2, self.c + self.l / 2


@dataclass(frozen=True)
class ScoredBox:
    box: Box
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


def iou_2d(a: Box, b: Box) -> float:
    ax1, ay1, ax2, ay2 = a.corners
    bx1, by1, bx2, by2 = b.corners
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def overlap_1d(a: Segment, b: Segment) -> float:
    """Intersection over union of two intervals on the same axis."""
    if a.axis != b.axis:
        raise ValueError(f"cannot overlap a {a.axis.value} segment with a {b.axis.value} segment")
    a1, a2 = a.bounds
    b1, b2 = b.bounds
    inter = max(0.0, min(a2, b2) - max(a1, b1))
    return inter / ((a2 - a1) + (b2 - b1) - inter)


def to_corners(boxes: np.ndarray) -> np.ndarray:
    """(n, 4) center form -> (n, 4) corner form."""
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    cx, cy, w, h = boxes.T
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=1)


def to_center(corners: np.ndarray) -> np.ndarray:
    corners = np.asarray(corners, dtype=float).reshape(-1, 4)
    x1, y1, x2, y2 = corners.T
    return np.stack([(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1], axis=1)


def boxes_to_array(boxes: Iterable[Box]) -> np.ndarray:
    """Stack boxes into an (n, 4) center-form array."""
    arr = np.array([(b.cx, b.cy, b.w, b.h) for b in boxes], dtype=float)
    return arr.reshape(-1, 4)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (n, 4) and (m, 4) corner arrays."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    iw = np.maximum(0.0, np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]))
    ih = np.maximum(0.0, np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]))
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def nms_indices(corners: np.ndarray, scores: np.ndarray, iou_threshold: float,
                max_keep: int | None = None) -> np.ndarray:
    """Greedy NMS over corner-form boxes; returns kept indices in score order.

    Equal scores keep input order (stable sort), so earlier boxes win ties.
    ``max_keep`` stops early once that many boxes survive; the survivors are
    the same as the first ``max_keep`` of a full run.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    corners = np.asarray(corners, dtype=float).reshape(-1, 4)
    scores = np.asarray(scores, dtype=float).reshape(-1)
    order = np.argsort(-scores, kind="stable")
    x1, y1, x2, y2 = (corners[:, i] for i in range(4))
    areas = (x2 - x1) * (y2 - y1)
    keep = []
    while order.size > 0:
        i = order[0]
        keep.append(i)
        if max_keep is not None and len(keep) >= max_keep:
            break
        rest = order[1:]
        iw = np.maximum(0.0, np.minimum(x2[i], x2[rest]) - np.maximum(x1[i], x1[rest]))
        ih = np.maximum(0.0, np.minimum(y2[i], y2[rest]) - np.maximum(y1[i], y1[rest]))
        inter = iw * ih
        iou = inter / (areas[i] + areas[rest] - inter)
        order = rest[iou <= iou_threshold]
    return np.asarray(keep, dtype=np.intp)


def nms(boxes: Sequence[ScoredBox], iou_threshold: float) -> list[ScoredBox]:
    """Greedy descending-score suppression; no two survivors overlap above the threshold."""
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    if len(boxes) == 0:
        return []
    corners = to_corners(boxes_to_array(sb.box for sb in boxes))
    scores = np.array([sb.score for sb in boxes])
    return [boxes[i] for i in nms_indices(corners, scores, iou_threshold)]


def clip_corners(corners: np.ndarray, width: float, height: float) -> np.ndarray:
    corners = np.array(corners, dtype=float).reshape(-1, 4)
    corners[:, [0, 2]] = np.clip(corners[:, [0, 2]], 0.0, width)
    corners[:, [1, 3]] = np.clip(corners[:, [1, 3]], 0.0, height)
    return corners
