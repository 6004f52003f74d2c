"""Center/log-length parameterization of segments and boxes against their references."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .anchors import AnchorStringSet
from .geometry import Axis, Box, Segment

DEFAULT_STRIDE = 16


@dataclass(frozen=True)
class SegmentTarget:
    t_c: float
    t_l: float
    axis: Axis

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis(self.axis))
        if not math.isfinite(self.t_l):
            raise ValueError("t_l must be finite")


@dataclass(frozen=True)
class AnchorInstance:
    """One anchor string placed at a feature-map cell."""
    anchor_c: float
    anchor_l: float
    scale_index: int
    cell: tuple[int, int]
    axis: Axis

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis(self.axis))

    @classmethod
    def at(cls, row: int, col: int, scale_index: int, axis: Axis | str,
           strings: AnchorStringSet | Sequence[float], stride: float = DEFAULT_STRIDE) -> "AnchorInstance":
        """Anchor string ``scale_index`` (1-based) centered in cell (row, col)."""
        axis = Axis(axis)
        coord = col if axis is Axis.WIDTH else row
        terms = strings.terms if isinstance(strings, AnchorStringSet) else strings
        return cls((coord + 0.5) * stride, float(terms[scale_index - 1]), scale_index, (row, col), axis)


def cell_center(index: int, stride: float = DEFAULT_STRIDE) -> float:
    return (index + 0.5) * stride


def decode_segment(t: SegmentTarget, a: AnchorInstance) -> Segment:
    if t.axis != a.axis:
        raise ValueError(f"target axis {t.axis.value} does not match anchor axis {a.axis.value}")
    return Segment(a.anchor_c + a.anchor_l * t.t_c, a.anchor_l * math.exp(t.t_l), a.axis)


def encode_segment(gt: Segment, a: AnchorInstance) -> SegmentTarget:
    if gt.axis != a.axis:
        raise ValueError(f"segment axis {gt.axis.value} does not match anchor axis {a.axis.value}")
    if not gt.l > 0:
        raise ValueError("segment length must be positive")
    return SegmentTarget((gt.c - a.anchor_c) / a.anchor_l, math.log(gt.l / a.anchor_l), a.axis)


def decode_box(t4, anchor: Box) -> Box:
    tx, ty, tw, th = (float(v) for v in t4)
    return Box(anchor.cx + anchor.w * tx, anchor.cy + anchor.h * ty,
               anchor.w * math.exp(tw), anchor.h * math.exp(th))


def encode_box(gt: Box, anchor: Box) -> np.ndarray:
    return np.array([(gt.cx - anchor.cx) / anchor.w, (gt.cy - anchor.cy) / anchor.h,
                     math.log(gt.w / anchor.w), math.log(gt.h / anchor.h)])


def decode_boxes(deltas: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Array form of ``decode_box`` over (n, 4) center-form anchors."""
    deltas = np.asarray(deltas, dtype=float).reshape(-1, 4)
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 4)
    out = np.empty_like(anchors)
    out[:, 0] = anchors[:, 0] + anchors[:, 2] * deltas[:, 0]
    out[:, 1] = anchors[:, 1] + anchors[:, 3] * deltas[:, 1]
    out[:, 2] = anchors[:, 2] * np.exp(deltas[:, 2])
    out[:, 3] = anchors[:, 3] * np.exp(deltas[:, 3])
    return out


def encode_boxes(gts: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    gts = np.asarray(gts, dtype=float).reshape(-1, 4)
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 4)
    return np.stack([(gts[:, 0] - anchors[:, 0]) / anchors[:, 2],
                     (gts[:, 1] - anchors[:, 1]) / anchors[:, 3],
                     np.log(gts[:, 2] / anchors[:, 2]),
                     np.log(gts[:, 3] / anchors[:, 3])], axis=1)
