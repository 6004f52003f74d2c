"""
Training labels for anchor strings and, for the baseline, anchor boxes.

Anchor strings at a ground truth's center cell ("aligned" strings) are
positive when the edge matches their scale. Strings elsewhere become positive
only after observation: if their decoded segment is part of a combined
proposal overlapping some ground truth by more than 0.6. Everything else is
negative.
"""
from __future__ import annotations

import enum
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .anchors import AnchorStringSet, default_strings, in_coverage, match_edge
from .codec import DEFAULT_STRIDE, AnchorInstance, SegmentTarget, encode_boxes, encode_segment
from .combiner import CombinerConfig, combine_arrays
from .geometry import Axis, Box, boxes_to_array, iou_matrix, to_corners
from .maps import PredictionMaps

log = logging.getLogger(__name__)

OBSERVE_IOU = 0.6
RPN_POS_IOU = 0.7
RPN_NEG_IOU = 0.3


class Label(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    IGNORE = "ignore"


class Source(str, enum.Enum):
    ALIGNED = "aligned"
    OBSERVED = "observed"
    DEFAULT_NEGATIVE = "default_negative"


@dataclass(frozen=True)
class GroundTruthObject:
    box: Box
    id: int = 0
    class_tag: Hashable | None = None


@dataclass(frozen=True)
class LabeledInstance:
    anchor: AnchorInstance
    label: Label
    target: SegmentTarget | None = None
    matched_object: int | None = None
    source: Source = Source.DEFAULT_NEGATIVE

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "source", Source(self.source))
        if self.label is Label.POSITIVE and self.target is None:
            raise ValueError("positive instances need a regression target")

    @property
    def key(self) -> tuple:
        return self.anchor.cell, self.anchor.axis, self.anchor.scale_index

    @property
    def is_aligned_positive(self) -> bool:
        return self.label is Label.POSITIVE and self.source is Source.ALIGNED


@dataclass
class LabeledBatch:
    instances: list[LabeledInstance]
    per_scale_counts: dict[int, tuple[int, int]]


@dataclass(frozen=True)
class LabeledBox:
    anchor: Box
    label: Label
    target: tuple[float, float, float, float] | None = None
    matched_object: int | None = None


@dataclass
class LabelReport:
    skipped_centers: list[int] = field(default_factory=list)
    skipped_edges: list[tuple[int, str]] = field(default_factory=list)


def _box(g) -> Box:
    return g.box if hasattr(g, "box") else g


def center_cell(box: Box, stride: float = DEFAULT_STRIDE) -> tuple[int, int]:
    """(row, col) of the feature-map cell holding the box center."""
    return math.floor(box.cy / stride), math.floor(box.cx / stride)


def assign_aligned(gts: Sequence, strings: AnchorStringSet | None = None,
                   map_shape: tuple[int, int] = (1, 1), stride: float = DEFAULT_STRIDE,
                   report: LabelReport | None = None, skip_out_of_coverage: bool = True
                   ) -> list[LabeledInstance]:
    """Positive aligned instances for each gt and axis.

    A later gt claiming the same (cell, axis, scale) replaces the earlier one,
    mirroring the oracle's last-write rule.
    """
    strings = strings or default_strings()
    report = report if report is not None else LabelReport()
    rows, cols = map_shape
    out: dict[tuple, LabeledInstance] = {}
    for j, g in enumerate(gts):
        box = _box(g)
        r, c = center_cell(box, stride)
        if not (0 <= r < rows and 0 <= c < cols):
            report.skipped_centers.append(j)
            log.warning("gt %d center (%.1f, %.1f) is outside the feature map", j, box.cx, box.cy)
            continue
        for seg in box.segments():
            if skip_out_of_coverage and not in_coverage(seg.l, strings):
                report.skipped_edges.append((j, seg.axis.value))
                continue
            for k in match_edge(seg.l, strings):
                anchor = AnchorInstance.at(r, c, k, seg.axis, strings, stride)
                inst = LabeledInstance(anchor, Label.POSITIVE, encode_segment(seg, anchor), j, Source.ALIGNED)
                out[inst.key] = inst
    return list(out.values())


def observe_to_distribute(candidates: Sequence[LabeledInstance], predictions: PredictionMaps,
                          gts: Sequence, combiner_cfg: CombinerConfig = CombinerConfig(),
                          ) -> list[LabeledInstance]:
    """Label every anchor string on the map.

    ``candidates`` are the aligned positives. Strings at gt center cells are
    aligned and keep their matched/unmatched status. Any other string whose
    decoded segment is the width or height member of a surviving combined
    proposal with IoU > 0.6 against a gt becomes an observed positive,
    targeted at the gt of highest such IoU. The rest are negative.
    """
    terms = predictions.terms
    stride = predictions.stride
    boxes = [_box(g) for g in gts]
    aligned = {inst.key: inst for inst in candidates if inst.is_aligned_positive}
    aligned_cells = {center_cell(b, stride) for b in boxes}

    observed: dict[tuple, tuple[float, int]] = {}
    if boxes:
        combined = combine_arrays(predictions, combiner_cfg)
        if len(combined):
            ious = iou_matrix(combined.corners, to_corners(boxes_to_array(boxes)))
            for p, j in zip(*np.nonzero(ious > OBSERVE_IOU)):
                r, c, kw, kh = (int(v) for v in combined.members[p])
                if (r, c) in aligned_cells:
                    continue
                for axis, k in ((Axis.WIDTH, kw), (Axis.HEIGHT, kh)):
                    key = ((r, c), axis, k)
                    best = observed.get(key)
                    if best is None or ious[p, j] > best[0]:
                        observed[key] = (float(ious[p, j]), int(j))

    out = []
    for axis in (Axis.WIDTH, Axis.HEIGHT):
        for r in range(predictions.height):
            for c in range(predictions.width):
                for k in range(1, predictions.n_strings + 1):
                    key = ((r, c), axis, k)
                    if key in aligned:
                        out.append(aligned[key])
                        continue
                    anchor = AnchorInstance.at(r, c, k, axis, terms, stride)
                    if key in observed:
                        j = observed[key][1]
                        seg = boxes[j].segments()[0 if axis is Axis.WIDTH else 1]
                        out.append(LabeledInstance(anchor, Label.POSITIVE, encode_segment(seg, anchor), j,
                                                   Source.OBSERVED))
                    else:
                        out.append(LabeledInstance(anchor, Label.NEGATIVE))
    return out


def assign_rpn_arrays(gts: np.ndarray, anchors: np.ndarray,
                      pos_iou: float = RPN_POS_IOU, neg_iou: float = RPN_NEG_IOU):
    """Array form of the baseline rule over center-form (n, 4) inputs.

    Returns (labels, matched) with labels 1 positive, 0 negative, -1 ignore and
    ``matched`` the per-anchor argmax gt (-1 without gts).
    """
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 4)
    gts = np.asarray(gts, dtype=float).reshape(-1, 4)
    labels = np.full(len(anchors), -1, dtype=np.int8)
    if len(gts) == 0:
        labels[:] = 0
        return labels, np.full(len(anchors), -1, dtype=np.intp)
    ious = iou_matrix(to_corners(anchors), to_corners(gts))  # (A, G)
    matched = np.argmax(ious, axis=1)
    best = ious[np.arange(len(anchors)), matched]
    labels[best < neg_iou] = 0
    labels[best >= pos_iou] = 1
    labels[np.argmax(ious, axis=0)] = 1
    return labels, matched


def assign_rpn(gts: Sequence, anchors: Sequence[Box]) -> list[LabeledBox]:
    """IoU >= 0.7 or best-for-some-gt is positive, max IoU < 0.3 negative, the rest ignored."""
    if len(anchors) == 0:
        raise ValueError("anchors must be non-empty")
    anchor_arr = boxes_to_array(anchors)
    gt_arr = boxes_to_array(_box(g) for g in gts)
    labels, matched = assign_rpn_arrays(gt_arr, anchor_arr)
    names = {1: Label.POSITIVE, 0: Label.NEGATIVE, -1: Label.IGNORE}
    out = []
    for i, a in enumerate(anchors):
        if labels[i] == 1:
            t = encode_boxes(gt_arr[matched[i]], anchor_arr[i])[0]
            out.append(LabeledBox(a, Label.POSITIVE, tuple(float(v) for v in t), int(matched[i])))
        else:
            out.append(LabeledBox(a, names[int(labels[i])]))
    return out


def sample_batch(instances: Sequence[LabeledInstance], rng_seed: int = 0,
                 per_scale_cap: int = 30) -> LabeledBatch:
    """Uniformly sample up to ``per_scale_cap`` positives and negatives per scale.

    Ignored instances are dropped. Sampled instances keep their input order.
    """
    if per_scale_cap < 1:
        raise ValueError("per_scale_cap must be >= 1")
    rng = np.random.default_rng(rng_seed)
    groups: dict[tuple[int, Label], list[int]] = defaultdict(list)
    for i, inst in enumerate(instances):
        if inst.label is not Label.IGNORE:
            groups[(inst.anchor.scale_index, inst.label)].append(i)
    chosen = []
    counts: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for (scale, label), idx in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        if len(idx) > per_scale_cap:
            idx = sorted(rng.choice(idx, size=per_scale_cap, replace=False).tolist())
        chosen.extend(idx)
        counts[scale][0 if label is Label.POSITIVE else 1] += len(idx)
    chosen.sort()
    return LabeledBatch([instances[i] for i in chosen], {k: tuple(v) for k, v in sorted(counts.items())})


def sample_rpn_batch(labeled: Sequence[LabeledBox], rng_seed: int = 0, batch_size: int = 256,
                     positive_fraction: float = 0.5) -> list[LabeledBox]:
    """Single image-wide batch: at most half positives, negatives fill the rest."""
    rng = np.random.default_rng(rng_seed)
    pos = [i for i, b in enumerate(labeled) if b.label is Label.POSITIVE]
    neg = [i for i, b in enumerate(labeled) if b.label is Label.NEGATIVE]
    n_pos = min(len(pos), int(batch_size * positive_fraction))
    pos = rng.choice(pos, size=n_pos, replace=False).tolist() if len(pos) > n_pos else pos
    n_neg = min(len(neg), batch_size - len(pos))
    neg = rng.choice(neg, size=n_neg, replace=False).tolist() if len(neg) > n_neg else neg
    return [labeled[i] for i in sorted(pos + neg)]
