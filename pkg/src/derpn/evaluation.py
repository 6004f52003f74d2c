"""
Proposal quality metrics and the matching-complexity probe.

Recall counts a ground truth as found at threshold tau when some proposal
reaches IoU >= tau with it. IoU histograms use 20 bins of width 0.05, closed
on the left; 1.0 falls in the last bin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .anchors import AnchorBoxSet, AnchorStringSet, MatchCounter, match_edge
from .geometry import Box, ScoredBox, boxes_to_array, iou_2d, iou_matrix, to_corners

DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7, 0.75, 0.8, 0.85, 0.9)
DEFAULT_BUDGET = 300
N_BINS = 20
BIN_EDGES = np.arange(N_BINS + 1) / N_BINS


@dataclass
class RecallTable:
    thresholds: tuple[float, ...]
    recall: dict[float, float | None]
    n_objects: int
    n_proposals_per_image: int | None
    undefined: bool = False

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "recall": {f"{t:g}": (None if v is None else round(v, 6)) for t, v in self.recall.items()},
            "n_objects": self.n_objects,
            "n_proposals_per_image": self.n_proposals_per_image,
            "undefined": self.undefined,
        }


@dataclass
class ProposalStats:
    mean_iou: float
    foreground_ratio: float
    histogram: np.ndarray
    n_proposals: int
    empty: bool = False

    def histogram_triples(self) -> list[tuple[float, float, int]]:
        return [(float(BIN_EDGES[i]), float(BIN_EDGES[i + 1]), int(c)) for i, c in enumerate(self.histogram)]

    def to_dict(self) -> dict:
        return {
            "mean_iou": round(self.mean_iou, 6),
            "foreground_ratio": round(self.foreground_ratio, 6),
            "n_proposals": self.n_proposals,
            "empty": self.empty,
            "histogram": [[lo, hi, c] for lo, hi, c in self.histogram_triples()],
        }


@dataclass
class ComplexityProbe:
    n: int
    n_distinct_edges: int
    n_distinct_shapes: int
    rpn_pair_evaluations: int
    derpn_edge_evaluations: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _corners(props) -> np.ndarray:
    """Accept (n, 4) corner arrays or sequences of ScoredBox / Box."""
    if isinstance(props, np.ndarray):
        return props.reshape(-1, 4)
    items = list(props)
    if not items:
        return np.empty((0, 4))
    boxes = [p.box if isinstance(p, ScoredBox) else p for p in items]
    return to_corners(boxes_to_array(boxes))


def truncate(props, budget: int = DEFAULT_BUDGET):
    """First ``budget`` proposals; proposals are assumed score-sorted."""
    return props[:budget]


def best_ious(proposals, gts) -> np.ndarray:
    """Best proposal IoU for each gt (0 when there are no proposals)."""
    g = _corners(gts)
    p = _corners(proposals)
    if len(g) == 0:
        return np.empty(0)
    if len(p) == 0:
        return np.zeros(len(g))
    return iou_matrix(g, p).max(axis=1)


def recall_at(proposals: Mapping[Any, Any], gts: Mapping[Any, Sequence[Box]],
              thresholds: Sequence[float] = DEFAULT_THRESHOLDS, budget: int | None = None) -> RecallTable:
    """Recall (percent) at each IoU threshold over all images in ``gts``.

    Images missing from ``proposals`` count as having none. With no ground
    truth at all the table is flagged undefined and every entry is None.
    """
    best = []
    for image_id, boxes in gts.items():
        props = proposals.get(image_id, [])
        if budget is not None:
            props = truncate(props, budget)
        best.append(best_ious(props, boxes))
    best = np.concatenate(best) if best else np.empty(0)
    thresholds = tuple(float(t) for t in thresholds)
    if best.size == 0:
        return RecallTable(thresholds, {t: None for t in thresholds}, 0, budget, undefined=True)
    recall = {t: 100.0 * float(np.count_nonzero(best >= t)) / best.size for t in thresholds}
    return RecallTable(thresholds, recall, int(best.size), budget)


def histogram_bins(values: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(BIN_EDGES, np.asarray(values, dtype=float), side="right") - 1
    return np.clip(idx, 0, N_BINS - 1)


def proposal_stats(proposals: Mapping[Any, Any], gts: Mapping[Any, Sequence[Box]]) -> ProposalStats:
    """Score every proposal by its best IoU with its image's ground truth."""
    scores = []
    for image_id, props in proposals.items():
        p = _corners(props)
        g = _corners(gts.get(image_id, []))
        if len(p) == 0:
            continue
        scores.append(iou_matrix(p, g).max(axis=1) if len(g) else np.zeros(len(p)))
    scores = np.concatenate(scores) if scores else np.empty(0)
    if scores.size == 0:
        return ProposalStats(0.0, 0.0, np.zeros(N_BINS, dtype=int), 0, empty=True)
    hist = np.bincount(histogram_bins(scores), minlength=N_BINS)
    fg = hist[N_BINS // 2:].sum() / scores.size
    return ProposalStats(float(scores.mean()), float(fg), hist, int(scores.size))


def format_recall_tables(tables: Mapping[str, RecallTable]) -> str:
    """Aligned text table: one header row of thresholds, one row per method."""
    tables = dict(tables)
    thresholds = next(iter(tables.values())).thresholds if tables else DEFAULT_THRESHOLDS
    name_w = max([len("IoU")] + [len(k) for k in tables])
    lines = ["IoU".ljust(name_w) + "".join(f"{t:>9g}" for t in thresholds)]
    for name, table in tables.items():
        cells = ["      n/a" if table.recall[t] is None else f"{table.recall[t]:9.2f}" for t in thresholds]
        lines.append(name.ljust(name_w) + "".join(cells))
    return "\n".join(lines) + "\n"


# reference quality --------------------------------------------------------

def best_string_iou(box: Box, strings: AnchorStringSet) -> float:
    """Best IoU between the box and a center-aligned box composed of matched anchor strings."""
    best = 0.0
    for i in match_edge(box.w, strings):
        for j in match_edge(box.h, strings):
            best = max(best, iou_2d(box, Box(box.cx, box.cy, strings.term(i), strings.term(j))))
    return best


def best_anchor_box_iou(box: Box, box_set: AnchorBoxSet) -> float:
    """Best IoU between the box and any center-aligned anchor shape."""
    return max(iou_2d(box, Box(box.cx, box.cy, w, h)) for w, h in box_set.shapes())


@dataclass
class ReferenceQuality:
    mean_best_iou: float
    min_best_iou: float
    frac_below_0_5: float
    frac_below_0_2: float
    max_abs_log_length_offset: float
    values: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {k: round(float(getattr(self, k)), 6) for k in
                ("mean_best_iou", "min_best_iou", "frac_below_0_5", "frac_below_0_2",
                 "max_abs_log_length_offset")}


def reference_quality(boxes: Sequence[Box], references) -> ReferenceQuality:
    """How well the best center-aligned reference fits each box before regression."""
    if isinstance(references, AnchorStringSet):
        ious = np.array([best_string_iou(b, references) for b in boxes])
        offsets = [abs(math.log(e / references.term(k)))
                   for b in boxes for e in (b.w, b.h) for k in match_edge(e, references)]
    else:
        shapes = references.shapes()
        ious, offsets = [], []
        for b in boxes:
            v = [iou_2d(b, Box(b.cx, b.cy, w, h)) for w, h in shapes]
            k = int(np.argmax(v))
            ious.append(v[k])
            offsets += [abs(math.log(b.w / shapes[k, 0])), abs(math.log(b.h / shapes[k, 1]))]
        ious = np.array(ious)
    if ious.size == 0:
        return ReferenceQuality(0.0, 0.0, 0.0, 0.0, 0.0, ious)
    return ReferenceQuality(float(ious.mean()), float(ious.min()), float(np.mean(ious < 0.5)),
                            float(np.mean(ious < 0.2)), float(max(offsets, default=0.0)), ious)


# complexity ---------------------------------------------------------------

class _CountingIoU:
    def __init__(self):
        self.calls = 0

    def __call__(self, a: Box, b: Box) -> float:
        self.calls += 1
        return iou_2d(a, b)


def complexity_probe(gts: Sequence[Box], strings: AnchorStringSet, anchor_box_set: AnchorBoxSet) -> ComplexityProbe:
    """Count reference evaluations needed to match every distinct object shape.

    The box baseline scores each distinct (w, h) shape against every anchor
    shape. Anchor strings only see distinct widths and distinct heights, each
    compared against every term of the progression.
    """
    shapes = list(dict.fromkeys((b.w, b.h) for b in gts))
    widths = list(dict.fromkeys(w for w, _ in shapes))
    heights = list(dict.fromkeys(h for _, h in shapes))

    iou = _CountingIoU()
    refs = [Box(0.0, 0.0, w, h) for w, h in anchor_box_set.shapes()]
    for w, h in shapes:
        gt = Box(0.0, 0.0, w, h)
        for ref in refs:
            iou(gt, ref)

    counter = MatchCounter()
    for e in widths + heights:
        match_edge(e, strings, counter)

    n = max(len(widths), len(heights))
    return ComplexityProbe(n, len(widths) + len(heights), len(shapes), iou.calls, counter.evaluations)


def fit_exponent(ns: Sequence[float], counts: Sequence[float]) -> float:
    """Slope of log(count) against log(n)."""
    return float(np.polyfit(np.log(ns), np.log(counts), 1)[0])
