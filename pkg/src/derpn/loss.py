"""
Scale-sensitive loss over sampled anchor strings, plus the baseline RPN loss.

Every term is averaged within its own scale before scales are summed. A scale
with many samples therefore weighs the same as one with few. Analytic
gradients with respect to each predicted probability and offset are returned
alongside the value.
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .codec import AnchorInstance, SegmentTarget
from .labeling import Label, LabeledBatch, LabeledBox

log = logging.getLogger(__name__)

EPS = 1e-12
DEFAULT_LAMBDA = 10.0


@dataclass(frozen=True)
class PredictedInstance:
    p: float
    t: SegmentTarget | tuple[float, float]
    anchor: AnchorInstance | None = None

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError(f"probability must lie in [0, 1], got {self.p}")

    @property
    def offsets(self) -> tuple[float, float]:
        if isinstance(self.t, SegmentTarget):
            return self.t.t_c, self.t.t_l
        return float(self.t[0]), float(self.t[1])


@dataclass
class LossReport:
    total: float
    cls_by_scale: dict[Hashable, float]
    reg_by_scale: dict[Hashable, float]
    lam: float
    n_cls: dict[Hashable, int]
    n_reg: dict[Hashable, int]
    empty: bool = False
    grad_p: np.ndarray | None = field(default=None, repr=False)
    grad_t: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "lambda": self.lam,
            "empty": self.empty,
            "scales": [
                {"scale": k, "cls": self.cls_by_scale[k], "reg": self.reg_by_scale.get(k, 0.0),
                 "n_cls": self.n_cls[k], "n_reg": self.n_reg.get(k, 0)}
                for k in sorted(self.cls_by_scale)
            ],
        }


def cross_entropy(p: float, label: int) -> float:
    """Binary cross-entropy; the log argument is floored at EPS so a confident miss stays finite."""
    if label:
        return -math.log(max(p, EPS))
    return -math.log(max(1.0 - p, EPS))


def cross_entropy_grad(p: float, label: int) -> float:
    if label:
        return -1.0 / p if p >= EPS else 0.0
    return 1.0 / (1.0 - p) if 1.0 - p >= EPS else 0.0


def smooth_l1(d: float) -> float:
    a = abs(d)
    return 0.5 * d * d if a < 1 else a - 0.5


def smooth_l1_grad(d: float) -> float:
    return d if abs(d) < 1 else math.copysign(1.0, d)


def _check_aligned(n_batch: int, n_preds: int) -> None:
    if n_batch != n_preds:
        raise ValueError(f"{n_preds} predictions for {n_batch} batch instances")


def scale_sensitive_loss(batch: LabeledBatch, preds: Sequence[PredictedInstance],
                         lam: float = DEFAULT_LAMBDA) -> LossReport:
    """Per-scale mean cross-entropy plus lam times per-scale mean smooth-L1.

    Classification averages over every sampled instance of a scale; regression
    averages over that scale's aligned positives only. Observed positives
    count toward classification alone. A scale without aligned positives adds
    no regression term.
    """
    instances = batch.instances
    _check_aligned(len(instances), len(preds))
    n = len(instances)
    grad_p, grad_t = np.zeros(n), np.zeros((n, 2))
    cls_idx: dict[int, list[int]] = defaultdict(list)
    reg_idx: dict[int, list[int]] = defaultdict(list)
    for i, inst in enumerate(instances):
        if inst.label is Label.IGNORE:
            continue
        cls_idx[inst.anchor.scale_index].append(i)
        if inst.is_aligned_positive:
            reg_idx[inst.anchor.scale_index].append(i)

    if not cls_idx:
        log.warning("scale-sensitive loss evaluated on an empty batch")
        return LossReport(0.0, {}, {}, lam, {}, {}, empty=True, grad_p=grad_p, grad_t=grad_t)

    cls_by_scale, reg_by_scale = {}, {}
    for j in sorted(cls_idx):
        idx = cls_idx[j]
        total = 0.0
        for i in idx:
            y = 1 if instances[i].label is Label.POSITIVE else 0
            total += cross_entropy(preds[i].p, y)
            grad_p[i] = cross_entropy_grad(preds[i].p, y) / len(idx)
        cls_by_scale[j] = total / len(idx)

        idx = reg_idx.get(j, [])
        total = 0.0
        for i in idx:
            target = instances[i].target
            for c, (pred, true) in enumerate(zip(preds[i].offsets, (target.t_c, target.t_l))):
                d = pred - true
                total += smooth_l1(d)
                grad_t[i, c] = lam * smooth_l1_grad(d) / len(idx)
        reg_by_scale[j] = total / len(idx) if idx else 0.0

    total = sum(cls_by_scale.values()) + lam * sum(reg_by_scale.values())
    return LossReport(total, cls_by_scale, reg_by_scale, lam,
                      {j: len(v) for j, v in cls_idx.items()},
                      {j: len(reg_idx.get(j, [])) for j in cls_idx},
                      grad_p=grad_p, grad_t=grad_t)


def rpn_loss(labeled: Sequence[LabeledBox], predictions: Sequence[tuple[float, Sequence[float]]],
             lambda_rpn: float = 1.0, groups: Sequence[Hashable] | None = None) -> LossReport:
    """Baseline loss: one global batch, both terms normalized by the batch size.

    ``predictions`` are (p, 4-vector offsets) per labeled box. ``groups``
    optionally tags each instance (say, by object size) so the report shows
    how much each group contributes; the normalization stays global.
    """
    _check_aligned(len(labeled), len(predictions))
    groups = list(groups) if groups is not None else [0] * len(labeled)
    used = [i for i, b in enumerate(labeled) if b.label is not Label.IGNORE]
    if not used:
        log.warning("RPN loss evaluated on an empty batch")
        return LossReport(0.0, {}, {}, lambda_rpn, {}, {}, empty=True)
    m = len(used)
    cls_by, reg_by = defaultdict(float), defaultdict(float)
    n_cls, n_reg = defaultdict(int), defaultdict(int)
    for i in used:
        g = groups[i]
        p, t = predictions[i]
        y = 1 if labeled[i].label is Label.POSITIVE else 0
        cls_by[g] += cross_entropy(float(p), y) / m
        n_cls[g] += 1
        if y:
            reg_by[g] += sum(smooth_l1(float(a) - b) for a, b in zip(t, labeled[i].target)) / m
            n_reg[g] += 1
    for g in cls_by:
        reg_by[g] += 0.0
    total = sum(cls_by.values()) + lambda_rpn * sum(reg_by.values())
    return LossReport(total, dict(cls_by), dict(reg_by), lambda_rpn, dict(n_cls), dict(n_reg))
