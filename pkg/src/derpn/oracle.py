"""
Synthetic stand-ins for a trained proposal network.

The perfect oracle writes the exact regression target of every aligned,
well-matched anchor string and a fixed probability elsewhere. The noisy
oracle perturbs those targets with Gaussian noise and replaces a fraction of
probabilities with uniform draws.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .anchors import AnchorStringSet, default_strings, in_coverage, match_edge
from .codec import DEFAULT_STRIDE, AnchorInstance, encode_boxes, encode_segment
from .errors import ValidationError
from .geometry import Axis, Box, Segment, boxes_to_array
from .maps import PredictionMaps

log = logging.getLogger(__name__)

MODES = ("perfect", "noisy")


@dataclass(frozen=True)
class OracleConfig:
    mode: str = "perfect"
    sigma_t: float = 0.0
    p_flip: float = 0.0
    p_pos: float = 1.0
    p_neg: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"oracle mode must be one of {MODES}, got {self.mode!r}")
        if not self.sigma_t >= 0:
            raise ValidationError("sigma_t must be >= 0")
        for name in ("p_flip", "p_pos", "p_neg"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValidationError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, Any]) -> "OracleConfig":
        unknown = set(cfg) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown oracle keys: {sorted(unknown)}")
        return cls(**cfg)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OracleReport:
    skipped_centers: list[int] = field(default_factory=list)
    skipped_edges: list[tuple[int, str]] = field(default_factory=list)
    collisions: int = 0


def _as_boxes(gts) -> list[Box]:
    return [g.box if hasattr(g, "box") else g for g in gts]


def build_perfect_maps(gts: Sequence, strings: AnchorStringSet | None = None,
                       map_shape: tuple[int, int] = (1, 1), stride: float = DEFAULT_STRIDE,
                       p_pos: float = 1.0, p_neg: float = 0.0, image_size=None):
    """Perfect maps plus the positive masks (width, height) and a report."""
    strings = strings or default_strings()
    rows, cols = map_shape
    maps = PredictionMaps.zeros(rows, cols, strings, stride, image_size, fill=p_neg)
    pos = {Axis.WIDTH: np.zeros(maps.cls_w.shape, bool), Axis.HEIGHT: np.zeros(maps.cls_h.shape, bool)}
    report = OracleReport()
    for j, box in enumerate(_as_boxes(gts)):
        r, c = math.floor(box.cy / stride), math.floor(box.cx / stride)
        if not (0 <= r < rows and 0 <= c < cols):
            report.skipped_centers.append(j)
            continue
        for axis, center, edge, cls, reg in (
                (Axis.WIDTH, box.cx, box.w, maps.cls_w, maps.reg_w),
                (Axis.HEIGHT, box.cy, box.h, maps.cls_h, maps.reg_h)):
            if not in_coverage(edge, strings):
                report.skipped_edges.append((j, axis.value))
                continue
            for k in match_edge(edge, strings):
                t = encode_segment(Segment(center, edge, axis), AnchorInstance.at(r, c, k, axis, strings, stride))
                if pos[axis][r, c, k - 1]:
                    report.collisions += 1
                pos[axis][r, c, k - 1] = True
                cls[r, c, k - 1] = p_pos
                reg[r, c, k - 1] = (t.t_c, t.t_l)
    if report.skipped_centers or report.skipped_edges:
        log.info("oracle skipped %d centers and %d edges", len(report.skipped_centers), len(report.skipped_edges))
    return maps, pos[Axis.WIDTH], pos[Axis.HEIGHT], report


def perfect_maps(gts: Sequence, strings: AnchorStringSet | None = None,
                 map_shape: tuple[int, int] = (1, 1), stride: float = DEFAULT_STRIDE,
                 p_pos: float = 1.0, p_neg: float = 0.0, image_size=None) -> PredictionMaps:
    return build_perfect_maps(gts, strings, map_shape, stride, p_pos, p_neg, image_size)[0]


def _perturb(cls: np.ndarray, reg: np.ndarray, pos: np.ndarray, cfg: OracleConfig,
             rng_t: np.random.Generator, rng_p: np.random.Generator) -> None:
    # draw regardless of sigma so every sigma sees the same standard normals
    z = rng_t.standard_normal((int(pos.sum()), 2))
    if cfg.sigma_t > 0:
        reg[pos] += cfg.sigma_t * z
    flip = rng_p.random(cls.shape) < cfg.p_flip
    uniform = rng_p.random(cls.shape)
    cls[flip] = uniform[flip]


def noisy_maps(gts: Sequence, strings: AnchorStringSet | None = None,
               map_shape: tuple[int, int] = (1, 1), stride: float = DEFAULT_STRIDE,
               cfg: OracleConfig = OracleConfig(mode="noisy"), image_size=None) -> PredictionMaps:
    maps, pos_w, pos_h, _ = build_perfect_maps(gts, strings, map_shape, stride, cfg.p_pos, cfg.p_neg, image_size)
    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(4)
    rngs = [np.random.default_rng(s) for s in seeds]
    _perturb(maps.cls_w, maps.reg_w, pos_w, cfg, rngs[0], rngs[1])
    _perturb(maps.cls_h, maps.reg_h, pos_h, cfg, rngs[2], rngs[3])
    return maps


def oracle_maps(gts: Sequence, strings: AnchorStringSet | None, map_shape, stride: float,
                cfg: OracleConfig, image_size=None) -> PredictionMaps:
    if cfg.mode == "perfect":
        return perfect_maps(gts, strings, map_shape, stride, cfg.p_pos, cfg.p_neg, image_size)
    return noisy_maps(gts, strings, map_shape, stride, cfg, image_size)


def rpn_oracle(gts: Sequence, anchors: np.ndarray, cfg: OracleConfig = OracleConfig()):
    """Anchor-box analogue of the oracle: (scores, decoded center-form boxes).

    Positives follow the baseline IoU rule and regress exactly onto their gt
    (plus noise in noisy mode); everything else scores ``p_neg`` with zero offsets.
    """
    from .codec import decode_boxes
    from .labeling import assign_rpn_arrays

    anchors = np.asarray(anchors, dtype=float).reshape(-1, 4)
    gt_arr = boxes_to_array(_as_boxes(gts))
    labels, matched = assign_rpn_arrays(gt_arr, anchors)
    pos = labels == 1
    scores = np.full(len(anchors), cfg.p_neg)
    scores[pos] = cfg.p_pos
    deltas = np.zeros((len(anchors), 4))
    if pos.any():
        deltas[pos] = encode_boxes(gt_arr[matched[pos]], anchors[pos])
    if cfg.mode == "noisy":
        seeds = np.random.SeedSequence(cfg.rng_seed).spawn(2)
        rng_t, rng_p = (np.random.default_rng(s) for s in seeds)
        z = rng_t.standard_normal((int(pos.sum()), 4))
        if cfg.sigma_t > 0:
            deltas[pos] += cfg.sigma_t * z
        flip = rng_p.random(len(anchors)) < cfg.p_flip
        uniform = rng_p.random(len(anchors))
        scores[flip] = uniform[flip]
    return scores, decode_boxes(deltas, anchors)
