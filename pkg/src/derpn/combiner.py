"""
Pixel-wise recombination of width and height segments into box proposals.

Width segments are ranked by probability; each of the top ``top_n_w`` is
paired with the ``top_k`` best height segments at the same cell. The same is
done with the roles swapped. The union is scored, clipped, suppressed with
NMS and truncated to ``top_m``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ValidationError
from .geometry import Axis, Box, ScoredBox, Segment, clip_corners, nms_indices, to_corners
from .maps import PredictionMaps

SCORE_FUNCTIONS = ("harmonic", "arithmetic")


@dataclass(frozen=True)
class CombinerConfig:
    top_n_w: int = 2000
    top_k: int = 3
    nms_iou: float = 0.7
    top_m: int = 300
    clip_to_image: bool = True
    score_fn: str = "harmonic"

    def __post_init__(self):
        for name in ("top_n_w", "top_k", "top_m"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if not 0 < self.nms_iou <= 1:
            raise ValidationError(f"nms_iou must be in (0, 1], got {self.nms_iou}")
        if self.score_fn not in SCORE_FUNCTIONS:
            raise ValidationError(f"score_fn must be one of {SCORE_FUNCTIONS}, got {self.score_fn!r}")

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, Any]) -> "CombinerConfig":
        unknown = set(cfg) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown combiner keys: {sorted(unknown)}")
        return cls(**cfg)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CombinedProposals:
    """Surviving proposals with the cell and string indices they were built from.

    ``members`` rows are (row, col, width scale_index, height scale_index),
    scale indices 1-based.
    """
    corners: np.ndarray
    scores: np.ndarray
    members: np.ndarray

    def __len__(self):
        return len(self.scores)

    def to_scored_boxes(self) -> list[ScoredBox]:
        return [ScoredBox(Box.from_corners(*c), float(s)) for c, s in zip(self.corners, self.scores)]


def harmonic_score(p_w: float, p_h: float) -> float:
    if not (0 <= p_w <= 1 and 0 <= p_h <= 1):
        raise ValueError(f"probabilities must lie in [0, 1], got {p_w}, {p_h}")
    return float(harmonic_scores(np.array([p_w]), np.array([p_h]))[0])


def harmonic_scores(p_w: np.ndarray, p_h: np.ndarray) -> np.ndarray:
    p_w = np.asarray(p_w, dtype=float)
    p_h = np.asarray(p_h, dtype=float)
    out = np.zeros(np.broadcast(p_w, p_h).shape)
    nz = (p_w > 0) & (p_h > 0)
    pw, ph = np.broadcast_to(p_w, out.shape)[nz], np.broadcast_to(p_h, out.shape)[nz]
    hm = 2.0 / (1.0 / pw + 1.0 / ph)
    # rounding can step an ulp outside the bounds the harmonic mean satisfies exactly
    lo = np.minimum(pw, ph)
    hi = np.minimum.reduce([np.maximum(pw, ph), (pw + ph) / 2, 2 * lo])
    out[nz] = np.clip(hm, lo, hi)
    return out


def arithmetic_scores(p_w: np.ndarray, p_h: np.ndarray) -> np.ndarray:
    return (np.asarray(p_w, dtype=float) + np.asarray(p_h, dtype=float)) / 2


def compose_box(w_seg: Segment, h_seg: Segment) -> Box:
    if w_seg.axis is not Axis.WIDTH or h_seg.axis is not Axis.HEIGHT:
        raise ValueError("compose_box needs a width segment and a height segment")
    return Box(w_seg.c, h_seg.c, w_seg.l, h_seg.l)


def decode_maps(maps: PredictionMaps) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Decode every anchor string: returns (x, w) for widths and (y, h) for heights, each (H, W, N)."""
    terms = np.asarray(maps.terms)
    xs = (np.arange(maps.width) + 0.5) * maps.stride
    ys = (np.arange(maps.height) + 0.5) * maps.stride
    x = xs[None, :, None] + terms * maps.reg_w[..., 0]
    w = terms * np.exp(maps.reg_w[..., 1])
    y = ys[:, None, None] + terms * maps.reg_h[..., 0]
    h = terms * np.exp(maps.reg_h[..., 1])
    return x, w, y, h


def _top_segments(p: np.ndarray, limit: int) -> np.ndarray:
    """Flat indices of the ``limit`` most probable non-zero entries.

    Ties are broken by (scale_index, row, col).
    """
    rows, cols, scales = np.nonzero(p > 0)
    if rows.size == 0:
        return np.empty((0, 3), dtype=np.intp)
    order = np.lexsort((cols, rows, scales, -p[rows, cols, scales]))[:limit]
    return np.stack([rows[order], cols[order], scales[order]], axis=1)


def _top_k_per_cell(p: np.ndarray, k: int) -> np.ndarray:
    """(H, W, k) channel indices sorted by descending probability, lower scale first on ties."""
    return np.argsort(-p, axis=-1, kind="stable")[..., :k]


def _pair(sel: np.ndarray, p_other: np.ndarray, k: int):
    """Pair each selected segment with the top-k other-axis segments at its cell."""
    if sel.size == 0:
        return np.empty((0, 4), dtype=np.intp)
    topk = _top_k_per_cell(p_other, k)[sel[:, 0], sel[:, 1]]  # (S, k)
    s_idx = np.repeat(np.arange(len(sel)), topk.shape[1])
    other = topk.reshape(-1)
    rows, cols = sel[s_idx, 0], sel[s_idx, 1]
    valid = p_other[rows, cols, other] > 0
    return np.stack([rows, cols, sel[s_idx, 2], other], axis=1)[valid]


def combine_arrays(maps: PredictionMaps, cfg: CombinerConfig = CombinerConfig()) -> CombinedProposals:
    x, w, y, h = decode_maps(maps)
    sel_w = _top_segments(maps.cls_w, cfg.top_n_w)
    sel_h = _top_segments(maps.cls_h, cfg.top_n_w)
    # both halves as (row, col, width channel, height channel)
    b_w = _pair(sel_w, maps.cls_h, cfg.top_k)
    b_h = _pair(sel_h, maps.cls_w, cfg.top_k)[:, [0, 1, 3, 2]]
    pairs = np.concatenate([b_w, b_h], axis=0)
    if len(pairs) == 0:
        return CombinedProposals(np.empty((0, 4)), np.empty(0), np.empty((0, 4), dtype=np.intp))
    r, c, kw, kh = pairs.T
    centers = np.stack([x[r, c, kw], y[r, c, kh], w[r, c, kw], h[r, c, kh]], axis=1)
    score_fn = harmonic_scores if cfg.score_fn == "harmonic" else arithmetic_scores
    scores = score_fn(maps.cls_w[r, c, kw], maps.cls_h[r, c, kh])
    corners = to_corners(centers)
    if cfg.clip_to_image:
        corners = clip_corners(corners, *maps.image_extent)
    keep = ((corners[:, 2] - corners[:, 0]) >= 1) & ((corners[:, 3] - corners[:, 1]) >= 1) & (scores > 0)
    corners, scores, pairs = corners[keep], scores[keep], pairs[keep]
    kept = nms_indices(corners, scores, cfg.nms_iou, max_keep=cfg.top_m)
    members = pairs[kept].copy()
    members[:, 2:] += 1
    return CombinedProposals(corners[kept], scores[kept], members)


def combine(preds: PredictionMaps, cfg: CombinerConfig = CombinerConfig()) -> list[ScoredBox]:
    return combine_arrays(preds, cfg).to_scored_boxes()


def rpn_proposals(scores: np.ndarray, boxes: np.ndarray, image_size: tuple[float, float],
                  cfg: CombinerConfig = CombinerConfig()) -> CombinedProposals:
    """Baseline RPN proposal step over already-decoded center-form boxes.

    Keeps the ``top_n_w`` highest non-zero scores, clips, drops boxes under one
    pixel, then NMS and ``top_m``. ``members`` holds the anchor index.
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    idx = np.nonzero(scores > 0)[0]
    idx = idx[np.argsort(-scores[idx], kind="stable")][:cfg.top_n_w]
    corners = to_corners(boxes[idx])
    if cfg.clip_to_image:
        corners = clip_corners(corners, *image_size)
    keep = ((corners[:, 2] - corners[:, 0]) >= 1) & ((corners[:, 3] - corners[:, 1]) >= 1)
    idx, corners = idx[keep], corners[keep]
    kept = nms_indices(corners, scores[idx], cfg.nms_iou, max_keep=cfg.top_m)
    return CombinedProposals(corners[kept], scores[idx][kept], idx[kept].reshape(-1, 1))
