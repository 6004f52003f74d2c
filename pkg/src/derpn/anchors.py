"""
Anchor strings (1-D length references) and classical anchor boxes.

An anchor-string set is a geometric progression of lengths shared by the
width and height axes. An edge is matched to the log-closest term, plus both
neighbours of any term whose transition interval contains the edge. Indices
are 1-based everywhere outside this module's internals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from .errors import ValidationError
from .geometry import Axis, Box, iou_2d


@dataclass(frozen=True)
class AnchorStringSet:
    terms: tuple[float, ...]
    q: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(float(t) for t in self.terms))
        if len(self.terms) == 0:
            raise ValidationError("anchor string set needs at least one term")
        if not self.q > 1:
            raise ValidationError(f"common ratio q must exceed 1, got {self.q}")
        if not 0 <= self.beta < self.q - math.sqrt(self.q):
            raise ValidationError(
                f"beta must lie in [0, q - sqrt(q)) = [0, {self.q - math.sqrt(self.q):.6f}), got {self.beta}")
        if self.terms[0] <= 0:
            raise ValidationError("anchor string terms must be positive")
        for lo, hi in zip(self.terms, self.terms[1:]):
            if abs(hi / lo - self.q) > 1e-9:
                raise ValidationError(f"terms are not a geometric progression with ratio {self.q}: {lo} -> {hi}")

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @classmethod
    def progression(cls, first: float, q: float, n_terms: int, beta: float) -> "AnchorStringSet":
        return cls(tuple(first * q ** i for i in range(n_terms)), q, beta)

    def term(self, index: int) -> float:
        """Term for a 1-based index."""
        return self.terms[index - 1]

    def to_dict(self) -> dict:
        return {"terms": list(self.terms), "q": self.q, "beta": self.beta}


@dataclass(frozen=True)
class AnchorBoxSet:
    scales: tuple[float, ...]
    ratios: tuple[float, ...]
    base: float = 16.0
    stride: float = 16.0

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        values = (*self.scales, *self.ratios, self.base, self.stride)
        if not self.scales or not self.ratios or any(not v > 0 for v in values):
            raise ValidationError("anchor box scales, ratios, base and stride must be non-empty and positive")

    @property
    def per_cell(self) -> int:
        return len(self.scales) * len(self.ratios)

    def shapes(self) -> np.ndarray:
        """(per_cell, 2) array of (w, h); area (scale*base)^2 and w/h = ratio."""
        out = []
        for scale in self.scales:
            side = scale * self.base
            for ratio in self.ratios:
                r = math.sqrt(ratio)
                out.append((side * r, side / r))
        return np.array(out, dtype=float)

    def to_dict(self) -> dict:
        return {"scales": list(self.scales), "ratios": list(self.ratios),
                "base": self.base, "stride": self.stride}


@dataclass(frozen=True)
class MatchResult:
    object_index: int
    axis: Axis
    matched_indices: tuple[int, ...]
    out_of_coverage: bool = False


@dataclass
class MatchCounter:
    """Tallies per-term edge evaluations made by ``match_edge``."""
    evaluations: int = 0
    calls: int = 0


def default_strings() -> AnchorStringSet:
    return AnchorStringSet((16, 32, 64, 128, 256, 512, 1024), q=2.0, beta=0.1)


def voc_boxes() -> AnchorBoxSet:
    return AnchorBoxSet(scales=(8, 16, 32), ratios=(0.5, 1, 2), base=16, stride=16)


def coco_boxes() -> AnchorBoxSet:
    return AnchorBoxSet(scales=(4, 8, 16, 32), ratios=(0.5, 1, 2), base=16, stride=16)


PRESETS = {
    "default-strings": default_strings,
    "voc-type": voc_boxes,
    "coco-type": coco_boxes,
}


def match_edge(e: float, strings: AnchorStringSet, counter: MatchCounter | None = None) -> tuple[int, ...]:
    """1-based indices of anchor strings matched to edge length ``e``.

    Union of the log-closest term (first one on exact ties) and {i, i+1} for
    every i with |e/a_i - sqrt(q)| <= beta. An i+1 past the last term is
    dropped. Edges outside the coverage range still get their closest term.
    """
    if not e > 0:
        raise ValueError(f"edge must be positive, got {e}")
    log_e = math.log(e)
    root_q = math.sqrt(strings.q)
    n = strings.n_terms
    best, best_dist = 0, math.inf
    matched = set()
    for i, a in enumerate(strings.terms):
        dist = abs(log_e - math.log(a))
        if dist < best_dist:
            best, best_dist = i, dist
        if abs(e / a - root_q) <= strings.beta:
            matched.add(i + 1)
            if i + 1 < n:
                matched.add(i + 2)
    matched.add(best + 1)
    if counter is not None:
        counter.calls += 1
        counter.evaluations += n
    return tuple(sorted(matched))


def match_edges(edges: np.ndarray, strings: AnchorStringSet) -> np.ndarray:
    """Vectorized ``match_edge``: boolean (len(edges), N) membership matrix."""
    edges = np.asarray(edges, dtype=float).reshape(-1)
    if np.any(~(edges > 0)):
        raise ValueError("edges must be positive")
    terms = np.asarray(strings.terms)
    log_terms = np.array([math.log(a) for a in strings.terms])
    dist = np.abs(np.log(edges)[:, None] - log_terms[None, :])
    out = np.zeros(dist.shape, dtype=bool)
    out[np.arange(len(edges)), np.argmin(dist, axis=1)] = True
    trans = np.abs(edges[:, None] / terms[None, :] - math.sqrt(strings.q)) <= strings.beta
    out |= trans
    out[:, 1:] |= trans[:, :-1]
    return out


def coverage_range(strings: AnchorStringSet) -> tuple[float, float]:
    root_q = math.sqrt(strings.q)
    return strings.terms[0] / root_q, strings.terms[-1] * root_q


def in_coverage(e: float, strings: AnchorStringSet) -> bool:
    lo, hi = coverage_range(strings)
    return lo <= e <= hi


def match(e: float, strings: AnchorStringSet, axis: Axis | str, object_index: int = 0) -> MatchResult:
    return MatchResult(object_index, Axis(axis), match_edge(e, strings),
                       out_of_coverage=not in_coverage(e, strings))


def rpn_anchor_grid(spec: AnchorBoxSet, map_h: int, map_w: int) -> list[Box]:
    """Anchor boxes for every cell, row-major, shapes in ``spec.shapes()`` order."""
    arr = rpn_anchor_array(spec, map_h, map_w)
    return [Box(*row) for row in arr]


def rpn_anchor_array(spec: AnchorBoxSet, map_h: int, map_w: int) -> np.ndarray:
    """(map_h * map_w * per_cell, 4) center-form anchors."""
    if map_h < 1 or map_w < 1:
        raise ValueError("feature map dimensions must be >= 1")
    shapes = spec.shapes()
    ys = (np.arange(map_h) + 0.5) * spec.stride
    xs = (np.arange(map_w) + 0.5) * spec.stride
    cy, cx = np.meshgrid(ys, xs, indexing="ij")
    k = len(shapes)
    out = np.empty((map_h, map_w, k, 4))
    out[..., 0] = cx[..., None]
    out[..., 1] = cy[..., None]
    out[..., 2] = shapes[:, 0]
    out[..., 3] = shapes[:, 1]
    return out.reshape(-1, 4)


def best_match_iou(gt: Box, anchors: Sequence[Box]) -> tuple[float, int]:
    """Highest IoU over anchors and its index; the first index wins ties."""
    if len(anchors) == 0:
        raise ValueError("anchors must be non-empty")
    best, best_i = -1.0, -1
    for i, a in enumerate(anchors):
        v = iou_2d(gt, a)
        if v > best:
            best, best_i = v, i
    return best, best_i


def anchors_from_mapping(cfg: Mapping[str, Any]) -> AnchorStringSet | AnchorBoxSet:
    """Build an anchor configuration from a mapping with a ``preset`` key or explicit fields."""
    cfg = dict(cfg)
    if "preset" in cfg:
        name = cfg.pop("preset")
        if cfg:
            raise ValidationError(f"preset anchors take no other keys, got {sorted(cfg)}")
        if name not in PRESETS:
            raise ValidationError(f"unknown anchor preset {name!r}; choose from {sorted(PRESETS)}")
        return PRESETS[name]()
    string_keys, box_keys = {"terms", "q", "beta"}, {"scales", "ratios", "base", "stride"}
    keys = set(cfg)
    try:
        if keys == string_keys:
            return AnchorStringSet(tuple(cfg["terms"]), float(cfg["q"]), float(cfg["beta"]))
        if {"scales", "ratios"} <= keys <= box_keys:
            return AnchorBoxSet(**{k: (tuple(v) if isinstance(v, list) else float(v)) for k, v in cfg.items()})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad anchor configuration: {exc}") from exc
    raise ValidationError(
        f"anchor config keys {sorted(keys)} match neither {sorted(string_keys)} nor {sorted(box_keys)}")


def load_anchors(ref: str | Path) -> AnchorStringSet | AnchorBoxSet:
    """Resolve a preset name or a YAML/JSON config file."""
    if str(ref) in PRESETS:
        return PRESETS[str(ref)]()
    path = Path(ref)
    if not path.exists():
        raise ValidationError(f"{ref!r} is neither an anchor preset ({', '.join(PRESETS)}) nor a file")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ValidationError(f"cannot read anchor config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: anchor config must be a mapping")
    return anchors_from_mapping(data)


def save_anchors(anchors: AnchorStringSet | AnchorBoxSet, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(anchors.to_dict(), sort_keys=False), encoding="utf-8")
