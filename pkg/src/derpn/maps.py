"""
Per-cell anchor-string predictions: the hand-off between a predictor (a
network, or the oracle here) and the proposal machinery.

Arrays are laid out (H, W, N) for probabilities and (H, W, N, 2) for the
(t_c, t_l) regression pairs, one set per axis. Only the matched-class
probability is stored, so each cell carries 2N probabilities standing in for
the 2x2N two-class scores, and 2x2N regression values.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .anchors import AnchorStringSet, default_strings
from .errors import ValidationError

MAGIC = b"DRPNMAPS"
LAYOUT = b"HWN2"
_HEADER = struct.Struct("<8sIIIId4s")


@dataclass
class PredictionMaps:
    cls_w: np.ndarray
    cls_h: np.ndarray
    reg_w: np.ndarray
    reg_h: np.ndarray
    stride: float = 16.0
    terms: tuple[float, ...] = default_strings().terms
    image_size: tuple[float, float] | None = None  # (width, height) in pixels

    def __post_init__(self):
        self.cls_w = np.asarray(self.cls_w, dtype=float)
        self.cls_h = np.asarray(self.cls_h, dtype=float)
        self.reg_w = np.asarray(self.reg_w, dtype=float)
        self.reg_h = np.asarray(self.reg_h, dtype=float)
        self.terms = tuple(float(t) for t in self.terms)
        self.validate()

    @classmethod
    def zeros(cls, height: int, width: int, strings: AnchorStringSet | None = None,
              stride: float = 16.0, image_size=None, fill: float = 0.0) -> "PredictionMaps":
        strings = strings or default_strings()
        n = strings.n_terms
        return cls(np.full((height, width, n), fill), np.full((height, width, n), fill),
                   np.zeros((height, width, n, 2)), np.zeros((height, width, n, 2)),
                   stride, strings.terms, image_size)

    @property
    def height(self) -> int:
        return self.cls_w.shape[0]

    @property
    def width(self) -> int:
        return self.cls_w.shape[1]

    @property
    def n_strings(self) -> int:
        return self.cls_w.shape[2]

    @property
    def image_extent(self) -> tuple[float, float]:
        if self.image_size is not None:
            return float(self.image_size[0]), float(self.image_size[1])
        return self.width * self.stride, self.height * self.stride

    def validate(self) -> None:
        if self.cls_w.ndim != 3:
            raise ValidationError(f"cls_w must be (H, W, N), got shape {self.cls_w.shape}")
        h, w, n = self.cls_w.shape
        if self.cls_h.shape != (h, w, n):
            raise ValidationError(f"cls_h shape {self.cls_h.shape} != {(h, w, n)}")
        for name in ("reg_w", "reg_h"):
            if getattr(self, name).shape != (h, w, n, 2):
                raise ValidationError(f"{name} shape {getattr(self, name).shape} != {(h, w, n, 2)}")
        if len(self.terms) != n:
            raise ValidationError(f"{len(self.terms)} anchor string terms for {n} channels")
        for name in ("cls_w", "cls_h"):
            p = getattr(self, name)
            if np.any(~((p >= 0) & (p <= 1))):
                raise ValidationError(f"{name} probabilities must lie in [0, 1]")
        if not (np.all(np.isfinite(self.reg_w)) and np.all(np.isfinite(self.reg_h))):
            raise ValidationError("regression maps must be finite")
        if not self.stride > 0:
            raise ValidationError("stride must be positive")

    def channels_per_cell(self) -> tuple[int, int]:
        """(classification scores, regression values) per location, two-class convention."""
        n = self.n_strings
        return 2 * 2 * n, self.reg_w.shape[-1] * n + self.reg_h.shape[-1] * n

    def equals(self, other: "PredictionMaps") -> bool:
        return (self.stride == other.stride and self.terms == other.terms
                and self.image_size == other.image_size
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("cls_w", "cls_h", "reg_w", "reg_h")))


def map_shape_for(image_width: float, image_height: float, stride: float) -> tuple[int, int]:
    """(rows, cols) of the feature map covering an image."""
    return max(1, math.ceil(image_height / stride)), max(1, math.ceil(image_width / stride))


def save_maps(maps: PredictionMaps, path: str | Path) -> None:
    """Flat little-endian float64 tensor file with a small header.

    Header: magic, H, W, N, has_image_size, stride, layout tag; then N terms,
    optional (image_width, image_height), then cls_w, cls_h, reg_w, reg_h.
    """
    has_size = maps.image_size is not None
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, maps.height, maps.width, maps.n_strings, int(has_size),
                              float(maps.stride), LAYOUT))
        fh.write(np.asarray(maps.terms, dtype="<f8").tobytes())
        if has_size:
            fh.write(np.asarray(maps.image_size, dtype="<f8").tobytes())
        for arr in (maps.cls_w, maps.cls_h, maps.reg_w, maps.reg_h):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_maps(path: str | Path) -> PredictionMaps:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValidationError(f"{path}: truncated header")
    magic, h, w, n, has_size, stride, layout = _HEADER.unpack_from(data)
    if magic != MAGIC or layout != LAYOUT:
        raise ValidationError(f"{path}: not a prediction map file (magic {magic!r}, layout {layout!r})")
    offset = _HEADER.size

    def take(count):
        nonlocal offset
        end = offset + 8 * count
        if end > len(data):
            raise ValidationError(f"{path}: truncated payload")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(float)
        offset = end
        return arr

    terms = tuple(take(n))
    image_size = tuple(take(2)) if has_size else None
    cls_w = take(h * w * n).reshape(h, w, n)
    cls_h = take(h * w * n).reshape(h, w, n)
    reg_w = take(h * w * n * 2).reshape(h, w, n, 2)
    reg_h = take(h * w * n * 2).reshape(h, w, n, 2)
    if offset != len(data):
        raise ValidationError(f"{path}: {len(data) - offset} trailing bytes")
    return PredictionMaps(cls_w, cls_h, reg_w, reg_h, stride, terms, image_size)


def maps_to_text(maps: PredictionMaps) -> str:
    """Verbose JSON form listing every non-default entry; meant for small cases."""
    entries = []
    for axis, cls, reg in (("width", maps.cls_w, maps.reg_w), ("height", maps.cls_h, maps.reg_h)):
        for r, c, k in zip(*np.nonzero((cls != 0) | np.any(reg != 0, axis=-1))):
            entries.append({"axis": axis, "row": int(r), "col": int(c), "scale_index": int(k) + 1,
                            "p": float(cls[r, c, k]), "t_c": float(reg[r, c, k, 0]),
                            "t_l": float(reg[r, c, k, 1])})
    doc = {"height": maps.height, "width": maps.width, "n_strings": maps.n_strings,
           "stride": maps.stride, "terms": list(maps.terms),
           "image_size": list(maps.image_size) if maps.image_size is not None else None,
           "entries": entries}
    return json.dumps(doc, indent=1)


def maps_from_text(text: str) -> PredictionMaps:
    doc = json.loads(text)
    h, w, n = doc["height"], doc["width"], doc["n_strings"]
    cls = {"width": np.zeros((h, w, n)), "height": np.zeros((h, w, n))}
    reg = {"width": np.zeros((h, w, n, 2)), "height": np.zeros((h, w, n, 2))}
    for e in doc["entries"]:
        idx = (e["row"], e["col"], e["scale_index"] - 1)
        cls[e["axis"]][idx] = e["p"]
        reg[e["axis"]][idx] = (e["t_c"], e["t_l"])
    size = tuple(doc["image_size"]) if doc.get("image_size") is not None else None
    return PredictionMaps(cls["width"], cls["height"], reg["width"], reg["height"],
                          doc["stride"], tuple(doc["terms"]), size)
