"""
Annotation datasets: loading, saving, synthesis, and the line-delimited
record files the command line reads and writes.

COCO boxes arrive top-left (x, y, w, h) and are converted to center form
here, once; nothing downstream sees the COCO convention.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .anchors import coverage_range, default_strings
from .errors import ValidationError
from .geometry import Box, iou_2d

FORMATS = ("coco_json", "simple_jsonl")


@dataclass(frozen=True)
class ImageInfo:
    id: Any
    width: float
    height: float


@dataclass(frozen=True)
class Annotation:
    image_id: Any
    box: Box


@dataclass
class Dataset:
    images: list[ImageInfo] = field(default_factory=list)
    annotations: list[Annotation] = field(default_factory=list)

    def __post_init__(self):
        ids = [im.id for im in self.images]
        dupes = sorted(str(i) for i, n in Counter(ids).items() if n > 1)
        if dupes:
            raise ValidationError(f"duplicate image ids: {', '.join(dupes)}")
        known = set(ids)
        dangling = sorted({str(a.image_id) for a in self.annotations if a.image_id not in known})
        if dangling:
            raise ValidationError(f"annotations reference unknown image ids: {', '.join(dangling)}")

    def boxes_by_image(self) -> dict[Any, list[Box]]:
        out: dict[Any, list[Box]] = {im.id: [] for im in self.images}
        for a in self.annotations:
            out[a.image_id].append(a.box)
        return out

    @property
    def n_boxes(self) -> int:
        return len(self.annotations)


def _clip_to_image(box: Box, im: ImageInfo, where: str) -> Box:
    x1, y1, x2, y2 = box.corners
    if x1 >= 0 and y1 >= 0 and x2 <= im.width and y2 <= im.height:
        return box
    x1, x2 = max(0.0, x1), min(float(im.width), x2)
    y1, y2 = max(0.0, y1), min(float(im.height), y2)
    if not (x2 > x1 and y2 > y1):
        raise ValidationError(f"{where}: box lies outside image {im.id!r}")
    return Box.from_corners(x1, y1, x2, y2)


def _make_box(values: Sequence, where: str, top_left: bool) -> Box:
    try:
        x, y, w, h = (float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: expected four numbers, got {values!r}") from exc
    if not all(math.isfinite(v) for v in (x, y, w, h)):
        raise ValidationError(f"{where}: non-finite coordinates")
    if not (w > 0 and h > 0):
        raise ValidationError(f"{where}: width and height must be positive, got w={w}, h={h}")
    return Box.from_top_left(x, y, w, h) if top_left else Box(x, y, w, h)


def _image(rec: Mapping, where: str) -> ImageInfo:
    try:
        im = ImageInfo(rec["id"], float(rec["width"]), float(rec["height"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: image record needs id, width, height ({exc})") from exc
    if not (im.width > 0 and im.height > 0):
        raise ValidationError(f"{where}: image size must be positive")
    return im


def _assemble(images: list[ImageInfo], raw: list[tuple[Any, Box, str]]) -> Dataset:
    by_id = {im.id: im for im in images}
    dangling = sorted({str(i) for i, _, _ in raw if i not in by_id})
    if dangling:
        raise ValidationError(f"annotations reference unknown image ids: {', '.join(dangling)}")
    anns = [Annotation(i, _clip_to_image(b, by_id[i], where)) for i, b, where in raw]
    return Dataset(images, anns)


def load_annotations(path: str | Path, format: str | None = None) -> Dataset:
    """Read a COCO-style JSON subset or a simple JSON-lines file.

    JSON-lines files hold image records ``{"id", "width", "height"}`` and
    annotation records ``{"image_id", "cx", "cy", "w", "h"}``, one per line.
    """
    path = Path(path)
    if format is None:
        format = "simple_jsonl" if path.suffix == ".jsonl" else "coco_json"
    if format not in FORMATS:
        raise ValidationError(f"unknown annotation format {format!r}; choose from {FORMATS}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    if format == "coco_json":
        return _load_coco(text, path)
    return _load_jsonl(text, path)


def _load_coco(text: str, path: Path) -> Dataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise ValidationError(f"{path}: expected an object with an 'images' array")
    images = [_image(rec, f"{path}: images[{i}]") for i, rec in enumerate(doc["images"])]
    raw = []
    for i, rec in enumerate(doc.get("annotations", [])):
        where = f"{path}: annotations[{i}]"
        if not isinstance(rec, dict) or "image_id" not in rec or "bbox" not in rec:
            raise ValidationError(f"{where}: annotation needs image_id and bbox")
        raw.append((rec["image_id"], _make_box(rec["bbox"], where, top_left=True), where))
    return _assemble(images, raw)


def _load_jsonl(text: str, path: Path) -> Dataset:
    images, raw = [], []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{path}: line {n}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{where}: invalid JSON at column {exc.colno}: {exc.msg}") from exc
        if not isinstance(rec, dict):
            raise ValidationError(f"{where}: expected a JSON object")
        if "image_id" in rec:
            try:
                values = [rec[k] for k in ("cx", "cy", "w", "h")]
            except KeyError as exc:
                raise ValidationError(f"{where}: annotation record missing {exc}") from exc
            raw.append((rec["image_id"], _make_box(values, where, top_left=False), where))
        else:
            images.append(_image(rec, where))
    return _assemble(images, raw)


def _num(v: float):
    return int(v) if float(v).is_integer() else float(v)


def dumps_dataset(ds: Dataset, format: str = "coco_json") -> str:
    if format == "coco_json":
        doc = {
            "images": [{"id": im.id, "width": _num(im.width), "height": _num(im.height)} for im in ds.images],
            "annotations": [
                {"id": i + 1, "image_id": a.image_id,
                 "bbox": [a.box.cx - a.box.w / 2, a.box.cy - a.box.h / 2, a.box.w, a.box.h]}
                for i, a in enumerate(ds.annotations)
            ],
        }
        return json.dumps(doc, indent=1) + "\n"
    if format == "simple_jsonl":
        lines = [json.dumps({"id": im.id, "width": _num(im.width), "height": _num(im.height)})
                 for im in ds.images]
        lines += [json.dumps({"image_id": a.image_id, "cx": a.box.cx, "cy": a.box.cy, "w": a.box.w, "h": a.box.h})
                  for a in ds.annotations]
        return "\n".join(lines) + "\n"
    raise ValidationError(f"unknown annotation format {format!r}")


def save_dataset(ds: Dataset, path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    if format is None:
        format = "simple_jsonl" if path.suffix == ".jsonl" else "coco_json"
    path.write_text(dumps_dataset(ds, format), encoding="utf-8")


@dataclass(frozen=True)
class SynthSpec:
    """Distribution parameters for synthetic annotation sets.

    Edges are log-uniform in [edge_min, edge_max] (default: the default
    anchor strings' coverage range, capped by the image size). ``aspect_mode``
    draws a log-uniform aspect ratio up to ``max_aspect`` in either
    orientation. ``crossed_grid_n`` instead emits every combination of n
    widths and n heights, one centered box per image.
    """
    n_images: int = 10
    boxes_per_image: int = 10
    image_width: float = 1600.0
    image_height: float = 1600.0
    edge_min: float | None = None
    edge_max: float | None = None
    aspect_mode: bool = False
    max_aspect: float = 16.0
    distinct_cells: bool = True
    stride: float = 16.0
    max_gt_iou: float | None = 0.7
    crossed_grid_n: int | None = None
    max_attempts: int = 1000

    def __post_init__(self):
        if self.n_images < 0 or self.boxes_per_image < 0:
            raise ValidationError("counts must be non-negative")
        if not (self.image_width > 0 and self.image_height > 0):
            raise ValidationError("image size must be positive")
        lo, hi = self.edge_range()
        if not 0 < lo <= hi:
            raise ValidationError(f"empty edge range [{lo}, {hi}]")
        if self.max_aspect < 1:
            raise ValidationError("max_aspect must be >= 1")
        if self.crossed_grid_n is not None and self.crossed_grid_n < 1:
            raise ValidationError("crossed_grid_n must be >= 1")

    def edge_range(self) -> tuple[float, float]:
        lo, hi = coverage_range(default_strings())
        lo = lo if self.edge_min is None else self.edge_min
        hi = hi if self.edge_max is None else self.edge_max
        return lo, min(hi, self.image_width, self.image_height)

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, Any]) -> "SynthSpec":
        unknown = set(cfg) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown synth keys: {sorted(unknown)}")
        return cls(**cfg)

    def to_dict(self) -> dict:
        return asdict(self)


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def crossed_edges(n: int, lo: float, hi: float) -> list[float]:
    """n log-spaced edge lengths spanning [lo, hi]."""
    if n == 1:
        return [math.sqrt(lo * hi)]
    return [float(v) for v in np.geomspace(lo, hi, n)]


def synth_dataset(spec: SynthSpec = SynthSpec(), seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    lo, hi = spec.edge_range()
    W, H = spec.image_width, spec.image_height
    images, anns = [], []
    if spec.crossed_grid_n is not None:
        edges = crossed_edges(spec.crossed_grid_n, lo, hi)
        for w in edges:
            for h in edges:
                im = ImageInfo(len(images) + 1, W, H)
                images.append(im)
                anns.append(Annotation(im.id, Box(W / 2, H / 2, w, h)))
        return Dataset(images, anns)

    for i in range(spec.n_images):
        im = ImageInfo(i + 1, W, H)
        images.append(im)
        placed: list[Box] = []
        cells = set()
        for _ in range(spec.boxes_per_image):
            for _attempt in range(spec.max_attempts):
                if spec.aspect_mode:
                    long_edge = _log_uniform(rng, lo, hi)
                    aspect = _log_uniform(rng, 1.0, spec.max_aspect)
                    short_edge = max(lo, long_edge / aspect)
                    w, h = (long_edge, short_edge) if rng.random() < 0.5 else (short_edge, long_edge)
                else:
                    w, h = _log_uniform(rng, lo, hi), _log_uniform(rng, lo, hi)
                cx = rng.uniform(w / 2, W - w / 2)
                cy = rng.uniform(h / 2, H - h / 2)
                box = Box(cx, cy, w, h)
                cell = (math.floor(cy / spec.stride), math.floor(cx / spec.stride))
                if spec.distinct_cells and cell in cells:
                    continue
                if spec.max_gt_iou is not None and any(iou_2d(box, b) > spec.max_gt_iou for b in placed):
                    continue
                break
            else:
                raise ValidationError(
                    f"could not place box {len(placed) + 1} in image {im.id} after {spec.max_attempts} attempts")
            placed.append(box)
            cells.add(cell)
            anns.append(Annotation(im.id, box))
    return Dataset(images, anns)


# line-delimited records ---------------------------------------------------

PROPOSAL_FIELDS = ("image_id", "x1", "y1", "x2", "y2", "score")
LABEL_FIELDS = ("image_id", "row", "col", "axis", "scale_index", "label", "source", "t_c", "t_l")


def fmt(v: float) -> str:
    out = f"{v:.6f}"
    return "0.000000" if out == "-0.000000" else out


def proposal_lines(image_id, corners: np.ndarray, scores: np.ndarray) -> Iterable[str]:
    for (x1, y1, x2, y2), s in zip(corners, scores):
        yield ",".join([str(image_id), fmt(x1), fmt(y1), fmt(x2), fmt(y2), fmt(s)])


def write_proposals(path: str | Path, per_image: Iterable[tuple[Any, np.ndarray, np.ndarray]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(PROPOSAL_FIELDS) + "\n")
        for image_id, corners, scores in per_image:
            for line in proposal_lines(image_id, corners, scores):
                fh.write(line + "\n")


def read_proposals(path: str | Path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """image_id (as text) -> (corners (n, 4), scores (n,)), in file order."""
    rows: dict[str, list[list[float]]] = defaultdict(list)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != PROPOSAL_FIELDS:
        raise ValidationError(f"{path}: expected header {','.join(PROPOSAL_FIELDS)}")
    for n, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(PROPOSAL_FIELDS):
            raise ValidationError(f"{path}: line {n}: expected {len(PROPOSAL_FIELDS)} fields, got {len(rec)}")
        try:
            rows[rec[0]].append([float(v) for v in rec[1:]])
        except ValueError as exc:
            raise ValidationError(f"{path}: line {n}: {exc}") from exc
    return {k: (np.array(v)[:, :4], np.array(v)[:, 4]) for k, v in rows.items()}


def label_lines(image_id, instances) -> Iterable[str]:
    for inst in instances:
        r, c = inst.anchor.cell
        t = inst.target
        yield ",".join([str(image_id), str(r), str(c), inst.anchor.axis.value, str(inst.anchor.scale_index),
                        inst.label.value, inst.source.value,
                        fmt(t.t_c) if t is not None else "", fmt(t.t_l) if t is not None else ""])


def write_labels(path: str | Path, per_image: Iterable[tuple[Any, Sequence]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(LABEL_FIELDS) + "\n")
        for image_id, instances in per_image:
            for line in label_lines(image_id, instances):
                fh.write(line + "\n")
