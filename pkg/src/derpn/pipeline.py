"""End-to-end passes over a dataset, shared by the command line and the estimators."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Mapping

import numpy as np
import yaml

from .anchors import (AnchorBoxSet, AnchorStringSet, anchors_from_mapping, default_strings, load_anchors,
                      rpn_anchor_array)
from .combiner import CombinedProposals, CombinerConfig, combine_arrays, rpn_proposals
from .data import Dataset
from .errors import InvariantError, ValidationError
from .evaluation import (DEFAULT_BUDGET, ProposalStats, RecallTable, proposal_stats, recall_at,
                         reference_quality)
from .labeling import LabeledInstance, assign_aligned, observe_to_distribute, sample_batch
from .maps import map_shape_for
from .oracle import OracleConfig, oracle_maps, rpn_oracle

RUN_KEYS = {"anchors", "combiner", "oracle", "stride", "seed", "outputs"}


@dataclass
class RunConfig:
    strings: AnchorStringSet = field(default_factory=default_strings)
    combiner: CombinerConfig = field(default_factory=CombinerConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    stride: float = 16.0
    seed: int = 0
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, doc: Mapping[str, Any] | None) -> "RunConfig":
        doc = dict(doc or {})
        unknown = set(doc) - RUN_KEYS
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        if "anchors" in doc:
            ref = doc["anchors"]
            if isinstance(ref, str):
                strings = load_anchors(ref)
            elif isinstance(ref, Mapping):
                strings = anchors_from_mapping(ref)
            else:
                raise ValidationError("'anchors' must be a preset name, a file path or a mapping")
            if not isinstance(strings, AnchorStringSet):
                raise ValidationError("'anchors' must describe anchor strings (terms, q, beta)")
            cfg.strings = strings
        try:
            if "combiner" in doc:
                cfg.combiner = CombinerConfig.from_mapping(doc["combiner"] or {})
            if "oracle" in doc:
                cfg.oracle = OracleConfig.from_mapping(doc["oracle"] or {})
            if "stride" in doc:
                cfg.stride = float(doc["stride"])
            if "seed" in doc:
                cfg.seed = int(doc["seed"])
        except TypeError as exc:
            raise ValidationError(f"bad config value: {exc}") from exc
        if not cfg.stride > 0:
            raise ValidationError("stride must be positive")
        if "outputs" in doc:
            if not isinstance(doc["outputs"], dict):
                raise ValidationError("'outputs' must be a mapping")
            cfg.outputs = dict(doc["outputs"])
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        if doc is not None and not isinstance(doc, dict):
            raise ValidationError(f"{path}: config must be a mapping")
        return cls.from_mapping(doc)


def image_seed(seed: int, index: int) -> int:
    """Independent per-image seed derived from a run seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _check_proposals(props: CombinedProposals, cfg: CombinerConfig) -> CombinedProposals:
    if len(props) > cfg.top_m:
        raise InvariantError(f"{len(props)} proposals exceed top_m={cfg.top_m}")
    if np.any(np.diff(props.scores) > 0):
        raise InvariantError("proposals are not sorted by descending score")
    return props


def propose_derpn(dataset: Dataset, cfg: RunConfig) -> Iterator[tuple[Any, CombinedProposals]]:
    by_image = dataset.boxes_by_image()
    for idx, im in enumerate(dataset.images):
        gts = by_image[im.id]
        oracle_cfg = replace(cfg.oracle, rng_seed=image_seed(cfg.oracle.rng_seed, idx))
        shape = map_shape_for(im.width, im.height, cfg.stride)
        maps = oracle_maps(gts, cfg.strings, shape, cfg.stride, oracle_cfg, (im.width, im.height))
        yield im.id, _check_proposals(combine_arrays(maps, cfg.combiner), cfg.combiner)


def propose_rpn(dataset: Dataset, box_set: AnchorBoxSet, cfg: RunConfig) -> Iterator[tuple[Any, CombinedProposals]]:
    box_set = replace(box_set, stride=cfg.stride)
    by_image = dataset.boxes_by_image()
    for idx, im in enumerate(dataset.images):
        oracle_cfg = replace(cfg.oracle, rng_seed=image_seed(cfg.oracle.rng_seed, idx))
        rows, cols = map_shape_for(im.width, im.height, cfg.stride)
        anchors = rpn_anchor_array(box_set, rows, cols)
        scores, boxes = rpn_oracle(by_image[im.id], anchors, oracle_cfg)
        yield im.id, _check_proposals(rpn_proposals(scores, boxes, (im.width, im.height), cfg.combiner),
                                      cfg.combiner)


def label_image(gts, image_size, cfg: RunConfig, image_index: int = 0, observe: bool = True,
                per_scale_cap: int | None = 30) -> list[LabeledInstance]:
    """Aligned labels, optionally an observation pass over oracle maps, then per-scale sampling."""
    width, height = image_size
    shape = map_shape_for(width, height, cfg.stride)
    aligned = assign_aligned(gts, cfg.strings, shape, cfg.stride)
    if observe:
        oracle_cfg = replace(cfg.oracle, rng_seed=image_seed(cfg.oracle.rng_seed, image_index))
        maps = oracle_maps(gts, cfg.strings, shape, cfg.stride, oracle_cfg, image_size)
        instances = observe_to_distribute(aligned, maps, gts, cfg.combiner)
    else:
        instances = aligned
    if per_scale_cap is None:
        return instances
    return sample_batch(instances, image_seed(cfg.seed, image_index), per_scale_cap).instances


@dataclass
class MethodReport:
    recall: RecallTable
    stats: ProposalStats
    reference: dict

    def to_dict(self) -> dict:
        return {"recall": self.recall.to_dict(), "stats": self.stats.to_dict(), "reference": self.reference}


def evaluate(proposals: Mapping[Any, Any], dataset: Dataset, budget: int = DEFAULT_BUDGET
             ) -> tuple[RecallTable, ProposalStats]:
    gts = {str(k): v for k, v in dataset.boxes_by_image().items()}
    props = {str(k): v[:budget] for k, v in proposals.items()}
    table = recall_at(props, gts, budget=budget)
    values = [v for v in table.recall.values() if v is not None]
    if any(b > a for a, b in zip(values, values[1:])):
        raise InvariantError("recall increased with the IoU threshold")
    return table, proposal_stats(props, gts)


def reference_report(dataset: Dataset, references) -> dict:
    return reference_quality([a.box for a in dataset.annotations], references).to_dict()
