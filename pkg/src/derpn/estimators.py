"""
scikit-learn style wrappers around the functional API.

The wrappers hold hyperparameters in ``__init__`` and validate them in
``fit``, so they compose with ``get_params``/``set_params``/``clone``. Nothing
is learned; ``fit`` only resolves configuration.
"""
from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_boxes, check_edges, check_fitted, check_image_size
from .anchors import AnchorStringSet, coverage_range, match_edge, match_edges
from .combiner import CombinedProposals, CombinerConfig, combine_arrays
from .errors import ValidationError
from .evaluation import recall_at
from .geometry import Box
from .maps import PredictionMaps, map_shape_for
from .oracle import OracleConfig, oracle_maps
from .pipeline import image_seed


class AnchorStringMatcher(TransformerMixin, BaseEstimator):
    """Map edge lengths to their matched anchor strings.

    ``transform`` returns an (n_edges, n_terms) boolean membership matrix;
    ``predict`` returns the matched 1-based indices per edge.
    """

    def __init__(self, first=16.0, q=2.0, n_terms=7, beta=0.1):
        self.first = first
        self.q = q
        self.n_terms = n_terms
        self.beta = beta

    def fit(self, X=None, y=None):
        if int(self.n_terms) != self.n_terms or self.n_terms < 1:
            raise ValidationError("n_terms must be a positive integer")
        self.strings_ = AnchorStringSet.progression(float(self.first), float(self.q), int(self.n_terms),
                                                    float(self.beta))
        self.coverage_range_ = coverage_range(self.strings_)
        return self

    def transform(self, X) -> np.ndarray:
        check_fitted(self, "strings_")
        return match_edges(check_edges(X), self.strings_)

    def predict(self, X) -> list[tuple[int, ...]]:
        check_fitted(self, "strings_")
        return [match_edge(float(e), self.strings_) for e in check_edges(X)]

    def in_coverage(self, X) -> np.ndarray:
        check_fitted(self, "coverage_range_")
        lo, hi = self.coverage_range_
        e = check_edges(X)
        return (e >= lo) & (e <= hi)


class OracleMapGenerator(TransformerMixin, BaseEstimator):
    """Turn per-image ground-truth boxes into prediction maps.

    ``X`` is a sequence of (n_i, 4) center-form arrays, all for images of
    ``image_size``. Image ``i`` draws noise from its own stream derived from
    ``random_state`` and ``i``.
    """

    def __init__(self, mode="perfect", sigma_t=0.0, p_flip=0.0, p_pos=1.0, p_neg=0.0,
                 image_size=(1600, 1600), stride=16.0, strings=None, random_state=0):
        self.mode = mode
        self.sigma_t = sigma_t
        self.p_flip = p_flip
        self.p_pos = p_pos
        self.p_neg = p_neg
        self.image_size = image_size
        self.stride = stride
        self.strings = strings
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.config_ = OracleConfig(self.mode, float(self.sigma_t), float(self.p_flip), float(self.p_pos),
                                    float(self.p_neg), int(self.random_state))
        self.image_size_ = check_image_size(self.image_size)
        if not float(self.stride) > 0:
            raise ValidationError("stride must be positive")
        self.map_shape_ = map_shape_for(*self.image_size_, float(self.stride))
        return self

    def transform(self, X: Sequence) -> list[PredictionMaps]:
        check_fitted(self, "config_")
        out = []
        for i, boxes in enumerate(X):
            gts = [Box(*row) for row in check_boxes(boxes)]
            cfg = replace(self.config_, rng_seed=image_seed(self.config_.rng_seed, i))
            out.append(oracle_maps(gts, self.strings, self.map_shape_, float(self.stride), cfg, self.image_size_))
        return out


class DeRPNProposer(BaseEstimator):
    """Pixel-wise combination of prediction maps into scored proposals."""

    def __init__(self, top_n_w=2000, top_k=3, nms_iou=0.7, top_m=300, clip_to_image=True,
                 score_fn="harmonic", score_iou=0.7):
        self.top_n_w = top_n_w
        self.top_k = top_k
        self.nms_iou = nms_iou
        self.top_m = top_m
        self.clip_to_image = clip_to_image
        self.score_fn = score_fn
        self.score_iou = score_iou

    def fit(self, X=None, y=None):
        self.config_ = CombinerConfig(int(self.top_n_w), int(self.top_k), float(self.nms_iou), int(self.top_m),
                                      bool(self.clip_to_image), self.score_fn)
        if not 0 < float(self.score_iou) <= 1:
            raise ValidationError("score_iou must lie in (0, 1]")
        return self

    def predict(self, X: Sequence[PredictionMaps]) -> list[CombinedProposals]:
        check_fitted(self, "config_")
        if isinstance(X, PredictionMaps):
            raise ValidationError("predict expects a sequence of PredictionMaps; wrap a single map in a list")
        return [combine_arrays(m, self.config_) for m in X]

    def score(self, X: Sequence[PredictionMaps], y: Sequence) -> float:
        """Recall (fraction in [0, 1]) at ``score_iou`` with gt boxes ``y`` per image."""
        props = {i: p.corners for i, p in enumerate(self.predict(X))}
        gts = {i: [Box(*row) for row in check_boxes(b)] for i, b in enumerate(y)}
        if len(gts) != len(props):
            raise ValidationError(f"{len(props)} map sets but {len(gts)} gt sets")
        table = recall_at(props, gts, (float(self.score_iou),))
        value = table.recall[float(self.score_iou)]
        return float("nan") if value is None else value / 100.0
