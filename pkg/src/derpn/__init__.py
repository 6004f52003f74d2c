"""Dimension-decomposition region proposals with anchor strings, plus an anchor-box baseline."""
from .anchors import (AnchorBoxSet, AnchorStringSet, MatchResult, coco_boxes, coverage_range, default_strings,
                      match, match_edge, rpn_anchor_grid, voc_boxes)
from .codec import AnchorInstance, SegmentTarget, decode_box, decode_segment, encode_box, encode_segment
from .combiner import CombinedProposals, CombinerConfig, combine, compose_box, harmonic_score
from .errors import InvariantError, ValidationError
from .estimators import AnchorStringMatcher, DeRPNProposer, OracleMapGenerator
from .evaluation import ProposalStats, RecallTable, complexity_probe, proposal_stats, recall_at
from .geometry import Axis, Box, ScoredBox, Segment, iou_2d, nms, overlap_1d
from .labeling import (Label, LabeledBatch, LabeledInstance, Source, assign_aligned, assign_rpn,
                       observe_to_distribute, sample_batch)
from .loss import LossReport, PredictedInstance, rpn_loss, scale_sensitive_loss
from .maps import PredictionMaps
from .oracle import OracleConfig, noisy_maps, perfect_maps

__version__ = "0.1.0"
