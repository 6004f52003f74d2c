import numpy as np
import pytest

from derpn.anchors import coco_boxes, default_strings, voc_boxes
from derpn.data import SynthSpec, synth_dataset
from derpn.evaluation import (BIN_EDGES, DEFAULT_THRESHOLDS, best_anchor_box_iou, best_string_iou,
                              complexity_probe, fit_exponent, format_recall_tables, histogram_bins,
                              proposal_stats, recall_at, reference_quality)
from derpn.geometry import Box

GT = Box(50, 50, 20, 20)


def test_recall_proposals_equal_gts():
    rng = np.random.default_rng(0)
    gts = {i: [Box(*rng.uniform(50, 500, 2), *rng.uniform(5, 200, 2)) for _ in range(7)] for i in range(4)}
    table = recall_at(gts, gts)
    assert all(v == 100.0 for v in table.recall.values())
    assert table.thresholds == DEFAULT_THRESHOLDS and table.n_objects == 28


def test_recall_threshold_crossing():
    prop = Box(50, 50, 13, 20)  # IoU 13 / 20 = 0.65
    table = recall_at({0: [prop]}, {0: [GT]})
    assert table.recall[0.5] == table.recall[0.6] == 100.0
    assert all(table.recall[t] == 0.0 for t in DEFAULT_THRESHOLDS if t >= 0.7)


def test_recall_inclusive_and_budget():
    table = recall_at({0: [Box(50, 50, 14, 20)]}, {0: [GT]}, (0.7,))
    assert table.recall[0.7] == 100.0
    props = {0: [Box(300, 300, 5, 5), GT]}
    assert recall_at(props, {0: [GT]}, (0.5,), budget=1).recall[0.5] == 0.0
    assert recall_at(props, {0: [GT]}, (0.5,), budget=2).recall[0.5] == 100.0


def test_recall_missing_images_and_undefined():
    assert recall_at({}, {0: [GT]}).recall[0.5] == 0.0
    table = recall_at({0: [GT]}, {0: []})
    assert table.undefined and all(v is None for v in table.recall.values())
    assert table.to_dict()["recall"]["0.5"] is None
    assert "n/a" in format_recall_tables({"x": table})


def test_stats_examples():
    stats = proposal_stats({0: [Box(50, 50, 4, 20), Box(50, 50, 12, 20)]}, {0: [GT]})
    assert stats.mean_iou == pytest.approx(0.4) and stats.foreground_ratio == 0.5
    same = proposal_stats({0: [GT, GT]}, {0: [GT]})
    assert same.mean_iou == 1.0 and same.foreground_ratio == 1.0 and same.histogram[-1] == 2
    empty = proposal_stats({0: []}, {0: [GT]})
    assert empty.empty and empty.n_proposals == 0 and empty.histogram.sum() == 0


def test_histogram_bin_convention():
    assert histogram_bins(np.array([0.5]))[0] == 10
    assert BIN_EDGES[10] == 0.5 and BIN_EDGES[11] == pytest.approx(0.55)
    assert histogram_bins(np.array([0.0, 0.0499, 1.0])).tolist() == [0, 0, 19]
    stats = proposal_stats({0: [Box(50, 50, 10, 20)]}, {0: [GT]})
    assert stats.histogram_triples()[10] == (0.5, pytest.approx(0.55), 1)


def test_stats_mean_within_one_bin_of_histogram_mean():
    rng = np.random.default_rng(1)
    props = {0: [Box(*rng.uniform(0, 200, 2), *rng.uniform(5, 80, 2)) for _ in range(300)]}
    gts = {0: [Box(*rng.uniform(0, 200, 2), *rng.uniform(5, 80, 2)) for _ in range(10)]}
    stats = proposal_stats(props, gts)
    mids = (BIN_EDGES[:-1] + BIN_EDGES[1:]) / 2
    assert abs(stats.mean_iou - float((mids * stats.histogram).sum() / stats.n_proposals)) <= 0.05


def test_complexity_base_case():
    ds = synth_dataset(SynthSpec(crossed_grid_n=1))
    probe = complexity_probe([a.box for a in ds.annotations], default_strings(), voc_boxes())
    assert probe.n_distinct_shapes == 1
    assert probe.rpn_pair_evaluations == 9
    assert probe.derpn_edge_evaluations == 2 * 7


def test_complexity_scaling():
    counts = {}
    for n in (4, 8, 16):
        ds = synth_dataset(SynthSpec(crossed_grid_n=n))
        probe = complexity_probe([a.box for a in ds.annotations], default_strings(), coco_boxes())
        assert probe.n_distinct_shapes == n * n
        counts[n] = probe
    assert counts[8].rpn_pair_evaluations == 4 * counts[4].rpn_pair_evaluations
    assert counts[8].derpn_edge_evaluations == 2 * counts[4].derpn_edge_evaluations
    ns = list(counts)
    assert fit_exponent(ns, [counts[n].rpn_pair_evaluations for n in ns]) == pytest.approx(2.0, abs=1e-9)
    assert fit_exponent(ns, [counts[n].derpn_edge_evaluations for n in ns]) == pytest.approx(1.0, abs=1e-9)


def test_reference_quality_contrast():
    strings = default_strings()
    assert best_string_iou(Box(0, 0, 32, 128), strings) == 1.0
    assert best_anchor_box_iou(Box(0, 0, 181.02, 181.02), voc_boxes()) > 0.5
    boxes = [Box(0, 0, 512, 32), Box(0, 0, 32, 512)]
    assert reference_quality(boxes, strings).min_best_iou == 1.0
    assert reference_quality(boxes, voc_boxes()).min_best_iou < 0.5
