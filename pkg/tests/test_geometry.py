import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derpn.geometry import (Axis, Box, ScoredBox, Segment, clip_corners, iou_2d, iou_matrix, nms, nms_indices,
                            overlap_1d, to_center, to_corners)
from oracles import corner_iou, exhaustive_nms, raster_iou

coord = st.floats(-500, 500, allow_nan=False)
length = st.floats(0.5, 400, allow_nan=False)
boxes = st.builds(Box, coord, coord, length, length)


def test_box_rejects_non_positive_size():
    with pytest.raises(ValueError):
        Box(0, 0, 0, 5)
    with pytest.raises(ValueError):
        Box(0, 0, 5, -1)


def test_corner_and_top_left_conversions():
    b = Box.from_top_left(10, 10, 20, 20)
    assert (b.cx, b.cy, b.w, b.h) == (20, 20, 20, 20)
    assert b.corners == (10, 10, 30, 30)
    assert Box.from_corners(*b.corners) == b


def test_iou_identity():
    b = Box(5, 5, 10, 10)
    assert iou_2d(b, b) == 1.0


def test_iou_half_overlap_matches_raster():
    a, b = Box.from_corners(0, 0, 10, 10), Box.from_corners(5, 0, 15, 10)
    assert iou_2d(a, b) == pytest.approx(50 / 150, abs=1e-15)
    assert raster_iou(a.corners, b.corners) == pytest.approx(50 / 150, abs=1e-15)


def test_iou_disjoint_and_touching():
    a = Box.from_corners(0, 0, 10, 10)
    assert iou_2d(a, Box.from_corners(20, 20, 30, 30)) == 0.0
    assert iou_2d(a, Box.from_corners(10, 0, 20, 10)) == 0.0


def test_iou_random_integer_boxes_match_raster():
    rng = np.random.default_rng(3)
    for _ in range(200):
        x1, y1 = rng.integers(0, 30, size=2)
        x2, y2 = x1 + rng.integers(1, 20), y1 + rng.integers(1, 20)
        u1, v1 = rng.integers(0, 30, size=2)
        u2, v2 = u1 + rng.integers(1, 20), v1 + rng.integers(1, 20)
        a, b = Box.from_corners(x1, y1, x2, y2), Box.from_corners(u1, v1, u2, v2)
        assert iou_2d(a, b) == pytest.approx(raster_iou(a.corners, b.corners), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(boxes, boxes)
def test_iou_symmetric_bounded(a, b):
    v = iou_2d(a, b)
    assert v == iou_2d(b, a)
    assert 0.0 <= v <= 1.0


@settings(max_examples=300, deadline=None)
@given(boxes, boxes, st.floats(1e-3, 1e3))
def test_iou_scale_invariant(a, b, s):
    assert iou_2d(a.scaled(s), b.scaled(s)) == pytest.approx(iou_2d(a, b), abs=1e-12)


def test_iou_symmetry_ten_thousand_pairs():
    rng = np.random.default_rng(0)
    a = np.column_stack([rng.uniform(0, 100, (10_000, 2)), rng.uniform(1, 50, (10_000, 2))])
    b = np.column_stack([rng.uniform(0, 100, (10_000, 2)), rng.uniform(1, 50, (10_000, 2))])
    ca, cb = to_corners(a), to_corners(b)
    forward = np.array([iou_matrix(ca[i:i + 1], cb[i:i + 1])[0, 0] for i in range(0, 10_000, 50)])
    backward = np.array([iou_matrix(cb[i:i + 1], ca[i:i + 1])[0, 0] for i in range(0, 10_000, 50)])
    assert np.array_equal(forward, backward)
    pairs = [(Box(*a[i]), Box(*b[i])) for i in range(10_000)]
    assert all(iou_2d(x, y) == iou_2d(y, x) for x, y in pairs)


def test_iou_matrix_matches_scalar():
    rng = np.random.default_rng(1)
    a = np.column_stack([rng.uniform(0, 100, (20, 2)), rng.uniform(1, 50, (20, 2))])
    b = np.column_stack([rng.uniform(0, 100, (15, 2)), rng.uniform(1, 50, (15, 2))])
    m = iou_matrix(to_corners(a), to_corners(b))
    for i in range(20):
        for j in range(15):
            assert m[i, j] == iou_2d(Box(*a[i]), Box(*b[j]))


def test_to_center_inverts_to_corners():
    rng = np.random.default_rng(2)
    a = np.column_stack([rng.uniform(0, 100, (50, 2)), rng.uniform(1, 50, (50, 2))])
    assert np.allclose(to_center(to_corners(a)), a, rtol=0, atol=1e-12)


def test_overlap_1d():
    s = Segment(5, 10, Axis.WIDTH)
    assert overlap_1d(s, s) == 1.0
    assert overlap_1d(s, Segment(10, 10, Axis.WIDTH)) == pytest.approx(5 / 15)
    assert overlap_1d(Segment(0, 2, Axis.WIDTH), Segment(100, 2, Axis.WIDTH)) == 0.0


def test_overlap_1d_axis_mismatch():
    with pytest.raises(ValueError):
        overlap_1d(Segment(0, 2, Axis.WIDTH), Segment(0, 2, Axis.HEIGHT))


def test_segment_requires_positive_length():
    with pytest.raises(ValueError):
        Segment(0, 0, Axis.HEIGHT)


def test_scored_box_score_range():
    with pytest.raises(ValueError):
        ScoredBox(Box(0, 0, 1, 1), 1.5)


def test_nms_examples():
    b = Box(5, 5, 10, 10)
    assert nms([], 0.7) == []
    assert nms([ScoredBox(b, 0.3)], 0.7) == [ScoredBox(b, 0.3)]
    assert nms([ScoredBox(b, 0.8), ScoredBox(b, 0.9)], 0.7) == [ScoredBox(b, 0.9)]


def test_nms_tie_keeps_earlier():
    a, b = Box(5, 5, 10, 10), Box(5.5, 5, 10, 10)
    out = nms([ScoredBox(a, 0.5), ScoredBox(b, 0.5)], 0.7)
    assert out == [ScoredBox(a, 0.5)]


def test_nms_max_keep_stops_early():
    rng = np.random.default_rng(4)
    c = to_corners(np.column_stack([rng.uniform(0, 500, (40, 2)), rng.uniform(5, 30, (40, 2))]))
    s = rng.random(40)
    full = nms_indices(c, s, 0.5)
    assert list(nms_indices(c, s, 0.5, max_keep=5)) == list(full[:5])


def _random_instance(rng, n):
    xy = rng.uniform(0, 40, (n, 2))
    wh = rng.uniform(2, 30, (n, 2))
    corners = to_corners(np.column_stack([xy, wh]))
    # coarse scores so equal-score ties occur regularly
    scores = rng.integers(0, 5, n) / 4.0
    return corners, scores


def test_nms_matches_exhaustive_oracle_small():
    rng = np.random.default_rng(5)
    for _ in range(500):
        n = int(rng.integers(0, 11))
        corners, scores = _random_instance(rng, n)
        thr = float(rng.choice([0.1, 0.3, 0.5, 0.7, 1.0]))
        assert list(nms_indices(corners, scores, thr)) == exhaustive_nms(corners, scores, thr)


def test_nms_survivors_pairwise_below_threshold_and_idempotent():
    rng = np.random.default_rng(6)
    for _ in range(100):
        corners, scores = _random_instance(rng, 10)
        boxes = [ScoredBox(Box.from_corners(*c), float(s)) for c, s in zip(corners, scores)]
        out = nms(boxes, 0.5)
        assert [b.score for b in out] == sorted((b.score for b in out), reverse=True)
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                assert corner_iou(out[i].box.corners, out[j].box.corners) <= 0.5
        assert nms(out, 0.5) == out


def test_clip_corners():
    c = np.array([[-5.0, -5.0, 20.0, 8.0]])
    assert clip_corners(c, 10, 10).tolist() == [[0.0, 0.0, 10.0, 8.0]]


def test_segments_round_trip():
    b = Box(1.5, 2.5, 3.0, 4.0)
    w, h = b.segments()
    assert (w.c, w.l, w.axis, h.c, h.l, h.axis) == (1.5, 3.0, Axis.WIDTH, 2.5, 4.0, Axis.HEIGHT)
    assert math.isclose(b.area, 12.0)
