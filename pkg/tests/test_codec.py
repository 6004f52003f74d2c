import math

import numpy as np
import pytest

from derpn.anchors import coverage_range, default_strings, match_edge
from derpn.codec import (AnchorInstance, SegmentTarget, cell_center, decode_box, decode_boxes, decode_segment,
                         encode_box, encode_boxes, encode_segment)
from derpn.geometry import Axis, Box, Segment


def _anchor(c=100.0, l=32.0, axis=Axis.WIDTH):
    return AnchorInstance(c, l, 2, (0, 0), axis)


def test_zero_offsets_decode_to_anchor():
    seg = decode_segment(SegmentTarget(0, 0, Axis.WIDTH), _anchor())
    assert (seg.c, seg.l) == (100, 32)


def test_decode_example():
    seg = decode_segment(SegmentTarget(0.25, math.log(1.5), Axis.WIDTH), _anchor())
    assert seg.c == pytest.approx(108) and seg.l == pytest.approx(48)


def test_encode_example():
    t = encode_segment(Segment(108, 48, Axis.WIDTH), _anchor())
    assert t.t_c == pytest.approx(0.25) and t.t_l == pytest.approx(0.4054651081081644)
    t0 = encode_segment(Segment(100, 32, Axis.WIDTH), _anchor())
    assert (t0.t_c, t0.t_l) == (0, 0)


def test_axis_mismatch_rejected():
    with pytest.raises(ValueError):
        decode_segment(SegmentTarget(0, 0, Axis.HEIGHT), _anchor())
    with pytest.raises(ValueError):
        encode_segment(Segment(1, 1, Axis.HEIGHT), _anchor())


def test_box_examples():
    anchor = Box(100, 100, 32, 32)
    assert decode_box(np.zeros(4), anchor) == anchor
    b = decode_box((0.25, -0.25, math.log(1.5), math.log(0.5)), anchor)
    assert (b.cx, b.cy, b.w, b.h) == pytest.approx((108, 92, 48, 16))
    assert encode_box(b, anchor) == pytest.approx([0.25, -0.25, math.log(1.5), math.log(0.5)])


def test_anchor_instance_at_cell_centre():
    a = AnchorInstance.at(3, 5, 2, "width", default_strings())
    assert a.anchor_c == cell_center(5) == 88 and a.anchor_l == 32 and a.cell == (3, 5)
    h = AnchorInstance.at(3, 5, 4, Axis.HEIGHT, default_strings().terms, stride=8)
    assert h.anchor_c == 28 and h.anchor_l == 128


def test_segment_round_trip_random():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        a = _anchor(rng.uniform(-500, 500), rng.uniform(1, 1000), Axis.HEIGHT)
        s = Segment(rng.uniform(-500, 500), rng.uniform(0.5, 2000), Axis.HEIGHT)
        back = decode_segment(encode_segment(s, a), a)
        assert back.c == pytest.approx(s.c, rel=1e-9, abs=1e-9) and back.l == pytest.approx(s.l, rel=1e-9)


def test_equivariance():
    rng = np.random.default_rng(1)
    for _ in range(500):
        a = _anchor(rng.uniform(0, 500), rng.uniform(1, 500))
        s = Segment(rng.uniform(0, 500), rng.uniform(1, 500), Axis.WIDTH)
        t = encode_segment(s, a)
        d, k = rng.uniform(-100, 100), rng.uniform(0.1, 10)
        shifted = encode_segment(Segment(s.c + d, s.l, Axis.WIDTH), _anchor(a.anchor_c + d, a.anchor_l))
        scaled = encode_segment(Segment(s.c * k, s.l * k, Axis.WIDTH), _anchor(a.anchor_c * k, a.anchor_l * k))
        assert shifted.t_c == pytest.approx(t.t_c, abs=1e-12) and shifted.t_l == pytest.approx(t.t_l, abs=1e-12)
        assert scaled.t_c == pytest.approx(t.t_c, abs=1e-12) and scaled.t_l == pytest.approx(t.t_l, abs=1e-12)


def test_box_arrays_round_trip_and_match_scalar():
    rng = np.random.default_rng(2)
    anchors = np.column_stack([rng.uniform(0, 800, (300, 2)), rng.uniform(4, 600, (300, 2))])
    gts = np.column_stack([rng.uniform(0, 800, (300, 2)), rng.uniform(4, 600, (300, 2))])
    t = encode_boxes(gts, anchors)
    assert np.allclose(decode_boxes(t, anchors), gts, rtol=1e-9, atol=0)
    for i in range(0, 300, 37):
        assert np.allclose(t[i], encode_box(Box(*gts[i]), Box(*anchors[i])), rtol=0, atol=1e-15)


def test_matched_log_length_offset_bounded_without_transition():
    strings = default_strings()
    lo, hi = coverage_range(strings)
    rng = np.random.default_rng(3)
    bound = math.log(math.sqrt(2))
    for e in np.exp(rng.uniform(math.log(lo), math.log(hi), 20_000)):
        closest = min(match_edge(float(e), strings), key=lambda i: abs(math.log(e / strings.term(i))))
        assert abs(math.log(e / strings.term(closest))) <= bound + 1e-9


def test_target_rejects_non_finite_length():
    with pytest.raises(ValueError):
        SegmentTarget(0.0, float("inf"), Axis.WIDTH)
