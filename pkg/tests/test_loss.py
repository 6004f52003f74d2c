import json
import math

import numpy as np
import pytest

from derpn.codec import AnchorInstance, SegmentTarget
from derpn.geometry import Axis, Box
from derpn.labeling import Label, LabeledBatch, LabeledBox, LabeledInstance, Source
from derpn.loss import (EPS, PredictedInstance, cross_entropy, rpn_loss, scale_sensitive_loss, smooth_l1,
                        smooth_l1_grad)


def _inst(scale, label, source=Source.DEFAULT_NEGATIVE, target=(0.0, 0.0), col=0, axis=Axis.WIDTH):
    anchor = AnchorInstance(8.0 + 16 * col, 16.0 * 2 ** (scale - 1), scale, (0, col), axis)
    t = SegmentTarget(*target, axis) if label is Label.POSITIVE else None
    return LabeledInstance(anchor, label, t, 0 if t else None, source)


def _batch(instances):
    return LabeledBatch(list(instances), {})


def test_cross_entropy_examples():
    assert cross_entropy(1.0, 1) == 0.0
    assert cross_entropy(0.5, 0) == pytest.approx(math.log(2))
    assert cross_entropy(0.5, 1) == pytest.approx(math.log(2))
    assert cross_entropy(1 - 1e-12, 0) == pytest.approx(-math.log(EPS), rel=1e-3)
    assert math.isfinite(cross_entropy(0.0, 1))


def test_smooth_l1_examples_and_kink():
    assert smooth_l1(0) == 0 and smooth_l1(0.5) == 0.125 and smooth_l1(2) == 1.5 and smooth_l1(-2) == 1.5
    # one-sided differences at the kink, Richardson-extrapolated to cancel the O(h) term
    def left(h):
        return (smooth_l1(1) - smooth_l1(1 - h)) / h

    def right(h):
        return (smooth_l1(1 + h) - smooth_l1(1)) / h

    h = 1e-3
    assert 2 * left(h / 2) - left(h) == pytest.approx(1, abs=1e-9)
    assert 2 * right(h / 2) - right(h) == pytest.approx(1, abs=1e-9)
    assert smooth_l1(1 - 1e-12) == pytest.approx(smooth_l1(1 + 1e-12), abs=1e-11)
    assert smooth_l1_grad(1.0) == 1.0


def test_perfect_predictions_zero_loss():
    insts = [_inst(1, Label.POSITIVE, Source.ALIGNED, (0.1, -0.2)), _inst(1, Label.NEGATIVE),
             _inst(3, Label.POSITIVE, Source.OBSERVED, (0.3, 0.3)), _inst(3, Label.NEGATIVE, col=2)]
    preds = [PredictedInstance(1.0 if i.label is Label.POSITIVE else 0.0,
                               (i.target.t_c, i.target.t_l) if i.target else (0.0, 0.0)) for i in insts]
    r = scale_sensitive_loss(_batch(insts), preds)
    assert r.total == 0.0 and not r.empty


def test_two_instance_hand_example():
    insts = [_inst(2, Label.POSITIVE, Source.OBSERVED), _inst(2, Label.POSITIVE, Source.OBSERVED, col=1)]
    preds = [PredictedInstance(math.exp(-0.2), (0, 0)), PredictedInstance(math.exp(-0.4), (0, 0))]
    r = scale_sensitive_loss(_batch(insts), preds)
    assert r.cls_by_scale[2] == pytest.approx(0.3, abs=1e-9)
    assert r.reg_by_scale[2] == 0.0 and r.n_reg[2] == 0
    assert r.total == pytest.approx(0.3, abs=1e-9)


def test_total_invariant_and_report_json():
    rng = np.random.default_rng(0)
    insts, preds = _random_batch(rng, 40)
    r = scale_sensitive_loss(_batch(insts), preds)
    assert r.total == pytest.approx(sum(r.cls_by_scale.values()) + r.lam * sum(r.reg_by_scale.values()), abs=1e-9)
    doc = json.loads(json.dumps(r.to_dict()))
    assert doc["lambda"] == 10 and len(doc["scales"]) == len(r.cls_by_scale)


def _random_batch(rng, n):
    insts, preds = [], []
    for i in range(n):
        scale = int(rng.integers(1, 5))
        kind = rng.integers(0, 3)
        if kind == 0:
            inst = _inst(scale, Label.POSITIVE, Source.ALIGNED, tuple(rng.normal(0, 0.3, 2)), col=i)
        elif kind == 1:
            inst = _inst(scale, Label.POSITIVE, Source.OBSERVED, tuple(rng.normal(0, 0.3, 2)), col=i)
        else:
            inst = _inst(scale, Label.NEGATIVE, col=i)
        insts.append(inst)
        preds.append(PredictedInstance(float(rng.uniform(0.05, 0.95)), tuple(rng.normal(0, 1.0, 2))))
    return insts, preds


def _loss_at(insts, preds, p=None, t=None):
    preds = list(preds)
    if p is not None:
        i, v = p
        preds[i] = PredictedInstance(v, preds[i].t)
    if t is not None:
        i, c, v = t
        off = list(preds[i].offsets)
        off[c] = v
        preds[i] = PredictedInstance(preds[i].p, tuple(off))
    return scale_sensitive_loss(_batch(insts), preds).total


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    h = 1e-6
    for _ in range(20):
        insts, preds = _random_batch(rng, 12)
        r = scale_sensitive_loss(_batch(insts), preds)
        for i, pr in enumerate(preds):
            num = (_loss_at(insts, preds, p=(i, pr.p + h)) - _loss_at(insts, preds, p=(i, pr.p - h))) / (2 * h)
            assert num == pytest.approx(r.grad_p[i], rel=1e-5, abs=1e-8)
            for c in range(2):
                v = pr.offsets[c]
                num = (_loss_at(insts, preds, t=(i, c, v + h)) - _loss_at(insts, preds, t=(i, c, v - h))) / (2 * h)
                assert num == pytest.approx(r.grad_t[i, c], rel=1e-5, abs=1e-8)


def test_duplication_and_permutation_invariance():
    rng = np.random.default_rng(2)
    insts, preds = _random_batch(rng, 30)
    base = scale_sensitive_loss(_batch(insts), preds)
    dup = scale_sensitive_loss(_batch(insts * 3), preds * 3)
    for j in base.cls_by_scale:
        assert dup.cls_by_scale[j] == pytest.approx(base.cls_by_scale[j], abs=1e-12)
        assert dup.reg_by_scale[j] == pytest.approx(base.reg_by_scale[j], abs=1e-12)
    order = rng.permutation(len(insts))
    perm = scale_sensitive_loss(_batch([insts[i] for i in order]), [preds[i] for i in order])
    assert perm.total == pytest.approx(base.total, abs=1e-12)


def test_adding_instances_leaves_other_scales_alone():
    rng = np.random.default_rng(3)
    insts, preds = _random_batch(rng, 30)
    base = scale_sensitive_loss(_batch(insts), preds)
    extra = [_inst(7, Label.NEGATIVE, col=99)]
    more = scale_sensitive_loss(_batch(insts + extra), preds + [PredictedInstance(0.4, (0, 0))])
    for j in base.cls_by_scale:
        assert more.cls_by_scale[j] == base.cls_by_scale[j]
        assert more.reg_by_scale[j] == base.reg_by_scale[j]
    assert 7 in more.cls_by_scale


def test_empty_batch_flags():
    r = scale_sensitive_loss(_batch([]), [])
    assert r.total == 0 and r.empty
    assert rpn_loss([], []).empty


def test_prediction_count_must_match():
    with pytest.raises(ValueError):
        scale_sensitive_loss(_batch([_inst(1, Label.NEGATIVE)]), [])


def test_rpn_loss_examples():
    anchor = Box(8, 8, 16, 16)
    pos = LabeledBox(anchor, Label.POSITIVE, (0.1, 0.0, 0.0, 0.2), 0)
    assert rpn_loss([pos], [(1.0, (0.1, 0.0, 0.0, 0.2))]).total == 0.0
    r = rpn_loss([pos], [(math.exp(-0.7), (0.1, 0.0, 0.0, 0.2))])
    assert r.cls_by_scale[0] == pytest.approx(0.7)


def test_scale_imbalance_demo():
    # 90 large-object and 10 small-object instances, identical per-instance loss
    p = math.exp(-0.5)
    large = [_inst(6, Label.POSITIVE, Source.ALIGNED, col=i) for i in range(90)]
    small = [_inst(1, Label.POSITIVE, Source.ALIGNED, col=i) for i in range(10)]
    preds = [PredictedInstance(p, (0.0, 0.0))] * 100
    ss = scale_sensitive_loss(_batch(large + small), preds)
    assert ss.cls_by_scale[6] == pytest.approx(ss.cls_by_scale[1])
    boxes = [LabeledBox(Box(0, 0, 1, 1), Label.POSITIVE, (0, 0, 0, 0), 0)] * 100
    rl = rpn_loss(boxes, [(p, (0, 0, 0, 0))] * 100, groups=["large"] * 90 + ["small"] * 10)
    assert rl.cls_by_scale["large"] / rl.cls_by_scale["small"] == pytest.approx(9.0)


def test_predicted_instance_range():
    with pytest.raises(ValueError):
        PredictedInstance(1.2, (0, 0))
