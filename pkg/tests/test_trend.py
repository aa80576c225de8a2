"""Trend reweighting and box regeneration: hand oracles for every formula."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisydet.boxes import BoundingBox, iou
from noisydet.trend import (
    Candidate,
    RbrState,
    SampleKey,
    TrendRegistry,
    cleanliness,
    cleanliness_weights,
    ensemble_box,
    negative_weight,
    positive_weight,
    primacy,
    rbr_fuse,
    select_topk,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


# ---------------------------------------------------------------- cleanliness

def test_cleanliness_improving_sample():
    assert cleanliness(0.2, 0.8, floor=0.01) == pytest.approx(1 - 0.2 / 0.8, abs=1e-12)


def test_cleanliness_worsening_sample_hits_floor():
    assert cleanliness(0.8, 0.2, floor=0.07) == 0.07
    assert cleanliness(0.5, 0.0, floor=0.07) == 0.07


def test_group_floor_is_lowest_positive_cleanliness():
    s_prev = np.array([0.1, 0.4, 0.9])
    s_cur = np.array([0.5, 0.5, 0.5])  # raw: 0.8, 0.2, negative
    w = cleanliness_weights(s_prev, s_cur)
    assert w == pytest.approx([0.8, 0.2, 0.2], abs=1e-12)


def test_group_all_worsening_falls_back_to_uniform():
    w = cleanliness_weights(np.array([0.9, 0.8]), np.array([0.3, 0.2]))
    assert w == pytest.approx([0.5, 0.5], abs=1e-12)


def test_zero_raw_cleanliness_is_valid_not_floored():
    """A flat trend (s_prev == s_cur) has cleanliness exactly 0, kept as is."""
    w = cleanliness_weights(np.array([0.5, 0.2]), np.array([0.5, 0.4]))
    assert w == pytest.approx([0.0, 0.5], abs=1e-12)


@settings(max_examples=200)
@given(st.lists(st.tuples(unit, unit), min_size=1, max_size=10))
def test_cleanliness_weights_bounded(pairs):
    s_prev = np.array([p for p, _ in pairs])
    s_cur = np.array([c for _, c in pairs])
    w = cleanliness_weights(s_prev, s_cur)
    assert np.all(w >= 0) and np.all(w <= 1.0 + 1e-12)


# ---------------------------------------------------------------- primacy

def test_primacy_is_confidence_share():
    assert primacy([0.2, 0.3, 0.5]) == pytest.approx([0.2, 0.3, 0.5], abs=1e-12)
    assert primacy([4.0]) == pytest.approx([1.0])


def test_primacy_all_zero_degrades_to_uniform():
    assert primacy([0.0, 0.0]) == pytest.approx([0.5, 0.5])


def test_primacy_rejects_bad_input():
    with pytest.raises(ValueError):
        primacy([])
    with pytest.raises(ValueError):
        primacy([-0.1, 0.5])


@settings(max_examples=200)
@given(st.lists(unit, min_size=1, max_size=12))
def test_primacy_sums_to_one(scores):
    assert primacy(scores).sum() == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------- blended weights

def test_positive_weight_hand_values():
    assert positive_weight(0.8, 0.2, alpha=0.5) == pytest.approx(0.5, abs=1e-12)
    assert positive_weight(1.0, 0.0, alpha=0.25) == pytest.approx(0.25, abs=1e-12)


def test_positive_weight_alpha_validation():
    with pytest.raises(ValueError):
        positive_weight(0.5, 0.5, alpha=1.5)


@settings(max_examples=200)
@given(unit, unit, unit)
def test_positive_weight_between_inputs(c, r, alpha):
    w = float(positive_weight(c, r, alpha))
    assert min(c, r) - 1e-12 <= w <= max(c, r) + 1e-12


def test_negative_weight_oracle():
    assert negative_weight(0.2, 0.8) == pytest.approx(0.25, abs=1e-12)  # growing: suppress
    assert negative_weight(0.8, 0.2) == 1.0  # shrinking: full weight (capped)
    assert negative_weight(0.5, 0.0) == 1.0  # vanished score


@settings(max_examples=200)
@given(unit, unit)
def test_negative_weight_bounded(s_prev, s_cur):
    assert 0.0 <= negative_weight(s_prev, s_cur) <= 1.0


# ---------------------------------------------------------------- top-k + ensemble

def _cand(score, level=0, gy=0, gx=0, box=None):
    return Candidate(SampleKey(level, gy, gx), box or BoundingBox(10, 10, 4, 4), score)


def test_select_topk_orders_by_score():
    cands = [_cand(0.1, gx=0), _cand(0.9, gx=1), _cand(0.5, gx=2)]
    top = select_topk(cands, 2)
    assert [c.score for c in top] == [0.9, 0.5]


def test_select_topk_tie_broken_by_lower_key():
    a = _cand(0.5, level=1, gy=0, gx=0)
    b = _cand(0.5, level=0, gy=9, gx=9)
    assert select_topk([a, b], 1)[0] is b  # level 0 < level 1


def test_select_topk_fewer_than_k():
    cands = [_cand(0.3)]
    assert select_topk(cands, 4) == cands


def test_ensemble_box_weighted_mean_oracle():
    boxes = [BoundingBox(10, 10, 4, 4), BoundingBox(20, 20, 8, 8)]
    e = ensemble_box(boxes, [1.0, 3.0])
    assert e.as_array() == pytest.approx([17.5, 17.5, 7.0, 7.0], abs=1e-12)


def test_ensemble_box_zero_scores_is_plain_mean():
    boxes = [BoundingBox(10, 10, 4, 4), BoundingBox(20, 20, 8, 8)]
    assert ensemble_box(boxes, [0.0, 0.0]).as_array() == pytest.approx([15, 15, 6, 6])


def test_ensemble_box_empty_raises():
    with pytest.raises(ValueError):
        ensemble_box([], [])


# ---------------------------------------------------------------- fusion

def test_rbr_fuse_hand_oracle():
    g = BoundingBox(10, 10, 6, 6)
    theta = BoundingBox(12, 12, 6, 6)
    topk = [
        _cand(0.6, gx=0, box=BoundingBox(14, 14, 8, 8)),
        _cand(0.2, gx=1, box=BoundingBox(16, 16, 4, 4)),
    ]
    prev_max = 0.5
    bbar = (0.6 * np.array([14, 14, 8, 8]) + 0.2 * np.array([16, 16, 4, 4])) / 0.8
    w1, w2, w3 = 1.0, prev_max, 0.6
    expected = (w1 * np.array([10, 10, 6, 6]) + w2 * np.array([12, 12, 6, 6]) + w3 * bbar) / (w1 + w2 + w3)
    out = rbr_fuse(g, theta, topk, w1=1.0, prev_max_score=prev_max)
    assert out.as_array() == pytest.approx(expected, abs=1e-9)


def test_rbr_fuse_no_candidates_carries_theta():
    g = BoundingBox(10, 10, 6, 6)
    theta = BoundingBox(12, 12, 6, 6)
    assert rbr_fuse(g, theta, [], w1=1.0, prev_max_score=0.3) == theta


def test_rbr_fuse_first_epoch_ignores_theta():
    """prev_max_score 0 removes the theta term entirely."""
    g = BoundingBox(10, 10, 6, 6)
    theta = BoundingBox(99, 99, 6, 6)
    topk = [_cand(1.0, box=BoundingBox(20, 20, 6, 6))]
    out = rbr_fuse(g, theta, topk, w1=1.0, prev_max_score=0.0)
    assert out.as_array() == pytest.approx([15, 15, 6, 6], abs=1e-9)


def test_rbr_fixed_point_with_pinned_predictions():
    """Predictions pinned to the clean box: theta converges to the analytic
    fixed point (w1 g + w3 b) / (w1 + w3) with monotone IoU to the clean box."""
    clean = BoundingBox(50, 50, 10, 10)
    noisy_gt = BoundingBox(56, 44, 14, 7)
    s = 0.8
    rbr = RbrState(w1=1.0, k=4)
    cands = [_cand(s, gx=i, box=clean) for i in range(4)]
    ious = []
    for epoch in range(50):
        rbr.target_for(1, 1, noisy_gt)
        theta = rbr.refresh(1, 1, noisy_gt, cands, epoch)
        ious.append(iou(theta, clean))
    fixed = (1.0 * noisy_gt.as_array() + s * clean.as_array()) / (1.0 + s)
    assert theta.as_array() == pytest.approx(fixed, abs=1e-6)
    assert all(b >= a - 1e-12 for a, b in zip(ious, ious[1:]))


# ---------------------------------------------------------------- registry

def test_registry_previous_score():
    reg = TrendRegistry()
    key = SampleKey(0, 3, 4)
    reg.record_epoch(7, 0, {key: 1}, {key: 0.4})
    reg.record_epoch(7, 1, {key: 1}, {key: 0.6})
    assert reg.previous_score(7, key, 1) == pytest.approx(0.4)
    assert reg.previous_score(7, key, 0) is None
    assert reg.previous_score(8, key, 1) is None


def test_registry_rejects_duplicate_epoch():
    reg = TrendRegistry()
    key = SampleKey(0, 0, 0)
    reg.record_epoch(1, 0, {key: 0}, {key: 0.5})
    with pytest.raises(ValueError):
        reg.record_epoch(1, 0, {key: 0}, {key: 0.5})


def test_registry_rejects_out_of_range_score():
    reg = TrendRegistry()
    key = SampleKey(0, 0, 0)
    with pytest.raises(ValueError):
        reg.record_epoch(1, 0, {key: 0}, {key: 1.5})


def test_assignment_change_restarts_history():
    reg = TrendRegistry()
    key = SampleKey(0, 2, 2)
    reg.record_epoch(1, 0, {key: 0}, {key: 0.4})
    reg.record_epoch(1, 1, {key: 1}, {key: 0.6})  # reassigned to another gt
    assert reg.previous_score(1, key, 1) is None  # history restarted
    reg.record_epoch(1, 2, {key: 1}, {key: 0.7})
    assert reg.previous_score(1, key, 2) == pytest.approx(0.6)


def test_registry_save(tmp_path):
    reg = TrendRegistry()
    key = SampleKey(0, 1, 1)
    reg.record_epoch(1, 0, {key: None}, {key: 0.2})
    p = tmp_path / "reg.json"
    reg.save(p)
    assert p.exists() and p.stat().st_size > 0


def test_rbr_state_lazy_init_and_save(tmp_path):
    rbr = RbrState()
    g = BoundingBox(5, 5, 4, 4)
    assert rbr.target_for(1, 2, g) == g
    rbr.refresh(1, 2, g, [_cand(0.5, box=BoundingBox(7, 7, 4, 4))], epoch=0)
    assert rbr.target_for(1, 2, g) != g
    p = tmp_path / "rbr.json"
    rbr.save(p)
    assert p.exists() and p.stat().st_size > 0


def test_rbr_state_validates_w1():
    with pytest.raises(ValueError):
        RbrState(w1=0.0)
