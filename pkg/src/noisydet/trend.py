"""Trend-guided learning against inaccurate boxes.

Two cooperating pieces:

* label reweighting — per-sample loss weights from the epoch-to-epoch
  confidence trend (clean samples trend upward, noisy ones stagnate), and
* box regeneration — an epoch-wise convex fusion of the noisy gt box, the
  previous fused target, and a confidence-weighted ensemble of the current
  top-k predictions, used as the regression target.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .boxes import BoundingBox


class SampleKey(NamedTuple):
    """Identity of one head location, stable across epochs."""

    feature_level: int
    grid_y: int
    grid_x: int


@dataclass
class SampleRecord:
    key: SampleKey
    assigned_gt: int | None
    score_history: dict[int, float] = field(default_factory=dict)  # epoch -> score


class TrendRegistry:
    """Per-image, per-location confidence histories across epochs.

    Positives record the score of their assigned gt's class; negatives the
    max foreground score. A record whose assignment changes restarts its
    history (the trend is only meaningful for a stable assignment).
    """

    def __init__(self):
        self.records: dict[int, dict[SampleKey, SampleRecord]] = {}
        self._written: set[tuple[int, int]] = set()

    def record_epoch(
        self,
        image_id: int,
        epoch: int,
        assignments: dict[SampleKey, int | None],
        scores: dict[SampleKey, float],
    ) -> None:
        if (image_id, epoch) in self._written:
            raise ValueError(f"epoch {epoch} already recorded for image {image_id}")
        per_image = self.records.setdefault(image_id, {})
        for key in sorted(scores):
            s = float(scores[key])
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"score out of [0,1]: {s}")
            gt = assignments.get(key)
            rec = per_image.get(key)
            if rec is None or rec.assigned_gt != gt:
                rec = SampleRecord(key=key, assigned_gt=gt)
                per_image[key] = rec
            rec.score_history[epoch] = s
        self._written.add((image_id, epoch))

    def previous_score(self, image_id: int, key: SampleKey, epoch: int) -> float | None:
        rec = self.records.get(image_id, {}).get(key)
        if rec is None:
            return None
        return rec.score_history.get(epoch - 1)

    def to_json_dict(self) -> dict:
        return {
            str(img): {
                ",".join(map(str, k)): {"gt": r.assigned_gt, "history": r.score_history}
                for k, r in recs.items()
            }
            for img, recs in self.records.items()
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))


def cleanliness(s_prev: float, s_cur: float, floor: float) -> float:
    """Trend weight 1 - s_prev/s_cur for an improving sample, else the floor."""
    if s_cur <= 0.0:
        return floor
    t = 1.0 - s_prev / s_cur
    return t if t >= 0.0 else floor


def cleanliness_weights(s_prev: np.ndarray, s_cur: np.ndarray) -> np.ndarray:
    """Cleanliness for all positives of one gt.

    Samples with a non-increasing trend fall back to the lowest strictly
    positive cleanliness within the group; if the whole group is
    non-increasing, to uniform 1/N.
    """
    s_prev = np.asarray(s_prev, dtype=np.float64)
    s_cur = np.asarray(s_cur, dtype=np.float64)
    n = len(s_cur)
    with np.errstate(over="ignore"):
        raw = np.where(s_cur > 0, 1.0 - np.divide(s_prev, s_cur, out=np.full(n, np.inf), where=s_cur > 0), -1.0)
    valid = raw >= 0.0
    positive = raw[valid & (raw > 0)]
    floor = positive.min() if positive.size else 1.0 / n
    return np.where(valid, raw, floor)


def primacy(scores) -> np.ndarray:
    """Within-gt confidence shares; all-zero scores degrade to uniform."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("need a non-empty 1-d score vector")
    if np.any(s < 0):
        raise ValueError("scores must be non-negative")
    total = s.sum()
    if total == 0.0:
        return np.full(s.size, 1.0 / s.size)
    return s / total


def positive_weight(c, r, alpha: float = 0.5):
    """Convex blend of cleanliness and primacy."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    return alpha * np.asarray(c) + (1.0 - alpha) * np.asarray(r)


def negative_weight(s_prev: float, s_cur: float) -> float:
    """Down-weight negatives with a growing score (likely mislabeled object body)."""
    if s_cur <= 0.0:
        return 1.0
    return min(s_prev / s_cur, 1.0)


class Candidate(NamedTuple):
    key: SampleKey
    box: BoundingBox
    score: float


def select_topk(candidates: list[Candidate], k: int) -> list[Candidate]:
    """k highest-score candidates, descending; ties broken by lower key."""
    ranked = sorted(candidates, key=lambda c: (-c.score, c.key))
    return ranked[:k]


def ensemble_box(boxes: list[BoundingBox], scores) -> BoundingBox:
    """Confidence-weighted mean box, per coordinate in center/size form."""
    s = np.asarray(scores, dtype=np.float64)
    if len(boxes) == 0:
        raise ValueError("need at least one box")
    coords = np.stack([b.as_array() for b in boxes])
    total = s.sum()
    if total == 0.0:
        mean = coords.mean(axis=0)
    else:
        mean = (s[:, None] * coords).sum(axis=0) / total
    return BoundingBox.from_array(mean)


def rbr_fuse(
    gt_box: BoundingBox,
    theta_prev: BoundingBox,
    topk: list[Candidate],
    w1: float,
    prev_max_score: float,
) -> BoundingBox:
    """Fuse gt, previous target, and the top-k prediction ensemble.

    Weights: w1 fixed for the gt, w2 = max previous-epoch top-k score
    (0 before any), w3 = max current top-k score. Normalized by the weight
    sum so the result stays a convex combination of its sources.
    """
    if w1 <= 0:
        raise ValueError("w1 must be positive")
    if not topk:
        return theta_prev
    w2 = float(prev_max_score)
    w3 = max(c.score for c in topk)
    bbar = ensemble_box([c.box for c in topk], [c.score for c in topk])
    total = w1 + w2 + w3
    fused = (w1 * gt_box.as_array() + w2 * theta_prev.as_array() + w3 * bbar.as_array()) / total
    return BoundingBox.from_array(fused)


@dataclass
class RegeneratedTarget:
    gt_index: int
    box: BoundingBox
    epoch: int


class RbrState:
    """Per-gt fused regression targets maintained across epochs.

    Keyed by (image_id, annotation_id); initialized lazily to the (possibly
    noisy) gt box at first sight.
    """

    def __init__(self, w1: float = 1.0, k: int = 4):
        if w1 <= 0:
            raise ValueError("w1 must be positive")
        self.w1 = w1
        self.k = k
        self.targets: dict[tuple[int, int], RegeneratedTarget] = {}
        self.prev_max_score: dict[tuple[int, int], float] = {}

    def target_for(self, image_id: int, ann_id: int, gt_box: BoundingBox) -> BoundingBox:
        key = (image_id, ann_id)
        if key not in self.targets:
            self.targets[key] = RegeneratedTarget(gt_index=ann_id, box=gt_box, epoch=0)
        return self.targets[key].box

    def refresh(
        self,
        image_id: int,
        ann_id: int,
        gt_box: BoundingBox,
        candidates: list[Candidate],
        epoch: int,
    ) -> BoundingBox:
        """End-of-epoch fusion for one gt; no candidates carries theta over."""
        key = (image_id, ann_id)
        theta_prev = self.target_for(image_id, ann_id, gt_box)
        topk = select_topk(candidates, self.k)
        if topk:
            fused = rbr_fuse(gt_box, theta_prev, topk, self.w1, self.prev_max_score.get(key, 0.0))
            self.prev_max_score[key] = max(c.score for c in topk)
        else:
            fused = theta_prev
        self.targets[key] = RegeneratedTarget(gt_index=ann_id, box=fused, epoch=epoch)
        return fused

    def to_json_dict(self) -> dict:
        return {
            f"{img},{ann}": {"epoch": t.epoch, "box": list(t.box.as_array())}
            for (img, ann), t in self.targets.items()
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))
