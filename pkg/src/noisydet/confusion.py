"""Class-aware label correction for class-shifted annotations.

A C-by-C dynamic confidence matrix tracks, per annotated class (row), the
exponentially-averaged prediction profile of that class's positive samples.
Rows are the label space, columns the prediction space. A positive sample
is flagged noisy when some other class outscores its label both absolutely
and relative to the matrix's learned per-class confidence levels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class SampleObservation:
    """One positive sample: per-class scores (post-sigmoid) and its gt label."""

    prediction: np.ndarray
    gt_class: int

    def __post_init__(self):
        self.prediction = np.asarray(self.prediction, dtype=np.float64)


@dataclass
class ConfidencePillar:
    """Mean prediction vector of one image's positives of one gt class."""

    class_y: int
    mean_prediction: np.ndarray


class DynamicConfidenceMatrix:
    """EWMA-updated class confusion state.

    The update weight is beta = 1 - 1/T, so a row is roughly the average of
    the last T per-image pillars of its class. Initialized to the identity:
    each class starts out trusted as itself, which keeps early filtering
    conservative.
    """

    def __init__(self, num_classes: int, period: int = 100):
        if num_classes < 2:
            raise ValueError("need at least 2 classes")
        if period < 1:
            raise ValueError("period must be >= 1")
        self.num_classes = num_classes
        self.period = period
        self.beta = 1.0 - 1.0 / period
        self.values = np.eye(num_classes, dtype=np.float64)
        self.rows_touched = np.zeros(num_classes, dtype=np.int64)

    def update(self, pillar: ConfidencePillar) -> None:
        """EWMA-blend one row toward the pillar; only row class_y changes."""
        y = pillar.class_y
        c = np.asarray(pillar.mean_prediction, dtype=np.float64)
        if c.shape != (self.num_classes,):
            raise ValueError(f"pillar has shape {c.shape}, expected ({self.num_classes},)")
        self.values[y] = self.beta * self.values[y] + (1.0 - self.beta) * c
        self.rows_touched[y] += 1

    def snapshot(self) -> np.ndarray:
        return self.values.copy()

    def to_json_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "period": self.period,
            "values": self.values.tolist(),
            "rows_touched": self.rows_touched.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DynamicConfidenceMatrix":
        dcm = cls(d["num_classes"], d["period"])
        dcm.values = np.asarray(d["values"], dtype=np.float64)
        dcm.rows_touched = np.asarray(d["rows_touched"], dtype=np.int64)
        return dcm

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))

    @classmethod
    def load(cls, path) -> "DynamicConfidenceMatrix":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def confidence_pillar(observations: list[SampleObservation], class_y: int) -> ConfidencePillar | None:
    """Mean prediction of the observations labelled class_y; None if absent."""
    preds = [o.prediction for o in observations if o.gt_class == class_y]
    if not preds:
        return None
    return ConfidencePillar(class_y=class_y, mean_prediction=np.mean(preds, axis=0))


def update_from_image(dcm: DynamicConfidenceMatrix, observations: list[SampleObservation]) -> None:
    """Fold one image's positives into the matrix, one pillar per gt class present."""
    for y in sorted({o.gt_class for o in observations}):
        pillar = confidence_pillar(observations, y)
        if pillar is not None:
            dcm.update(pillar)


def noisy_factor(obs: SampleObservation, dcm: DynamicConfidenceMatrix,
                 floor: float = 0.0) -> int:
    """0 if the sample looks class-shifted, else 1.

    A sample is noisy iff some class i outscores the label (p_i > p_y),
    exceeds the label row's learned confidence in i (p_i > v[y, i]), and
    exceeds class i's own learned self-confidence (p_i > v[i, i]).
    All comparisons strict, so ties never flag. A nonzero floor additionally
    requires p_i > floor: an undertrained model has low learned confidences,
    which would otherwise let weak spurious scores flag clean samples.
    """
    p = obs.prediction
    y = obs.gt_class
    v = dcm.values
    py = p[y]
    for i in range(dcm.num_classes):
        if p[i] > py and p[i] > v[y, i] and p[i] > v[i, i] and p[i] > floor:
            return 0
    return 1


def clc_loss_weights(
    positives: list[SampleObservation],
    dcm: DynamicConfidenceMatrix,
    progress: float,
    warmup: float = 0.5,
) -> np.ndarray:
    """Per-positive {0,1} classification-loss weights.

    Filtering only starts after the warm-up fraction of training; before
    that the matrix keeps updating but every weight is 1. Negative samples
    are never filtered.
    """
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must be in [0, 1], got {progress}")
    if progress < warmup:
        return np.ones(len(positives))
    return np.array([noisy_factor(o, dcm) for o in positives], dtype=np.float64)
