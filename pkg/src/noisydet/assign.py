"""Gaussian center-prior label assignment for dense head locations.

A location is positive for the gt with the highest prior
exp(-d^2 / (2 sigma^2)), sigma scaling with the gt's size, subject to the
prior clearing a threshold; every gt additionally claims at least its
nearest location so no gt is left without supervision.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import BoundingBox
from .trend import SampleKey


@dataclass(frozen=True)
class LocationGrid:
    """All head locations of one image, concatenated across feature levels."""

    strides: tuple[int, ...]
    keys: tuple[SampleKey, ...]
    xs: np.ndarray  # pixel x of each location
    ys: np.ndarray
    level_of: np.ndarray

    def __len__(self) -> int:
        return len(self.keys)


def make_grid(image_size: int, strides: tuple[int, ...]) -> LocationGrid:
    keys, xs, ys, lv = [], [], [], []
    for level, s in enumerate(strides):
        n = image_size // s
        for gy in range(n):
            for gx in range(n):
                keys.append(SampleKey(level, gy, gx))
                xs.append(s * gx + s / 2.0)
                ys.append(s * gy + s / 2.0)
                lv.append(level)
    return LocationGrid(
        strides=tuple(strides),
        keys=tuple(keys),
        xs=np.asarray(xs, dtype=np.float64),
        ys=np.asarray(ys, dtype=np.float64),
        level_of=np.asarray(lv, dtype=np.int64),
    )


def assign_samples(
    gt_boxes: list[BoundingBox],
    grid: LocationGrid,
    sigma_scale: float = 0.6,
    prior_threshold: float = 0.25,
) -> np.ndarray:
    """Per-location assignment: gt index, or -1 for background.

    Ties on the prior go to the smaller gt index. Guarantees every gt at
    least one positive (its nearest free location).
    """
    n_loc = len(grid)
    if n_loc == 0:
        raise ValueError("empty location grid")
    assign = np.full(n_loc, -1, dtype=np.int64)
    if not gt_boxes:
        return assign

    cx = np.array([b.cx for b in gt_boxes])
    cy = np.array([b.cy for b in gt_boxes])
    sigma = sigma_scale * np.array([np.sqrt(b.w * b.h) for b in gt_boxes])
    d2 = (grid.xs[:, None] - cx[None, :]) ** 2 + (grid.ys[:, None] - cy[None, :]) ** 2
    prior = np.exp(-d2 / (2.0 * sigma[None, :] ** 2))

    best = np.argmax(prior, axis=1)  # first max wins ties -> smaller gt index
    best_prior = prior[np.arange(n_loc), best]
    assign[best_prior > prior_threshold] = best[best_prior > prior_threshold]

    # every gt claims at least its nearest location, without stealing
    # another gt's sole positive
    claimed: set[int] = set()
    counts = np.bincount(assign[assign >= 0], minlength=len(gt_boxes))
    for i in range(len(gt_boxes)):
        if counts[i] > 0:
            continue
        order = np.argsort(d2[:, i], kind="stable")
        for loc in order:
            loc = int(loc)
            holder = int(assign[loc])
            if loc in claimed or (holder >= 0 and counts[holder] == 1):
                continue
            if holder >= 0:
                counts[holder] -= 1
            assign[loc] = i
            counts[i] += 1
            claimed.add(loc)
            break
    return assign
