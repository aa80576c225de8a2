"""Average-precision evaluation (101-point interpolation, IoU 0.5:0.95).

Matching is greedy, highest detection score first, one match per gt.
Size-bucketed AP uses side-length buckets scaled to 128 px scenes:
very-tiny <= 8, tiny 8-16, small 16-32, medium > 32. Out-of-bucket gts act
as ignore regions (detections landing on them are neither TP nor FP).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import BoundingBox, iou
from .dataset import DetDataset

IOU_THRESHOLDS = tuple(np.round(np.arange(0.5, 1.0, 0.05), 2))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
SIZE_BUCKETS = {"vt": (0.0, 8.0), "t": (8.0, 16.0), "s": (16.0, 32.0), "m": (32.0, float("inf"))}


@dataclass(frozen=True)
class DetRecord:
    image_id: int
    class_id: int
    score: float
    box: BoundingBox


@dataclass
class EvalResult:
    map: float
    ap50: float
    ap75: float
    ap_vt: float
    ap_t: float
    ap_s: float
    ap_m: float

    def to_json_dict(self) -> dict:
        return {
            "mAP": self.map, "AP50": self.ap50, "AP75": self.ap75,
            "AP_vt": self.ap_vt, "AP_t": self.ap_t, "AP_s": self.ap_s, "AP_m": self.ap_m,
        }


def _side(box: BoundingBox) -> float:
    return float(np.sqrt(box.area))


class _ClassEval:
    """One class's detections with det-gt IoUs precomputed once.

    AP at any (threshold, bucket) combination is then a cheap greedy pass.
    """

    def __init__(self, dets: list[DetRecord], gts: list[tuple[int, BoundingBox]]):
        self.n_gt_total = len(gts)
        self.order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].image_id, i))
        self.det_side = np.array([_side(dets[i].box) for i in self.order])
        self.gt_side = np.array([_side(b) for _, b in gts])
        gt_by_image: dict[int, list[int]] = {}
        for j, (img, _) in enumerate(gts):
            gt_by_image.setdefault(img, []).append(j)
        # per det (in score order): [(gt index, iou)] sorted by -iou then gt index
        self.cand: list[list[tuple[int, float]]] = []
        for i in self.order:
            d = dets[i]
            pairs = []
            for j in gt_by_image.get(d.image_id, []):
                v = iou(d.box, gts[j][1])
                if v > 0:
                    pairs.append((j, v))
            pairs.sort(key=lambda p: (-p[1], p[0]))
            self.cand.append(pairs)

    def ap(self, thr: float, bucket: tuple[float, float] | None) -> float | None:
        if bucket is None:
            in_bucket = np.ones(self.n_gt_total, dtype=bool)
        else:
            in_bucket = (self.gt_side >= bucket[0]) & (self.gt_side < bucket[1])
        n_gt = int(in_bucket.sum())
        if n_gt == 0:
            if bucket is not None:
                return None  # no gts of this class in the size bucket
            return None if not self.cand else 0.0
        matched = np.zeros(self.n_gt_total, dtype=bool)
        tp, fp = [], []
        for di, pairs in enumerate(self.cand):
            best = -1
            for j, v in pairs:
                if v >= thr and in_bucket[j] and not matched[j]:
                    best = j
                    break
            if best >= 0:
                matched[best] = True
                tp.append(1.0)
                fp.append(0.0)
                continue
            if bucket is not None:
                # matched an ignore gt, or itself out of bucket: drop from scoring
                if any(v >= thr and not in_bucket[j] for j, v in pairs):
                    continue
                if not (bucket[0] <= self.det_side[di] < bucket[1]):
                    continue
            tp.append(0.0)
            fp.append(1.0)
        if not tp:
            return 0.0
        tp_c = np.cumsum(tp)
        fp_c = np.cumsum(fp)
        recall = tp_c / n_gt
        precision = tp_c / (tp_c + fp_c)
        # 101-point interpolation: max precision at recall >= r
        best_prec = np.maximum.accumulate(precision[::-1])[::-1]
        idx = np.searchsorted(recall, RECALL_POINTS, side="left")
        ap = np.where(idx < len(recall), best_prec[np.minimum(idx, len(recall) - 1)], 0.0)
        return float(ap.mean())


def compute_ap(
    detections: list[DetRecord],
    clean_gts: DetDataset,
    iou_thresholds: tuple[float, ...] = IOU_THRESHOLDS,
) -> EvalResult:
    """Class-mean then threshold-mean AP against clean annotations.

    A class with no gts and no detections is excluded from the class mean;
    no gts with detections scores 0.
    """
    class_ids = [cid for cid, _ in clean_gts.categories]
    evals: dict[int, _ClassEval] = {}
    for c in class_ids:
        dets = [d for d in detections if d.class_id == c]
        gts = [(a.image_id, a.box) for a in clean_gts.annotations if a.class_id == c]
        evals[c] = _ClassEval(dets, gts)

    def mean_ap(thr: float, bucket) -> float | None:
        vals = [v for c in class_ids if (v := evals[c].ap(thr, bucket)) is not None]
        return float(np.mean(vals)) if vals else None

    overall = {thr: mean_ap(thr, None) for thr in iou_thresholds}
    usable = [v for v in overall.values() if v is not None]
    m = float(np.mean(usable)) if usable else 0.0

    def bucket_map(rng) -> float:
        vals = [v for thr in iou_thresholds if (v := mean_ap(thr, rng)) is not None]
        return float(np.mean(vals)) if vals else 0.0

    return EvalResult(
        map=m,
        ap50=overall.get(0.5) or 0.0,
        ap75=overall.get(0.75) or 0.0,
        ap_vt=bucket_map(SIZE_BUCKETS["vt"]),
        ap_t=bucket_map(SIZE_BUCKETS["t"]),
        ap_s=bucket_map(SIZE_BUCKETS["s"]),
        ap_m=bucket_map(SIZE_BUCKETS["m"]),
    )


def evaluate_model(model, val_ds: DetDataset, scene_cfg, grid=None) -> EvalResult:
    """Run inference over a clean validation set and score it."""
    from .detector import predict
    from .scenes import render_image

    dets: list[DetRecord] = []
    for im in val_ds.images:
        for d in predict(model, render_image(scene_cfg, im.id), grid=grid):
            dets.append(DetRecord(image_id=im.id, class_id=d.class_id, score=d.score, box=d.box))
    return compute_ap(dets, val_ds)
