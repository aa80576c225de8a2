"""Training loop wiring the denoising components into the dense detector.

Per epoch, per image: forward, assign locations (against regenerated box
targets when box regeneration is on), compute per-sample loss weights
(trend reweighting, class-shift filtering), step the optimizer, and record
scores into the trend registry. After each epoch the box targets are
refreshed from the epoch's top-k predictions.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .assign import LocationGrid, assign_samples, make_grid
from .boxes import BoundingBox
from .confusion import DynamicConfidenceMatrix, SampleObservation, noisy_factor, update_from_image
from .dataset import DetDataset
from .detector import DetectorConfig, TinyDetector, decode_boxes, focal_loss, iou_loss
from .scenes import SceneConfig, render_image
from .trend import (
    Candidate,
    RbrState,
    SampleKey,
    TrendRegistry,
    cleanliness_weights,
    negative_weight,
    positive_weight,
    primacy,
)


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; carries a diagnostic dump of the last batch."""

    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


@dataclass
class TrainResult:
    model: TinyDetector
    metrics: list[dict]
    registry: TrendRegistry
    rbr: RbrState
    dcm: DynamicConfidenceMatrix
    grid: LocationGrid


def _target_ltrb(grid: LocationGrid, assign: np.ndarray, boxes: list[BoundingBox]) -> np.ndarray:
    """Side-distance targets for positive locations (others zero).

    Locations assigned to a box they fall outside of get clamped, slightly
    truncated targets rather than negative distances.
    """
    out = np.zeros((len(grid), 4))
    pos = np.nonzero(assign >= 0)[0]
    for loc in pos:
        b = boxes[assign[loc]]
        x, y = grid.xs[loc], grid.ys[loc]
        out[loc] = [x - b.x_min, y - b.y_min, b.x_max - x, b.y_max - y]
    return np.clip(out, 0.25, None)


def _centerness_target(ltrb: np.ndarray) -> np.ndarray:
    """Location quality: 1 at the box center, falling toward the edges."""
    l, t, r, b = ltrb.T
    return np.sqrt(
        (np.minimum(l, r) / np.maximum(l, r)) * (np.minimum(t, b) / np.maximum(t, b))
    )


def _tlr_weights(
    assign: np.ndarray,
    scores: np.ndarray,
    gt_classes: list[int],
    registry: TrendRegistry,
    grid: LocationGrid,
    image_id: int,
    epoch: int,
    alpha: float,
    normalize: bool = True,
    neg_threshold: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """(positive weights, negative weights), both over all locations.

    Positive entries are the cleanliness/primacy blend for assigned
    locations and 0 elsewhere; negative entries are the trend down-weights
    for background locations and 0 elsewhere. With normalize on, each gt's
    positive weights are rescaled to mean 1 so the trend only redistributes
    loss within the gt instead of also shrinking its total gradient.
    Negatives scoring at or below neg_threshold keep weight 1: the trend
    down-weight is meant for confident detections that look like
    missing-label objects, not for ordinary background.
    """
    n_loc = len(grid)
    w_pos = np.zeros(n_loc)
    w_neg = np.zeros(n_loc)

    for i in range(len(gt_classes)):
        locs = np.nonzero(assign == i)[0]
        if locs.size == 0:
            continue
        s_cur = scores[locs, gt_classes[i]]
        r = primacy(s_cur)
        if epoch == 0:
            w = r  # bootstrap: no trend yet
        else:
            s_prev = np.array(
                [
                    prev if (prev := registry.previous_score(image_id, grid.keys[l], epoch)) is not None
                    else s_cur[j]
                    for j, l in enumerate(locs)
                ]
            )
            c = cleanliness_weights(s_prev, s_cur)
            w = positive_weight(c, r, alpha)
        if normalize and w.sum() > 0:
            w = w * (len(locs) / w.sum())
        w_pos[locs] = w

    neg = np.nonzero(assign < 0)[0]
    if epoch == 0:
        w_neg[neg] = 1.0
    else:
        for l in neg:
            s_cur = scores[l].max()
            if s_cur <= neg_threshold:
                w_neg[l] = 1.0
                continue
            prev = registry.previous_score(image_id, grid.keys[l], epoch)
            w_neg[l] = 1.0 if prev is None else negative_weight(prev, s_cur)
    return w_pos, w_neg


def _clc_weights(
    assign: np.ndarray,
    scores: np.ndarray,
    gt_classes: list[int],
    dcm: DynamicConfidenceMatrix,
    progress: float,
    warmup: float,
    consensus: bool = True,
    floor: float = 0.0,
) -> np.ndarray:
    """Per-location filter weights (0 = drop) for the positives of one image.

    With consensus on, the per-location noisy factors of each gt are pooled
    and the gt's locations are dropped together only when a strict majority
    flag it. A wrong label is a property of the annotation, not of single
    locations, and pooling suppresses the variance of per-location flags.
    """
    w = np.ones(len(assign))
    if progress < warmup:
        return w
    factors: dict[int, list[tuple[int, int]]] = {}
    for loc in np.nonzero(assign >= 0)[0]:
        obs = SampleObservation(scores[loc], gt_classes[assign[loc]])
        d = noisy_factor(obs, dcm, floor)
        if consensus:
            factors.setdefault(int(assign[loc]), []).append((loc, d))
        else:
            w[loc] = d
    if consensus:
        for pairs in factors.values():
            n_flagged = sum(1 for _, d in pairs if d == 0)
            if 2 * n_flagged > len(pairs):
                for loc, _ in pairs:
                    w[loc] = 0.0
    return w


def weighted_image_loss(
    logits_i: torch.Tensor,
    ltrb_i: torch.Tensor,
    ctr_i: torch.Tensor,
    assign: np.ndarray,
    gt_classes: list[int],
    targets: list[BoundingBox],
    w_loc: np.ndarray,
    grid: LocationGrid,
    det_cfg: DetectorConfig,
    dtype: torch.dtype,
) -> tuple[torch.Tensor, torch.Tensor, int]:
    """Composed weighted loss for one image with fixed per-location weights.

    Classification is the focal loss scaled by w_loc (the merged trend /
    filtering / background weights); regression is IoU loss plus centerness
    BCE on positives. Returns (cls_sum, reg_sum, n_pos) before any
    normalization. Weights are constants with respect to the gradient.
    """
    pos = np.nonzero(assign >= 0)[0]
    onehot = np.zeros((len(grid), det_cfg.num_classes))
    if len(pos):
        onehot[pos, [gt_classes[g] for g in assign[pos]]] = 1.0
    fl = focal_loss(
        logits_i,
        torch.as_tensor(onehot, dtype=dtype),
        det_cfg.focal_gamma,
        det_cfg.focal_alpha,
    ).sum(dim=1)
    cls_sum = (fl * torch.as_tensor(w_loc, dtype=dtype)).sum()

    reg_sum = logits_i.sum() * 0.0
    if len(pos):
        t_ltrb = _target_ltrb(grid, assign, targets)
        reg_sum = reg_sum + iou_loss(ltrb_i[pos], torch.as_tensor(t_ltrb[pos], dtype=dtype)).sum()
        ctr_target = _centerness_target(t_ltrb[pos])
        reg_sum = reg_sum + torch.nn.functional.binary_cross_entropy_with_logits(
            ctr_i[pos], torch.as_tensor(ctr_target, dtype=dtype), reduction="sum"
        )
    return cls_sum, reg_sum, len(pos)


def train(
    dataset: DetDataset,
    scene_cfg: SceneConfig,
    det_cfg: DetectorConfig,
    dtype: torch.dtype = torch.float32,
) -> TrainResult:
    """Train the detector on (possibly noisy) annotations; deterministic in seed."""
    torch.manual_seed(det_cfg.seed)
    model = TinyDetector(det_cfg).to(dtype)
    grid = make_grid(det_cfg.image_size, det_cfg.strides)
    optimizer = torch.optim.SGD(
        model.parameters(),
        lr=det_cfg.lr,
        momentum=det_cfg.momentum,
        weight_decay=det_cfg.weight_decay,
    )
    milestones = sorted(int(f * det_cfg.epochs) for f in det_cfg.lr_decay_epochs)
    decay = torch.optim.lr_scheduler.MultiStepLR(optimizer, milestones=milestones, gamma=0.1)
    if det_cfg.lr_warmup_epochs > 0:
        warm = torch.optim.lr_scheduler.LinearLR(
            optimizer, start_factor=1.0 / (det_cfg.lr_warmup_epochs + 1),
            total_iters=det_cfg.lr_warmup_epochs,
        )
        scheduler = torch.optim.lr_scheduler.ChainedScheduler([warm, decay])
    else:
        scheduler = decay

    registry = TrendRegistry()
    rbr = RbrState(w1=det_cfg.rbr_w1, k=det_cfg.rbr_k)
    dcm = DynamicConfidenceMatrix(det_cfg.num_classes, det_cfg.clc_period)

    image_ids = [im.id for im in dataset.images]
    pixels = {i: torch.as_tensor(render_image(scene_cfg, i), dtype=dtype) for i in image_ids}
    anns_by_image = {i: dataset.annotations_of(i) for i in image_ids}

    metrics: list[dict] = []
    for epoch in range(det_cfg.epochs):
        progress = epoch / det_cfg.epochs
        rbr_active = det_cfg.use_rbr and progress >= det_cfg.rbr_warmup
        model.train()

        # regression/assignment targets for this epoch
        targets_by_image: dict[int, list[BoundingBox]] = {}
        for img_id in image_ids:
            anns = anns_by_image[img_id]
            if rbr_active:
                targets_by_image[img_id] = [rbr.target_for(img_id, a.id, a.box) for a in anns]
            else:
                targets_by_image[img_id] = [a.box for a in anns]
        assigns = {
            img_id: assign_samples(targets_by_image[img_id], grid) if anns_by_image[img_id]
            else np.full(len(grid), -1, dtype=np.int64)
            for img_id in image_ids
        }

        order = list(image_ids)
        np.random.default_rng([det_cfg.seed, epoch]).shuffle(order)

        rbr_candidates: dict[tuple[int, int], list[Candidate]] = {}
        epoch_stats = {"cls_loss": 0.0, "reg_loss": 0.0, "n_pos": 0, "n_filtered": 0}
        for start in range(0, len(order), det_cfg.batch_size):
            batch = order[start:start + det_cfg.batch_size]
            x = torch.stack([pixels[i] for i in batch])[:, None]
            logits, ltrb, ctr = model(x)
            scores_np = torch.sigmoid(logits).detach().cpu().numpy().astype(np.float64)
            if not np.all(np.isfinite(scores_np)):
                raise TrainingDiverged(
                    f"non-finite model outputs at epoch {epoch}",
                    {"epoch": epoch, "batch_images": batch,
                     "cls_loss": float("nan"), "reg_loss": float("nan")},
                )

            total_cls = logits.sum() * 0.0
            total_reg = logits.sum() * 0.0
            total_pos = 0
            for bi, img_id in enumerate(batch):
                anns = anns_by_image[img_id]
                gt_classes = [a.class_id for a in anns]
                assign = assigns[img_id]
                scores = scores_np[bi]
                pos = np.nonzero(assign >= 0)[0]

                # per-sample weights, constants w.r.t. the gradient
                if det_cfg.use_tlr and anns and progress >= det_cfg.tlr_warmup:
                    w_pos, w_neg = _tlr_weights(
                        assign, scores, gt_classes, registry, grid, img_id, epoch,
                        det_cfg.tlr_alpha, det_cfg.tlr_normalize,
                        neg_threshold=det_cfg.score_threshold,
                    )
                else:
                    w_pos = np.zeros(len(grid))
                    w_pos[pos] = 1.0
                    w_neg = np.zeros(len(grid))
                    w_neg[assign < 0] = 1.0
                if det_cfg.use_clc and anns:
                    w_clc = _clc_weights(
                        assign, scores, gt_classes, dcm, progress,
                        det_cfg.clc_warmup, det_cfg.clc_consensus,
                        det_cfg.clc_floor,
                    )
                    epoch_stats["n_filtered"] += int((w_clc[pos] == 0).sum())
                else:
                    w_clc = np.ones(len(grid))

                w_loc = np.where(assign >= 0, w_pos * w_clc, w_neg)
                cls_sum, reg_sum, n_pos = weighted_image_loss(
                    logits[bi], ltrb[bi], ctr[bi], assign, gt_classes,
                    targets_by_image[img_id], w_loc, grid, det_cfg, dtype,
                )
                total_cls = total_cls + cls_sum
                total_reg = total_reg + reg_sum
                total_pos += n_pos

                # bookkeeping on detached scores
                if det_cfg.use_clc and anns:
                    update_from_image(
                        dcm,
                        [SampleObservation(scores[l], gt_classes[assign[l]]) for l in pos],
                    )
                loc_scores = {}
                loc_assign = {}
                for l in range(len(grid)):
                    key = grid.keys[l]
                    if assign[l] >= 0:
                        loc_scores[key] = float(scores[l, gt_classes[assign[l]]])
                        loc_assign[key] = int(assign[l])
                    else:
                        loc_scores[key] = float(scores[l].max())
                        loc_assign[key] = None
                registry.record_epoch(img_id, epoch, loc_assign, loc_scores)

                if rbr_active and anns:
                    decoded = decode_boxes(grid, ltrb[bi].detach().cpu().numpy())
                    for l in pos:
                        a = anns[assign[l]]
                        x1, y1, x2, y2 = decoded[l]
                        if x2 <= x1 or y2 <= y1:
                            continue
                        rbr_candidates.setdefault((img_id, a.id), []).append(
                            Candidate(
                                key=grid.keys[l],
                                box=BoundingBox.from_corner(x1, y1, x2 - x1, y2 - y1),
                                score=float(scores[l, a.class_id]),
                            )
                        )

            denom = max(total_pos, 1)
            loss = total_cls / denom + total_reg / denom
            if not torch.isfinite(loss):
                dump = {
                    "epoch": epoch,
                    "batch_images": batch,
                    "cls_loss": float(total_cls.detach()),
                    "reg_loss": float(total_reg.detach()),
                }
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", dump)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_stats["cls_loss"] += float(total_cls.detach()) / denom
            epoch_stats["reg_loss"] += float(total_reg.detach()) / denom
            epoch_stats["n_pos"] += total_pos

        if rbr_active:
            for img_id in image_ids:
                for a in anns_by_image[img_id]:
                    rbr.refresh(img_id, a.id, a.box, rbr_candidates.get((img_id, a.id), []), epoch)

        scheduler.step()
        metrics.append({
            "epoch": epoch, **epoch_stats, "lr": scheduler.get_last_lr()[0],
            "dcm_diag_mean": float(np.mean(np.diag(dcm.snapshot()))),
        })

    return TrainResult(model=model, metrics=metrics, registry=registry, rbr=rbr, dcm=dcm, grid=grid)


def save_checkpoint(result: TrainResult, det_cfg: DetectorConfig, path) -> None:
    torch.save({"state_dict": result.model.state_dict(), "config": asdict(det_cfg)}, path)


def load_checkpoint(path) -> TinyDetector:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    cfg_dict = dict(blob["config"])
    for key in ("strides", "lr_decay_epochs", "objects_per_image"):
        if key in cfg_dict and isinstance(cfg_dict[key], list):
            cfg_dict[key] = tuple(cfg_dict[key])
    cfg = DetectorConfig(**cfg_dict)
    model = TinyDetector(cfg)
    model.load_state_dict(blob["state_dict"])
    return model
