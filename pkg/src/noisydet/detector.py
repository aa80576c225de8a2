"""A small anchor-free one-stage detector with a dense per-location head.

Desk-scale by design: a few conv stages, two feature levels, per-location
class scores (independent sigmoids, focal loss) and box offsets
(l, t, r, b distances to the box sides, IoU loss).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .assign import LocationGrid, make_grid
from .boxes import BoundingBox


@dataclass(frozen=True)
class DetectorConfig:
    num_classes: int = 6
    image_size: int = 128
    strides: tuple[int, ...] = (4, 8)
    channels: int = 32
    epochs: int = 12
    batch_size: int = 8
    lr: float = 0.05
    # linear lr ramp over the first epochs; tames unstable early updates
    # that otherwise leave some seeds permanently behind
    lr_warmup_epochs: int = 2
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay_epochs: tuple[float, float] = (8 / 12, 11 / 12)  # fractions of total
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    score_threshold: float = 0.05
    nms_iou: float = 0.5
    max_detections: int = 3000
    seed: int = 0
    # denoising toggles and their knobs
    use_clc: bool = False
    use_tlr: bool = False
    use_rbr: bool = False
    # long EWMA memory keeps the identity-initialized diagonal high during
    # early training, so the filter stays conservative until the prediction
    # profiles have actually stabilized
    clc_period: int = 500
    clc_warmup: float = 0.25
    # pool per-location noisy factors per annotation; a strict majority of
    # flags drops the whole annotation's positives (label noise is an
    # annotation property, and pooling de-noises per-location flags)
    clc_consensus: bool = True
    # absolute score a competing class must clear before it can flag a
    # sample; guards against weak models whose low learned confidences set
    # trivially low flag bars (value calibrated below typical true-class
    # scores of a converged model)
    clc_floor: float = 0.25
    # cleanliness/primacy blend for positive trend weights. Defaults to pure
    # primacy: at this training scale epoch-over-epoch score trends are
    # dominated by optimization noise, and cleanliness-weighted runs
    # measurably underperform. Raise toward 0.5 for longer schedules.
    tlr_alpha: float = 0.0
    # fraction of training before trend weights kick in (scores of the
    # first epochs are still settling, so their trends are noise)
    tlr_warmup: float = 0.25
    # rescale each gt's positive weights to mean 1: the trend weights then
    # redistribute the loss within a gt without shrinking its total gradient
    tlr_normalize: bool = True
    rbr_k: int = 4
    rbr_w1: float = 1.0
    # fraction of training before regenerated targets replace the raw gt
    # (early predictions are too weak to fuse from)
    rbr_warmup: float = 0.25


class ConvBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: int = 1):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1)
        self.norm = nn.BatchNorm2d(c_out)

    def forward(self, x):
        return F.relu(self.norm(self.conv(x)))


class TinyDetector(nn.Module):
    """Backbone to strides 4 and 8, one head per level."""

    def __init__(self, cfg: DetectorConfig):
        super().__init__()
        if tuple(cfg.strides) != (4, 8):
            raise ValueError("this backbone emits strides (4, 8)")
        c = cfg.channels
        self.cfg = cfg
        self.stem = nn.Sequential(ConvBlock(1, c // 2), ConvBlock(c // 2, c, stride=2))
        self.stage4 = nn.Sequential(ConvBlock(c, c, stride=2), ConvBlock(c, c))
        self.stage8 = nn.Sequential(ConvBlock(c, c, stride=2), ConvBlock(c, c))
        self.heads = nn.ModuleList()
        for _ in cfg.strides:
            head = nn.ModuleDict(
                {
                    "tower": ConvBlock(c, c),
                    "cls": nn.Conv2d(c, cfg.num_classes, 3, padding=1),
                    "reg": nn.Conv2d(c, 4, 3, padding=1),
                    "ctr": nn.Conv2d(c, 1, 3, padding=1),
                }
            )
            self.heads.append(head)
        # bias init so initial foreground probability is low (focal-loss idiom)
        for head in self.heads:
            nn.init.constant_(head["cls"].bias, -4.0)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns (cls_logits, ltrb, centerness_logits) flattened over locations.

        cls_logits: (B, L, C); ltrb: (B, L, 4) positive side distances in px;
        centerness_logits: (B, L).
        """
        f4 = self.stage4(self.stem(x))
        f8 = self.stage8(f4)
        logits, offsets, centers = [], [], []
        for head, feat, stride in zip(self.heads, (f4, f8), self.cfg.strides):
            t = head["tower"](feat)
            cl = head["cls"](t)
            rg = F.softplus(head["reg"](t)) * stride
            ct = head["ctr"](t)
            b, c, hh, ww = cl.shape
            logits.append(cl.permute(0, 2, 3, 1).reshape(b, hh * ww, c))
            offsets.append(rg.permute(0, 2, 3, 1).reshape(b, hh * ww, 4))
            centers.append(ct.permute(0, 2, 3, 1).reshape(b, hh * ww))
        return torch.cat(logits, dim=1), torch.cat(offsets, dim=1), torch.cat(centers, dim=1)


def decode_boxes(grid: LocationGrid, ltrb: np.ndarray) -> np.ndarray:
    """Location + side distances -> (L, 4) boxes in x1,y1,x2,y2."""
    x1 = grid.xs - ltrb[:, 0]
    y1 = grid.ys - ltrb[:, 1]
    x2 = grid.xs + ltrb[:, 2]
    y2 = grid.ys + ltrb[:, 3]
    return np.stack([x1, y1, x2, y2], axis=1)


def focal_loss(logits: torch.Tensor, targets: torch.Tensor,
               gamma: float = 2.0, alpha: float = 0.25) -> torch.Tensor:
    """Sigmoid focal loss, elementwise (no reduction)."""
    p = torch.sigmoid(logits)
    ce = F.binary_cross_entropy_with_logits(logits, targets, reduction="none")
    p_t = p * targets + (1 - p) * (1 - targets)
    a_t = alpha * targets + (1 - alpha) * (1 - targets)
    return a_t * (1 - p_t) ** gamma * ce


def iou_loss(pred_ltrb: torch.Tensor, target_ltrb: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    """-log IoU between side-distance parameterized boxes sharing a center location."""
    pl, pt, pr, pb = pred_ltrb.unbind(-1)
    tl, tt, tr, tb = target_ltrb.unbind(-1)
    area_p = (pl + pr) * (pt + pb)
    area_t = (tl + tr) * (tt + tb)
    iw = torch.minimum(pl, tl) + torch.minimum(pr, tr)
    ih = torch.minimum(pt, tt) + torch.minimum(pb, tb)
    inter = iw.clamp(min=0) * ih.clamp(min=0)
    union = area_p + area_t - inter
    return -torch.log((inter + eps) / (union + eps))


def nms(boxes_xyxy: np.ndarray, scores: np.ndarray, iou_threshold: float) -> list[int]:
    """Greedy non-maximum suppression; returns kept indices, score-descending."""
    order = np.argsort(-scores, kind="stable")
    keep: list[int] = []
    suppressed = np.zeros(len(scores), dtype=bool)
    x1, y1, x2, y2 = boxes_xyxy.T
    areas = (x2 - x1) * (y2 - y1)
    for idx in order:
        if suppressed[idx]:
            continue
        keep.append(int(idx))
        ix = np.minimum(x2[idx], x2) - np.maximum(x1[idx], x1)
        iy = np.minimum(y2[idx], y2) - np.maximum(y1[idx], y1)
        inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
        union = areas[idx] + areas - inter
        ious = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
        suppressed |= ious > iou_threshold
        suppressed[idx] = True
    return keep


@dataclass
class Detection:
    box: BoundingBox
    class_id: int
    score: float


def predict(model: TinyDetector, image: np.ndarray, grid: LocationGrid | None = None) -> list[Detection]:
    """Score-thresholded, class-wise NMS'd detections for one image."""
    cfg = model.cfg
    if grid is None:
        grid = make_grid(cfg.image_size, cfg.strides)
    model.eval()
    with torch.no_grad():
        x = torch.as_tensor(image, dtype=next(model.parameters()).dtype)[None, None]
        logits, ltrb, ctr = model(x)
        cls_scores = torch.sigmoid(logits)[0].cpu().numpy()
        ctr_scores = torch.sigmoid(ctr)[0].cpu().numpy()
        scores = np.sqrt(cls_scores * ctr_scores[:, None])
        boxes = decode_boxes(grid, ltrb[0].cpu().numpy())

    detections: list[Detection] = []
    for c in range(cfg.num_classes):
        sc = scores[:, c]
        mask = sc > cfg.score_threshold
        if not mask.any():
            continue
        idx = np.nonzero(mask)[0]
        kept = nms(boxes[idx], sc[idx], cfg.nms_iou)
        for j in kept:
            x1, y1, x2, y2 = boxes[idx[j]]
            if x2 <= x1 or y2 <= y1:
                continue
            detections.append(
                Detection(
                    box=BoundingBox.from_corner(x1, y1, x2 - x1, y2 - y1),
                    class_id=c,
                    score=float(sc[idx[j]]),
                )
            )
    detections.sort(key=lambda d: -d.score)
    return detections[: cfg.max_detections]
