"""Figure emission: noise-impact curves, sample-weight overlays, box-evolution."""
from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

logger = logging.getLogger(__name__)


def plot_noise_impact(rows: list[dict], path) -> None:
    """mAP vs. noise level, one line per noise kind (toggles-off rows)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    kinds = sorted({r["kind"] for r in rows if r.get("status") == "ok"})
    for kind in kinds:
        pts: dict[float, list[float]] = {}
        for r in rows:
            if r["kind"] == kind and r.get("status") == "ok":
                pts.setdefault(r["level"], []).append(r["metrics"]["mAP"])
        levels = sorted(pts)
        means = [float(np.mean(pts[l])) for l in levels]
        ax.plot(levels, means, marker="o", label=kind)
    ax.set_xlabel("noise level")
    ax.set_ylabel("mAP (clean val)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_weight_overlay(image: np.ndarray, xs, ys, weights, path) -> None:
    """Positive-sample weights scattered over the scene."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(image, cmap="gray", vmin=0, vmax=1)
    sc = ax.scatter(xs, ys, c=weights, cmap="autumn", s=20, vmin=0, vmax=1)
    fig.colorbar(sc, ax=ax, label="sample weight")
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_box_evolution(iou_per_epoch: dict[int, float], path) -> None:
    """IoU(regenerated target, clean box) across epochs."""
    fig, ax = plt.subplots(figsize=(5, 4))
    epochs = sorted(iou_per_epoch)
    ax.plot(epochs, [iou_per_epoch[e] for e in epochs], marker="o")
    ax.set_xlabel("epoch")
    ax.set_ylabel("IoU with clean box")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_report(rows: list[dict], artifacts_dir, overlays=None, box_evolution=None) -> list[Path]:
    """Emit the applicable figures; returns the written paths."""
    if not rows:
        raise ValueError("empty results table")
    artifacts_dir = Path(artifacts_dir)
    artifacts_dir.mkdir(parents=True, exist_ok=True)
    written = []
    p = artifacts_dir / "noise_impact.png"
    plot_noise_impact(rows, p)
    written.append(p)
    if overlays:
        for i, (image, xs, ys, weights) in enumerate(overlays):
            p = artifacts_dir / f"weight_overlay_{i}.png"
            plot_weight_overlay(image, xs, ys, weights, p)
            written.append(p)
    else:
        logger.warning("no registry dumps supplied; skipping weight overlays")
    if box_evolution:
        p = artifacts_dir / "box_evolution.png"
        plot_box_evolution(box_evolution, p)
        written.append(p)
    return written
