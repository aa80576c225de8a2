"""Procedural tiny-shapes scenes standing in for an aerial tiny-object dataset.

Each scene is a single-channel image with a handful of tiny (<= 16 px)
shapes on a cluttered background; classes are long-tailed by default to
mimic the frequent/rare class imbalance of real aerial datasets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import BoundingBox
from .dataset import Annotation, DetDataset, ImageInfo

SHAPE_NAMES = ("disk", "square", "cross", "bar", "triangle", "ring")


def _default_frequency(c: int) -> tuple[float, ...]:
    w = 0.55 ** np.arange(c)
    return tuple(w / w.sum())


@dataclass(frozen=True)
class SceneConfig:
    image_size: int = 128
    num_classes: int = 6
    objects_per_image: tuple[int, int] = (3, 8)
    size_range: tuple[int, int] = (6, 16)
    class_frequency: tuple[float, ...] | None = None
    clutter_level: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.num_classes <= len(SHAPE_NAMES):
            raise ValueError(f"num_classes must be in [2, {len(SHAPE_NAMES)}]")
        if self.size_range[1] > 16:
            raise ValueError("size_range max above 16 px leaves the tiny-object regime")
        if self.class_frequency is not None and len(self.class_frequency) != self.num_classes:
            raise ValueError("class_frequency length must equal num_classes")

    @property
    def frequencies(self) -> np.ndarray:
        if self.class_frequency is not None:
            f = np.asarray(self.class_frequency, dtype=np.float64)
            return f / f.sum()
        return np.asarray(_default_frequency(self.num_classes))

    @property
    def categories(self) -> tuple[tuple[int, str], ...]:
        return tuple((i, SHAPE_NAMES[i]) for i in range(self.num_classes))


def _shape_mask(class_id: int, size: int) -> np.ndarray:
    """Boolean silhouette of one shape archetype on a size x size canvas."""
    s = size
    yy, xx = np.mgrid[0:s, 0:s]
    c = (s - 1) / 2.0
    r = s / 2.0
    if class_id == 0:  # disk
        return (yy - c) ** 2 + (xx - c) ** 2 <= r * r
    if class_id == 1:  # square
        return np.ones((s, s), dtype=bool)
    if class_id == 2:  # cross
        t = max(1, s // 3)
        lo, hi = (s - t) // 2, (s - t) // 2 + t
        m = np.zeros((s, s), dtype=bool)
        m[lo:hi, :] = True
        m[:, lo:hi] = True
        return m
    if class_id == 3:  # horizontal bar
        t = max(1, s // 3)
        lo = (s - t) // 2
        m = np.zeros((s, s), dtype=bool)
        m[lo:lo + t, :] = True
        return m
    if class_id == 4:  # triangle, apex up
        return np.abs(xx - c) <= (yy + 1) / 2.0
    if class_id == 5:  # ring
        d2 = (yy - c) ** 2 + (xx - c) ** 2
        t = max(1.0, s / 4.0)
        return (d2 <= r * r) & (d2 >= (r - t) ** 2)
    raise ValueError(f"no shape for class {class_id}")


def _tight_box(mask: np.ndarray, y0: int, x0: int) -> BoundingBox:
    ys, xs = np.nonzero(mask)
    return BoundingBox.from_corner(
        x0 + xs.min(), y0 + ys.min(), xs.max() - xs.min() + 1, ys.max() - ys.min() + 1
    )


def _box_iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def generate_scene(cfg: SceneConfig, index: int) -> tuple[np.ndarray, list[tuple[int, BoundingBox]]]:
    """One deterministic scene: (image in [0,1], [(class_id, tight box)])."""
    rng = np.random.default_rng([cfg.seed, index])
    size = cfg.image_size
    img = 0.1 + cfg.clutter_level * rng.random((size, size))
    # coarse blotches so the background is not iid noise
    blotch = rng.random((size // 8, size // 8))
    img += cfg.clutter_level * 0.5 * np.kron(blotch, np.ones((8, 8)))[:size, :size]

    n_objects = int(rng.integers(cfg.objects_per_image[0], cfg.objects_per_image[1] + 1))
    placed: list[tuple[int, BoundingBox]] = []
    for _ in range(n_objects):
        class_id = int(rng.choice(cfg.num_classes, p=cfg.frequencies))
        for _attempt in range(30):
            s = int(rng.integers(cfg.size_range[0], cfg.size_range[1] + 1))
            y0 = int(rng.integers(0, size - s + 1))
            x0 = int(rng.integers(0, size - s + 1))
            mask = _shape_mask(class_id, s)
            box = _tight_box(mask, y0, x0)
            if all(_box_iou(box, b) < 0.3 for _, b in placed):
                # per-class intensity band: silhouettes alone are too weak
                # a cue at < 16 px for a from-scratch desk-scale detector
                base = 0.5 + 0.5 * (class_id + 0.5) / cfg.num_classes
                intensity = float(np.clip(base + rng.uniform(-0.05, 0.05), 0.0, 1.0))
                patch = img[y0:y0 + s, x0:x0 + s]
                patch[mask] = intensity
                placed.append((class_id, box))
                break
        # unsatisfiable placement after retries: scene simply has fewer objects
    return np.clip(img, 0.0, 1.0).astype(np.float32), placed


def build_dataset(cfg: SceneConfig, n_images: int, first_index: int = 0) -> DetDataset:
    """Clean dataset over scenes [first_index, first_index + n_images)."""
    images = []
    annotations = []
    ann_id = 1
    for idx in range(first_index, first_index + n_images):
        _, objs = generate_scene(cfg, idx)
        images.append(ImageInfo(id=idx, width=cfg.image_size, height=cfg.image_size,
                                file_name=f"scene_{idx:06d}.png"))
        for class_id, box in objs:
            annotations.append(Annotation(id=ann_id, image_id=idx, box=box, class_id=class_id))
            ann_id += 1
    return DetDataset(categories=cfg.categories, images=tuple(images), annotations=tuple(annotations))


def render_image(cfg: SceneConfig, image_id: int) -> np.ndarray:
    """Regenerate the pixels of one dataset image (image_id == scene index)."""
    img, _ = generate_scene(cfg, image_id)
    return img
