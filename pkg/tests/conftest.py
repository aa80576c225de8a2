"""Shared fixtures: tiny hand-built datasets and scene configs."""
import numpy as np
import pytest

from noisydet import Annotation, BoundingBox, DetDataset, ImageInfo, SceneConfig


def make_dataset(n_images=4, anns_per_image=5, num_classes=6, seed=0, img_size=128):
    """Small random-but-deterministic dataset for noise/eval tests."""
    rng = np.random.default_rng(seed)
    categories = tuple((c, f"class{c}") for c in range(num_classes))
    images = tuple(
        ImageInfo(id=i, width=img_size, height=img_size, file_name=f"img{i}.png")
        for i in range(n_images)
    )
    anns = []
    ann_id = 1
    for im in images:
        for _ in range(anns_per_image):
            w = float(rng.uniform(4, 15))
            h = float(rng.uniform(4, 15))
            cx = float(rng.uniform(w / 2, img_size - w / 2))
            cy = float(rng.uniform(h / 2, img_size - h / 2))
            anns.append(
                Annotation(
                    id=ann_id,
                    image_id=im.id,
                    box=BoundingBox(cx, cy, w, h),
                    class_id=int(rng.integers(num_classes)),
                )
            )
            ann_id += 1
    return DetDataset(categories=categories, images=images, annotations=tuple(anns))


@pytest.fixture
def small_dataset():
    return make_dataset()


@pytest.fixture
def scene_cfg():
    return SceneConfig(seed=11)
