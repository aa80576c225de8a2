"""End-to-end: does denoising help under label noise?

Trains the tiny detector twice on the same class-shifted annotations — once
plainly, once with the confusion filter enabled — and evaluates both on a
clean validation set. Small scale on purpose; expect a few minutes on one
CPU core and noisy single-seed numbers (the test suite averages seeds).

Run:  python demos/03_robust_training.py
"""
import torch

from noisydet import (
    DetectorConfig, NoiseSpec, SceneConfig, build_dataset, evaluate_model, inject, train,
)

torch.set_num_threads(max(torch.get_num_threads(), 4))

scene = SceneConfig(seed=7)
train_set = build_dataset(scene, n_images=60)
val_set = build_dataset(scene, n_images=40, first_index=1_000_000)
noisy, touched = inject(train_set, NoiseSpec(kind="class_shift", level_a=0.4, seed=0))
print(f"shifted {len(touched)} of {len(train_set.annotations)} training labels\n")

for label, cfg in [
    ("plain training", DetectorConfig(seed=0)),
    ("with confusion filter", DetectorConfig(seed=0, use_clc=True)),
]:
    result = train(noisy, scene, cfg)
    ev = evaluate_model(result.model, val_set, scene, result.grid)
    filtered = sum(m.get("n_filtered", 0) for m in result.metrics)
    print(f"{label:24s} mAP={ev.map:.3f}  AP50={ev.ap50:.3f}  "
          f"(filtered {filtered} positive samples)")
