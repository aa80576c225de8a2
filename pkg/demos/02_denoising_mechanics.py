"""The three denoising mechanisms on hand-built toy inputs.

No detector here — this walks the arithmetic of each mechanism so the pieces
can be inspected in isolation:

  1. the class-confusion filter (dynamic confidence matrix + noisy factor),
  2. trend-based sample reweighting (cleanliness / primacy blend),
  3. recursive box regeneration converging toward a fixed point.

Run:  python demos/02_denoising_mechanics.py
"""
import numpy as np

from noisydet import (
    BoundingBox, Candidate, DynamicConfidenceMatrix, RbrState, SampleKey,
    SampleObservation, iou, noisy_factor, positive_weight, primacy,
)
from noisydet.confusion import ConfidencePillar
from noisydet.trend import cleanliness_weights

rng = np.random.default_rng(0)

# --- 1. confusion filter ------------------------------------------------
print("=== class-confusion filter ===")
dcm = DynamicConfidenceMatrix(num_classes=3, period=10)
# feed pillars where class 0 is confidently itself and class 1 often leaks
# probability into class 2 (a genuine visual confusion the matrix learns)
for _ in range(50):
    dcm.update(ConfidencePillar(0, np.array([0.8, 0.05, 0.05]) + rng.normal(0, 0.02, 3)))
    dcm.update(ConfidencePillar(1, np.array([0.05, 0.5, 0.4]) + rng.normal(0, 0.02, 3)))
    dcm.update(ConfidencePillar(2, np.array([0.05, 0.1, 0.7]) + rng.normal(0, 0.02, 3)))
print("matrix rows (label -> mean prediction profile):")
print(np.round(dcm.snapshot(), 3))

cases = [
    ("clean class-0 sample", SampleObservation([0.75, 0.1, 0.1], gt_class=0)),
    ("label says 0, model screams 2", SampleObservation([0.1, 0.1, 0.85], gt_class=0)),
    ("known 1->2 confusion (tolerated)", SampleObservation([0.05, 0.5, 0.45], gt_class=1)),
]
for name, obs in cases:
    keep = noisy_factor(obs, dcm)
    print(f"  {name}: noisy factor = {keep} ({'kept' if keep else 'filtered'})")

# --- 2. trend reweighting ------------------------------------------------
print("\n=== trend reweighting ===")
# three positive samples of one gt: improving, barely moving, regressing
s_prev = np.array([0.20, 0.40, 0.50])
s_cur = np.array([0.40, 0.41, 0.30])
c = cleanliness_weights(s_prev, s_cur)
r = primacy(s_cur)
w = positive_weight(c, r, alpha=0.5)
for i, label in enumerate(("improving", "crawling", "regressing")):
    print(f"  {label:10s} s {s_prev[i]:.2f}->{s_cur[i]:.2f}  "
          f"cleanliness={c[i]:.3f} primacy={r[i]:.3f} weight={w[i]:.3f}")

# --- 3. recursive box regeneration ---------------------------------------
print("\n=== recursive box regeneration ===")
true_box = BoundingBox.from_corner(20, 20, 36, 36)
noisy_gt = BoundingBox.from_corner(16, 23, 33, 40)   # what the annotator wrote
rbr = RbrState(w1=1.0, k=4)
print(f"  start: IoU(target, true) = {iou(noisy_gt, true_box):.3f}")
for epoch in range(1, 9):
    # pretend the detector predicts near the true box, more confidently over time
    score = min(0.9, 0.15 * epoch)
    cands = [
        Candidate(SampleKey(0, 0, j),
                  BoundingBox.from_corner(20 + j % 2, 20, 36, 36 + j % 2),
                  score - 0.01 * j)
        for j in range(4)
    ]
    theta = rbr.refresh(image_id=0, ann_id=0, gt_box=noisy_gt, candidates=cands, epoch=epoch)
    print(f"  epoch {epoch}: IoU(target, true) = {iou(theta, true_box):.3f}")
print("the regression target drifts from the noisy annotation toward the "
      "detector's consensus box")
