"""Tour of the label-noise injectors.

Builds a small synthetic dataset, applies each noise kind at 30%, and prints
a report comparing the noisy annotations against the clean originals. Also
saves one noisy dataset alongside its provenance sidecar so you can inspect
the on-disk format.

Run:  python demos/01_noise_tour.py [out_dir]
"""
import sys
from pathlib import Path

from noisydet import NoiseSpec, SceneConfig, build_dataset, inject, noise_report, save_dataset

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out/noise_tour")
out_dir.mkdir(parents=True, exist_ok=True)

scene = SceneConfig(seed=7)
clean = build_dataset(scene, n_images=40)
print(f"clean dataset: {len(clean.images)} images, {len(clean.annotations)} annotations\n")

MIXED = NoiseSpec(
    kind="mixed", level_a=0.3, seed=0,
    mixed_components=(("missing", 0.1), ("class_shift", 0.2), ("box", 0.3)),
)

for spec in [NoiseSpec(kind=k, level_a=0.3, seed=0)
             for k in ("missing", "class_shift", "extra", "box")] + [MIXED]:
    noisy, touched = inject(clean, spec)
    report = noise_report(clean, noisy)
    print(f"=== {spec.kind} @ {spec.level_a:.0%} (touched {len(touched)} annotations) ===")
    print(report.table())
    print()

noisy, _ = inject(clean, MIXED)
save_dataset(noisy, out_dir / "mixed30.json")
print(f"wrote {out_dir / 'mixed30.json'} and its provenance sidecar")
print("provenance kinds present:",
      sorted({a.provenance.value for a in noisy.annotations}))
