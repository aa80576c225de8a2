"""Synthesis of the four annotation-noise types on a clean dataset.

All injectors are deterministic in (dataset, spec): sampled annotation sets
are drawn against the sorted annotation id list and per-annotation draws
use counter-style substreams seeded by (seed, kind, image_id, ann_id), so
permuting the image order of the input file changes nothing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .boxes import BoundingBox, clamp_to_image
from .dataset import Annotation, DetDataset, Provenance

logger = logging.getLogger(__name__)

KINDS = ("missing", "extra", "class_shift", "box", "mixed")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}


@dataclass(frozen=True)
class NoiseSpec:
    """One noise-injection request: kind, level (fraction of objects), seed."""

    kind: str
    level_a: float
    seed: int = 0
    mixed_components: tuple[tuple[str, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.level_a <= 1.0:
            raise ValueError(f"level_a must be in [0, 1], got {self.level_a}")
        if self.kind == "mixed":
            if not self.mixed_components:
                raise ValueError("mixed noise requires non-empty mixed_components")
            kinds = [k for k, _ in self.mixed_components]
            if len(kinds) != len(set(kinds)):
                raise ValueError("mixed_components must not repeat kinds")
            if any(k == "mixed" for k in kinds):
                raise ValueError("mixed_components cannot nest 'mixed'")
        elif self.mixed_components:
            raise ValueError("mixed_components only valid for kind='mixed'")


def _round_half_even(x: float) -> int:
    return int(np.rint(x))


def _sample_ids(ds: DetDataset, spec: NoiseSpec, k: int) -> list[int]:
    """k annotation ids, uniform without replacement, order-invariant."""
    ids = sorted(a.id for a in ds.annotations)
    rng = np.random.default_rng([spec.seed, _KIND_CODE[spec.kind]])
    chosen = rng.choice(len(ids), size=k, replace=False)
    return [ids[i] for i in chosen]


def inject_missing(ds: DetDataset, spec: NoiseSpec) -> tuple[DetDataset, list[int]]:
    """Drop round(a*N) annotations; returns the new dataset and removed ids."""
    assert spec.kind == "missing"
    n = len(ds.annotations)
    k = _round_half_even(spec.level_a * n)
    if spec.level_a == 1.0 and n > 0:
        logger.warning("missing-label level 1.0 empties the annotation list (N=%d)", n)
    removed = set(_sample_ids(ds, spec, k))
    kept = [a for a in ds.annotations if a.id not in removed]
    return ds.with_annotations(kept), sorted(removed)


def inject_class_shift(ds: DetDataset, spec: NoiseSpec) -> tuple[DetDataset, list[int]]:
    """Resample round(a*N) labels uniformly among the other foreground classes."""
    assert spec.kind == "class_shift"
    class_ids = sorted(cid for cid, _ in ds.categories)
    if len(class_ids) < 2:
        raise ValueError("class shift requires at least 2 foreground classes")
    n = len(ds.annotations)
    k = _round_half_even(spec.level_a * n)
    hit = set(_sample_ids(ds, spec, k))
    out = []
    for a in ds.annotations:
        if a.id in hit:
            others = [c for c in class_ids if c != a.class_id]
            rng = np.random.default_rng([spec.seed, _KIND_CODE["class_shift"], a.image_id, a.id])
            new_cls = others[rng.integers(len(others))]
            prov = Provenance.BOTH if a.provenance == Provenance.BOX_PERTURBED else Provenance.CLASS_SHIFTED
            out.append(replace(a, class_id=int(new_cls), provenance=prov))
        else:
            out.append(a)
    return ds.with_annotations(out), sorted(hit)


def inject_extra(ds: DetDataset, spec: NoiseSpec,
                 size_range: tuple[float, float] = (2.0, 16.0)) -> tuple[DetDataset, list[int]]:
    """Append round(a*N) spurious boxes at random positions.

    Images are picked proportionally to their existing annotation count;
    sides are log-uniform in size_range (tiny-object regime) and boxes lie
    fully inside their image.
    """
    assert spec.kind == "extra"
    if not ds.images:
        raise ValueError("cannot add extra labels to a dataset with no images")
    n = len(ds.annotations)
    k = _round_half_even(spec.level_a * n)
    images = sorted(ds.images, key=lambda im: im.id)
    counts = np.array([len(ds.annotations_of(im.id)) for im in images], dtype=np.float64)
    probs = counts / counts.sum() if counts.sum() > 0 else np.full(len(images), 1.0 / len(images))
    class_ids = sorted(cid for cid, _ in ds.categories)

    rng = np.random.default_rng([spec.seed, _KIND_CODE["extra"]])
    next_id = max((a.id for a in ds.annotations), default=0) + 1
    lo, hi = np.log(size_range[0]), np.log(size_range[1])
    added = []
    for _ in range(k):
        im = images[rng.choice(len(images), p=probs)]
        w = float(np.exp(rng.uniform(lo, hi)))
        h = float(np.exp(rng.uniform(lo, hi)))
        w, h = min(w, im.width), min(h, im.height)
        cx = float(rng.uniform(w / 2.0, im.width - w / 2.0))
        cy = float(rng.uniform(h / 2.0, im.height - h / 2.0))
        added.append(
            Annotation(
                id=next_id,
                image_id=im.id,
                box=BoundingBox(cx, cy, w, h),
                class_id=int(class_ids[rng.integers(len(class_ids))]),
                provenance=Provenance.EXTRA,
            )
        )
        next_id += 1
    return ds.with_annotations(list(ds.annotations) + added), [a.id for a in added]


def _perturbation_draw(rng: np.random.Generator, a: float) -> np.ndarray:
    """Four offsets drawn from the open interval (-a, a)."""
    if a == 0.0:
        return np.zeros(4)
    d = rng.uniform(-a, a, size=4)
    while np.any(np.abs(d) >= a):  # uniform() includes the lower bound
        d = rng.uniform(-a, a, size=4)
    return d


def inject_box_noise(ds: DetDataset, spec: NoiseSpec) -> tuple[DetDataset, list[int]]:
    """Perturb EVERY box: c+=d*size, size*=(1+d), offsets ~ U(-a, a).

    Unlike the sampled class-noise types, box noise leaves no clean boxes.
    """
    assert spec.kind == "box"
    if spec.level_a >= 1.0:
        raise ValueError("box-noise level must be < 1 (sizes would go non-positive)")
    img_by_id = {im.id: im for im in ds.images}
    out = []
    for ann in ds.annotations:
        rng = np.random.default_rng([spec.seed, _KIND_CODE["box"], ann.image_id, ann.id])
        dx, dy, dw, dh = _perturbation_draw(rng, spec.level_a)
        b = ann.box
        moved = BoundingBox(
            b.cx + dx * b.w,
            b.cy + dy * b.h,
            (1.0 + dw) * b.w,
            (1.0 + dh) * b.h,
        )
        im = img_by_id[ann.image_id]
        clamped = clamp_to_image(moved, im.width, im.height)
        if spec.level_a > 0:
            prov = Provenance.BOTH if ann.provenance == Provenance.CLASS_SHIFTED else Provenance.BOX_PERTURBED
        else:
            prov = ann.provenance
        out.append(replace(ann, box=clamped, provenance=prov))
    return ds.with_annotations(out), sorted(a.id for a in ds.annotations)


def inject_mixed(ds: DetDataset, spec: NoiseSpec) -> tuple[DetDataset, list[int]]:
    """Apply components with independent budgets, class noise before box noise."""
    assert spec.kind == "mixed"
    order = {"missing": 0, "class_shift": 1, "extra": 2, "box": 3}
    touched: set[int] = set()
    for kind, level in sorted(spec.mixed_components, key=lambda kv: order[kv[0]]):
        sub = NoiseSpec(kind=kind, level_a=level, seed=spec.seed)
        ds, ids = inject(ds, sub)
        touched.update(ids)
    return ds, sorted(touched)


_INJECTORS = {
    "missing": inject_missing,
    "extra": inject_extra,
    "class_shift": inject_class_shift,
    "box": inject_box_noise,
    "mixed": inject_mixed,
}


def inject(ds: DetDataset, spec: NoiseSpec) -> tuple[DetDataset, list[int]]:
    """Dispatch to the injector for spec.kind."""
    return _INJECTORS[spec.kind](ds, spec)


@dataclass
class NoiseReport:
    """Achieved noise statistics of a noisy dataset vs. its clean source."""

    n_clean: int
    n_noisy: int
    missing_rate: float
    extra_rate: float
    class_shift_rate: float
    box_perturbed_rate: float
    shift_confusion: dict = field(default_factory=dict)   # (old, new) -> count
    offset_samples: dict = field(default_factory=dict)    # "dx"/"dy"/"dw"/"dh" -> list

    def to_json_dict(self) -> dict:
        return {
            "n_clean": self.n_clean,
            "n_noisy": self.n_noisy,
            "missing_rate": self.missing_rate,
            "extra_rate": self.extra_rate,
            "class_shift_rate": self.class_shift_rate,
            "box_perturbed_rate": self.box_perturbed_rate,
            "shift_confusion": {f"{o}->{n}": c for (o, n), c in self.shift_confusion.items()},
            "offset_max_abs": {k: (max(map(abs, v)) if v else 0.0) for k, v in self.offset_samples.items()},
        }

    def table(self) -> str:
        lines = [
            f"{'annotations (clean/noisy)':32s} {self.n_clean} / {self.n_noisy}",
            f"{'missing rate':32s} {self.missing_rate:.4f}",
            f"{'extra rate':32s} {self.extra_rate:.4f}",
            f"{'class shift rate':32s} {self.class_shift_rate:.4f}",
            f"{'box perturbed rate':32s} {self.box_perturbed_rate:.4f}",
        ]
        for key, vals in self.offset_samples.items():
            if vals:
                lines.append(f"{'max |' + key + '|':32s} {max(map(abs, vals)):.4f}")
        for (old, new), cnt in sorted(self.shift_confusion.items()):
            lines.append(f"{'shift ' + str(old) + ' -> ' + str(new):32s} {cnt}")
        return "\n".join(lines)


def noise_report(clean: DetDataset, noisy: DetDataset, atol: float = 1e-9) -> NoiseReport:
    """Compare a noisy dataset against its clean source, by annotation id."""
    if {im.id for im in clean.images} != {im.id for im in noisy.images}:
        raise ValueError("clean and noisy datasets must share the same image set")
    clean_by_id = {a.id: a for a in clean.annotations}
    noisy_by_id = {a.id: a for a in noisy.annotations}
    n = len(clean_by_id)
    missing = len(set(clean_by_id) - set(noisy_by_id))
    extra = len(set(noisy_by_id) - set(clean_by_id))

    shifts = 0
    confusion: dict = {}
    offsets = {"dx": [], "dy": [], "dw": [], "dh": []}
    perturbed = 0
    for ann_id in set(clean_by_id) & set(noisy_by_id):
        c, x = clean_by_id[ann_id], noisy_by_id[ann_id]
        if c.class_id != x.class_id:
            shifts += 1
            key = (c.class_id, x.class_id)
            confusion[key] = confusion.get(key, 0) + 1
        dx = (x.box.cx - c.box.cx) / c.box.w
        dy = (x.box.cy - c.box.cy) / c.box.h
        dw = x.box.w / c.box.w - 1.0
        dh = x.box.h / c.box.h - 1.0
        if max(abs(dx), abs(dy), abs(dw), abs(dh)) > atol:
            perturbed += 1
            offsets["dx"].append(dx)
            offsets["dy"].append(dy)
            offsets["dw"].append(dw)
            offsets["dh"].append(dh)

    denom = max(n, 1)
    return NoiseReport(
        n_clean=n,
        n_noisy=len(noisy_by_id),
        missing_rate=missing / denom,
        extra_rate=extra / denom,
        class_shift_rate=shifts / denom,
        box_perturbed_rate=perturbed / denom,
        shift_confusion=confusion,
        offset_samples=offsets,
    )
