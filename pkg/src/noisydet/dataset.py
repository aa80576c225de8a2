"""Detection dataset model plus COCO-style JSON ingestion and persistence.

The main annotation file is a plain COCO-style JSON; noise provenance is
kept in a sidecar (`<path>.provenance.json`) so corrupted files remain
drop-in replacements for tooling that knows nothing about provenance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .boxes import BoundingBox


class Provenance(str, Enum):
    CLEAN = "clean"
    CLASS_SHIFTED = "class_shifted"
    BOX_PERTURBED = "box_perturbed"
    EXTRA = "extra"
    BOTH = "both_shifted_and_perturbed"


class DatasetFormatError(ValueError):
    """Malformed annotation file (bad JSON or missing/odd keys)."""


class ReferentialIntegrityError(ValueError):
    """Annotations referencing unknown image or category ids."""


@dataclass(frozen=True)
class Annotation:
    id: int
    image_id: int
    box: BoundingBox
    class_id: int
    provenance: Provenance = Provenance.CLEAN


@dataclass(frozen=True)
class ImageInfo:
    id: int
    width: int
    height: int
    file_name: str


@dataclass(frozen=True)
class DetDataset:
    """Immutable detection dataset: categories, images, annotations."""

    categories: tuple[tuple[int, str], ...]
    images: tuple[ImageInfo, ...]
    annotations: tuple[Annotation, ...]

    def __post_init__(self):
        image_ids = {im.id for im in self.images}
        class_ids = {cid for cid, _ in self.categories}
        bad_imgs = sorted({a.image_id for a in self.annotations} - image_ids)
        if bad_imgs:
            raise ReferentialIntegrityError(f"annotations reference unknown image ids: {bad_imgs}")
        bad_cls = sorted({a.class_id for a in self.annotations} - class_ids)
        if bad_cls:
            raise ReferentialIntegrityError(f"annotations reference unknown class ids: {bad_cls}")
        ann_ids = [a.id for a in self.annotations]
        if len(ann_ids) != len(set(ann_ids)):
            dupes = sorted({i for i in ann_ids if ann_ids.count(i) > 1})
            raise ReferentialIntegrityError(f"duplicate annotation ids: {dupes}")

    @property
    def num_classes(self) -> int:
        return len(self.categories)

    def image_by_id(self, image_id: int) -> ImageInfo:
        for im in self.images:
            if im.id == image_id:
                return im
        raise KeyError(image_id)

    def annotations_of(self, image_id: int) -> list[Annotation]:
        return [a for a in self.annotations if a.image_id == image_id]

    def with_annotations(self, annotations) -> "DetDataset":
        return replace(self, annotations=tuple(annotations))


def _require(obj: dict, key: str, context: str):
    if key not in obj:
        raise DatasetFormatError(f"missing key '{key}' in {context}")
    return obj[key]


def load_dataset(path) -> DetDataset:
    """Load a COCO-style JSON file (and its provenance sidecar if present)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"invalid JSON in {path}: {e}") from e

    categories = tuple(
        (int(_require(c, "id", "categories")), str(_require(c, "name", "categories")))
        for c in _require(raw, "categories", "top level")
    )
    images = tuple(
        ImageInfo(
            id=int(_require(im, "id", "images")),
            width=int(_require(im, "width", "images")),
            height=int(_require(im, "height", "images")),
            file_name=str(_require(im, "file_name", "images")),
        )
        for im in _require(raw, "images", "top level")
    )

    sidecar = path.with_name(path.name + ".provenance.json")
    prov_map = {}
    if sidecar.exists():
        prov_map = {int(k): Provenance(v) for k, v in json.loads(sidecar.read_text()).items()}

    annotations = []
    for a in _require(raw, "annotations", "top level"):
        bbox = _require(a, "bbox", "annotations")
        if len(bbox) != 4:
            raise DatasetFormatError(f"annotation bbox must have 4 entries, got {bbox}")
        ann_id = int(_require(a, "id", "annotations"))
        annotations.append(
            Annotation(
                id=ann_id,
                image_id=int(_require(a, "image_id", "annotations")),
                box=BoundingBox.from_corner(*(float(v) for v in bbox)),
                class_id=int(_require(a, "category_id", "annotations")),
                provenance=prov_map.get(ann_id, Provenance.CLEAN),
            )
        )
    return DetDataset(categories=categories, images=images, annotations=tuple(annotations))


def save_dataset(ds: DetDataset, path) -> None:
    """Write COCO-style JSON; non-clean provenance goes to the sidecar."""
    path = Path(path)
    doc = {
        "images": [
            {"id": int(im.id), "width": int(im.width), "height": int(im.height),
             "file_name": im.file_name}
            for im in ds.images
        ],
        "annotations": [
            {
                "id": int(a.id),
                "image_id": int(a.image_id),
                "bbox": [float(v) for v in a.box.to_corner()],
                "category_id": int(a.class_id),
            }
            for a in ds.annotations
        ],
        "categories": [{"id": int(cid), "name": name} for cid, name in ds.categories],
    }
    path.write_text(json.dumps(doc))
    prov = {int(a.id): a.provenance.value for a in ds.annotations if a.provenance != Provenance.CLEAN}
    sidecar = path.with_name(path.name + ".provenance.json")
    sidecar.write_text(json.dumps(prov))
