"""Dataset model: referential integrity, COCO round trip, provenance sidecar."""
import json

import pytest

from noisydet import (
    Annotation,
    BoundingBox,
    DetDataset,
    ImageInfo,
    Provenance,
    load_dataset,
    save_dataset,
)
from noisydet.dataset import DatasetFormatError, ReferentialIntegrityError
from conftest import make_dataset


def test_unknown_image_id_rejected():
    with pytest.raises(ReferentialIntegrityError):
        DetDataset(
            categories=((0, "a"), (1, "b")),
            images=(ImageInfo(1, 64, 64, "x.png"),),
            annotations=(Annotation(1, 99, BoundingBox(5, 5, 3, 3), 0),),
        )


def test_unknown_class_id_rejected():
    with pytest.raises(ReferentialIntegrityError):
        DetDataset(
            categories=((0, "a"),),
            images=(ImageInfo(1, 64, 64, "x.png"),),
            annotations=(Annotation(1, 1, BoundingBox(5, 5, 3, 3), 7),),
        )


def test_duplicate_annotation_ids_rejected():
    ann = Annotation(1, 1, BoundingBox(5, 5, 3, 3), 0)
    with pytest.raises(ReferentialIntegrityError):
        DetDataset(
            categories=((0, "a"),),
            images=(ImageInfo(1, 64, 64, "x.png"),),
            annotations=(ann, ann),
        )


def test_round_trip_preserves_everything(tmp_path):
    ds = make_dataset(n_images=3, anns_per_image=4)
    # mark a couple of annotations as noisy to exercise the sidecar
    anns = list(ds.annotations)
    anns[0] = Annotation(anns[0].id, anns[0].image_id, anns[0].box, anns[0].class_id,
                         Provenance.CLASS_SHIFTED)
    anns[3] = Annotation(anns[3].id, anns[3].image_id, anns[3].box, anns[3].class_id,
                         Provenance.BOX_PERTURBED)
    ds = ds.with_annotations(anns)

    path = tmp_path / "ds.json"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back.categories == ds.categories
    assert back.images == ds.images
    assert len(back.annotations) == len(ds.annotations)
    for a, b in zip(sorted(ds.annotations, key=lambda a: a.id),
                    sorted(back.annotations, key=lambda a: a.id)):
        assert (a.id, a.image_id, a.class_id, a.provenance) == (b.id, b.image_id, b.class_id, b.provenance)
        assert a.box.as_array() == pytest.approx(b.box.as_array(), abs=1e-9)


def test_sidecar_lists_only_non_clean(tmp_path):
    ds = make_dataset(n_images=2, anns_per_image=3)
    anns = list(ds.annotations)
    anns[1] = Annotation(anns[1].id, anns[1].image_id, anns[1].box, anns[1].class_id,
                         Provenance.EXTRA)
    ds = ds.with_annotations(anns)
    path = tmp_path / "ds.json"
    save_dataset(ds, path)
    sidecar = json.loads((tmp_path / "ds.json.provenance.json").read_text())
    flagged = {int(k) for k in sidecar}
    assert flagged == {anns[1].id}


def test_main_file_is_plain_coco(tmp_path):
    ds = make_dataset(n_images=1, anns_per_image=2)
    path = tmp_path / "ds.json"
    save_dataset(ds, path)
    blob = json.loads(path.read_text())
    assert set(blob) >= {"images", "annotations", "categories"}
    ann = blob["annotations"][0]
    assert set(ann) >= {"id", "image_id", "category_id", "bbox"}
    assert len(ann["bbox"]) == 4  # corner-form [x, y, w, h]
    assert "provenance" not in ann  # clean-looking file; truth lives in the sidecar


def test_missing_sidecar_means_all_clean(tmp_path):
    ds = make_dataset(n_images=1, anns_per_image=2)
    path = tmp_path / "ds.json"
    save_dataset(ds, path)
    (tmp_path / "ds.json.provenance.json").unlink()
    back = load_dataset(path)
    assert all(a.provenance == Provenance.CLEAN for a in back.annotations)


def test_malformed_file_raises_format_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"images": []}))  # no annotations/categories
    with pytest.raises(DatasetFormatError):
        load_dataset(path)


def test_annotations_of_filters_by_image(small_dataset):
    for im in small_dataset.images:
        anns = small_dataset.annotations_of(im.id)
        assert all(a.image_id == im.id for a in anns)
    assert sum(len(small_dataset.annotations_of(im.id)) for im in small_dataset.images) == len(
        small_dataset.annotations
    )
