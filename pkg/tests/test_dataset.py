import json

import numpy as np
import pytest
from PIL import Image

from patchmem.dataset import (
    CategoryDataset,
    discover_categories,
    discover_category,
    from_manifest,
    load_image,
    load_mask,
)
from patchmem.errors import InvalidInputError


def write_png(path, shape=(32, 48), value=128, mode="RGB"):
    path.parent.mkdir(parents=True, exist_ok=True)
    if mode == "RGB":
        arr = np.full((*shape, 3), value, dtype=np.uint8)
    else:
        arr = np.full(shape, value, dtype=np.uint8)
    Image.fromarray(arr, mode=mode).save(path)
    return path


def make_category(root, name="widget", n_train=4, n_good=2, n_crack=3,
                  mask_suffix="_mask"):
    cat = root / name
    for i in range(n_train):
        write_png(cat / "train" / "good" / f"{i:03d}.png")
    for i in range(n_good):
        write_png(cat / "test" / "good" / f"{i:03d}.png")
    for i in range(n_crack):
        write_png(cat / "test" / "crack" / f"{i:03d}.png")
        write_png(cat / "ground_truth" / "crack" / f"{i:03d}{mask_suffix}.png",
                  value=255, mode="L")
    return cat


class TestLoadImage:
    def test_rgb_range_and_dtype(self, tmp_path):
        p = write_png(tmp_path / "a.png", value=255)
        img = load_image(p)
        assert img.dtype == np.float32
        assert img.shape == (32, 48, 3)
        assert img.max() == 1.0

    def test_grayscale_promoted_to_rgb(self, tmp_path):
        p = write_png(tmp_path / "g.png", value=64, mode="L")
        img = load_image(p)
        assert img.shape == (32, 48, 3)
        assert np.allclose(img, 64 / 255.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidInputError, match="not found"):
            load_image(tmp_path / "nope.png")

    def test_garbage_file(self, tmp_path):
        p = tmp_path / "junk.png"
        p.write_bytes(b"this is not a png")
        with pytest.raises(InvalidInputError, match="cannot read"):
            load_image(p)


class TestLoadMask:
    def test_nonzero_is_defect(self, tmp_path):
        p = tmp_path / "m.png"
        arr = np.zeros((8, 8), dtype=np.uint8)
        arr[2:4, 3:6] = 1
        Image.fromarray(arr, mode="L").save(p)
        mask = load_mask(p)
        assert mask.dtype == bool
        assert mask.sum() == 6

    def test_shape_check(self, tmp_path):
        p = write_png(tmp_path / "m.png", shape=(8, 8), mode="L")
        with pytest.raises(InvalidInputError, match="expected"):
            load_mask(p, expected_shape=(16, 16))


class TestDiscover:
    def test_category_structure(self, tmp_path):
        make_category(tmp_path)
        ds = discover_category(tmp_path, "widget")
        assert ds.name == "widget"
        assert len(ds.reference_paths) == 4
        assert len(ds.samples) == 5
        assert ds.positives == 3
        kinds = {s.defect_type for s in ds.samples}
        assert kinds == {"good", "crack"}

    def test_lexicographic_order(self, tmp_path):
        make_category(tmp_path)
        ds = discover_category(tmp_path, "widget")
        names = [p.name for p in ds.reference_paths]
        assert names == sorted(names)
        kinds = [s.defect_type for s in ds.samples]
        assert kinds == sorted(kinds)  # kind dirs visited in sorted order
        crack = [s for s in ds.samples if s.label]
        assert [s.path.stem for s in crack] == ["000", "001", "002"]

    def test_first_k_references(self, tmp_path):
        make_category(tmp_path, n_train=6)
        ds = discover_category(tmp_path, "widget", max_references=2)
        assert [p.stem for p in ds.reference_paths] == ["000", "001"]

    def test_good_samples_have_no_mask(self, tmp_path):
        make_category(tmp_path)
        ds = discover_category(tmp_path, "widget")
        for s in ds.samples:
            assert (s.mask_path is None) == (not s.label)
            if s.label:
                assert s.mask_path.is_file()

    def test_mask_without_suffix_found(self, tmp_path):
        make_category(tmp_path, mask_suffix="")
        ds = discover_category(tmp_path, "widget")
        assert all(s.mask_path.is_file() for s in ds.samples if s.label)

    def test_no_ground_truth_tree_disables_segmentation(self, tmp_path):
        cat = make_category(tmp_path)
        import shutil
        shutil.rmtree(cat / "ground_truth")
        ds = discover_category(tmp_path, "widget")
        assert ds.positives == 3
        assert not ds.segmentation_ready
        assert all(s.mask_path is None for s in ds.samples)

    def test_segmentation_ready_with_full_masks(self, tmp_path):
        make_category(tmp_path)
        assert discover_category(tmp_path, "widget").segmentation_ready

    def test_missing_mask_reports_paths(self, tmp_path):
        cat = make_category(tmp_path)
        (cat / "ground_truth" / "crack" / "001_mask.png").unlink()
        with pytest.raises(InvalidInputError, match="001"):
            discover_category(tmp_path, "widget")

    def test_missing_train_dir(self, tmp_path):
        make_category(tmp_path)
        import shutil
        shutil.rmtree(tmp_path / "widget" / "train")
        with pytest.raises(InvalidInputError, match="reference directory"):
            discover_category(tmp_path, "widget")

    def test_unknown_category(self, tmp_path):
        make_category(tmp_path)
        with pytest.raises(InvalidInputError, match="gadget"):
            discover_category(tmp_path, "gadget")

    def test_discover_categories(self, tmp_path):
        make_category(tmp_path, "widget")
        make_category(tmp_path, "gadget")
        (tmp_path / "not_a_category").mkdir()
        assert discover_categories(tmp_path) == ["gadget", "widget"]

    def test_empty_root(self, tmp_path):
        with pytest.raises(InvalidInputError, match="no category"):
            discover_categories(tmp_path)

    def test_non_image_files_ignored(self, tmp_path):
        cat = make_category(tmp_path)
        (cat / "train" / "good" / "notes.txt").write_text("hi")
        ds = discover_category(tmp_path, "widget")
        assert len(ds.reference_paths) == 4


class TestManifest:
    def build(self, tmp_path, **overrides):
        ref = write_png(tmp_path / "data" / "r0.png")
        good = write_png(tmp_path / "data" / "t_good.png")
        bad = write_png(tmp_path / "data" / "t_bad.png")
        mask = write_png(tmp_path / "data" / "t_bad_gt.png", mode="L", value=255)
        spec = {
            "category": "widget",
            "references": ["data/r0.png"],
            "samples": [
                {"path": "data/t_good.png", "label": False},
                {"path": "data/t_bad.png", "label": True,
                 "defect_type": "dent", "mask": "data/t_bad_gt.png"},
            ],
        }
        spec.update(overrides)
        p = tmp_path / "manifest.json"
        p.write_text(json.dumps(spec))
        return p, (ref, good, bad, mask)

    def test_round_trip(self, tmp_path):
        p, (ref, good, bad, mask) = self.build(tmp_path)
        ds = from_manifest(p)
        assert isinstance(ds, CategoryDataset)
        assert ds.reference_paths == [ref]
        assert [s.path for s in ds.samples] == [good, bad]
        assert ds.samples[0].defect_type == "good"
        assert ds.samples[1].defect_type == "dent"
        assert ds.samples[1].mask_path == mask

    def test_absolute_paths_respected(self, tmp_path):
        ref = write_png(tmp_path / "elsewhere" / "r.png")
        p, _ = self.build(tmp_path, references=[str(ref)])
        ds = from_manifest(p)
        assert ds.reference_paths[0] == ref

    def test_missing_reference_file(self, tmp_path):
        p, _ = self.build(tmp_path, references=["data/gone.png"])
        with pytest.raises(InvalidInputError, match="gone.png"):
            from_manifest(p)

    def test_anomalous_sample_requires_mask(self, tmp_path):
        p, _ = self.build(tmp_path, samples=[
            {"path": "data/t_bad.png", "label": True}])
        with pytest.raises(InvalidInputError, match="no mask"):
            from_manifest(p)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(InvalidInputError, match="not valid JSON"):
            from_manifest(p)

    def test_missing_keys(self, tmp_path):
        p = tmp_path / "partial.json"
        p.write_text(json.dumps({"category": "x"}))
        with pytest.raises(InvalidInputError, match="references"):
            from_manifest(p)
