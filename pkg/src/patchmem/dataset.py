"""Dataset discovery and image IO for the standard inspection layout.

Expected tree, one directory per category::

    root/<category>/train/good/*.png          reference (defect-free) images
    root/<category>/test/<kind>/*.png         test images, kind "good" = normal
    root/<category>/ground_truth/<kind>/*.png defect masks, stem-matched

Mask stems may carry a ``_mask`` suffix. Files are always taken in
lexicographic order so runs are reproducible. A JSON manifest can stand
in for the directory convention when data lives elsewhere.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidInputError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


@dataclass(frozen=True)
class TestSample:
    path: Path
    defect_type: str
    label: bool  # True = anomalous
    mask_path: Path | None


@dataclass(frozen=True)
class CategoryDataset:
    name: str
    reference_paths: list = field(default_factory=list)
    samples: list = field(default_factory=list)

    @property
    def positives(self) -> int:
        return sum(1 for s in self.samples if s.label)

    @property
    def segmentation_ready(self) -> bool:
        """True when every anomalous sample carries a ground-truth mask."""
        return self.positives > 0 and all(
            s.mask_path is not None for s in self.samples if s.label)


def load_image(path) -> np.ndarray:
    """Read any common raster file as float32 RGB in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise InvalidInputError(f"image file not found: {path}") from None
    except Exception as exc:
        raise InvalidInputError(f"cannot read image {path}: {exc}") from exc
    return arr


def load_mask(path, expected_shape=None) -> np.ndarray:
    """Read a defect mask as bool (any nonzero pixel counts as defect)."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"))
    except FileNotFoundError:
        raise InvalidInputError(f"mask file not found: {path}") from None
    except Exception as exc:
        raise InvalidInputError(f"cannot read mask {path}: {exc}") from exc
    mask = arr > 0
    if expected_shape is not None and mask.shape != tuple(expected_shape):
        raise InvalidInputError(
            f"mask {path} is {mask.shape}, expected {tuple(expected_shape)}")
    return mask


def _image_files(directory: Path) -> list:
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _find_mask(gt_dir: Path, stem: str) -> Path | None:
    for candidate_stem in (f"{stem}_mask", stem):
        for suffix in IMAGE_SUFFIXES:
            p = gt_dir / f"{candidate_stem}{suffix}"
            if p.is_file():
                return p
    return None


def discover_categories(root) -> list:
    root = Path(root)
    if not root.is_dir():
        raise InvalidInputError(f"dataset root is not a directory: {root}")
    names = sorted(p.name for p in root.iterdir()
                   if p.is_dir() and (p / "test").is_dir())
    if not names:
        raise InvalidInputError(
            f"no category directories with a test/ subtree under {root}")
    return names


def discover_category(root, category: str,
                      max_references: int | None = None) -> CategoryDataset:
    """Resolve one category's reference and test file lists.

    ``max_references`` keeps only the first k reference images (in
    lexicographic order), matching a k-shot setting.
    """
    cat_dir = Path(root) / category
    train_dir = cat_dir / "train" / "good"
    test_dir = cat_dir / "test"
    gt_root = cat_dir / "ground_truth"
    if not cat_dir.is_dir():
        raise InvalidInputError(f"category directory not found: {cat_dir}")
    if not train_dir.is_dir():
        raise InvalidInputError(f"missing reference directory: {train_dir}")
    if not test_dir.is_dir():
        raise InvalidInputError(f"missing test directory: {test_dir}")

    refs = _image_files(train_dir)
    if not refs:
        raise InvalidInputError(f"no reference images in {train_dir}")
    if max_references is not None:
        if max_references < 1:
            raise InvalidInputError(
                f"max_references must be >= 1, got {max_references}")
        refs = refs[:max_references]

    samples = []
    for kind_dir in sorted(p for p in test_dir.iterdir() if p.is_dir()):
        kind = kind_dir.name
        files = _image_files(kind_dir)
        if not files:
            raise InvalidInputError(f"no test images in {kind_dir}")
        for f in files:
            if kind == "good":
                samples.append(TestSample(f, kind, False, None))
                continue
            if not gt_root.is_dir():
                # no ground truth at all: classification-only category
                samples.append(TestSample(f, kind, True, None))
                continue
            gt_dir = gt_root / kind
            if not gt_dir.is_dir():
                raise InvalidInputError(
                    f"defect images in {kind_dir} but no mask directory "
                    f"{gt_dir}")
            mask = _find_mask(gt_dir, f.stem)
            if mask is None:
                raise InvalidInputError(
                    f"no mask for {f}: tried {gt_dir}/{f.stem}_mask.* and "
                    f"{gt_dir}/{f.stem}.*")
            samples.append(TestSample(f, kind, True, mask))
    if not samples:
        raise InvalidInputError(f"no test images under {test_dir}")
    return CategoryDataset(name=category, reference_paths=refs,
                           samples=samples)


def from_manifest(path) -> CategoryDataset:
    """Load an explicit file listing instead of the directory convention.

    Schema::

        {"category": "widget",
         "references": ["ref/000.png", ...],
         "samples": [{"path": "test/000.png", "label": true,
                      "defect_type": "crack", "mask": "gt/000.png"}, ...]}

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except FileNotFoundError:
        raise InvalidInputError(f"manifest not found: {path}") from None
    except ValueError as exc:
        raise InvalidInputError(f"manifest {path} is not valid JSON: {exc}") from exc
    base = path.parent

    def resolve(rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else base / p

    try:
        name = spec["category"]
        ref_list = spec["references"]
        sample_list = spec["samples"]
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(
            f"manifest {path} needs category/references/samples: {exc}") from exc
    if not ref_list:
        raise InvalidInputError(f"manifest {path} lists no references")
    if not sample_list:
        raise InvalidInputError(f"manifest {path} lists no samples")

    refs = []
    for rel in ref_list:
        p = resolve(rel)
        if not p.is_file():
            raise InvalidInputError(f"manifest reference missing: {p}")
        refs.append(p)
    samples = []
    for i, entry in enumerate(sample_list):
        try:
            sp = resolve(entry["path"])
            label = bool(entry["label"])
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(
                f"manifest sample {i} needs path and label: {exc}") from exc
        if not sp.is_file():
            raise InvalidInputError(f"manifest sample missing: {sp}")
        mask = None
        if label:
            if "mask" not in entry:
                raise InvalidInputError(
                    f"manifest sample {i} ({sp.name}) is anomalous but has "
                    f"no mask")
            mask = resolve(entry["mask"])
            if not mask.is_file():
                raise InvalidInputError(f"manifest mask missing: {mask}")
        samples.append(TestSample(sp, entry.get("defect_type",
                                                "defect" if label else "good"),
                                  label, mask))
    return CategoryDataset(name=name, reference_paths=refs, samples=samples)
