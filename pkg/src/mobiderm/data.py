"""Dataset ingestion, stratified splitting, and class-balance sampling.

Expected corpus layout is one directory per class::

    root/
      acne/*.jpg
      eczema/*.png
      ...

Class names are the subdirectory names sorted alphabetically; the sort order
fixes label indices and the exported label list. Splits are seeded and fully
deterministic: same manifest + seed means the identical plan.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png"}

Item = tuple[str, int]  # (path, class index)


class DatasetError(ValueError):
    pass


class ImageDecodeError(ValueError):
    def __init__(self, path, cause):
        super().__init__(f"cannot decode image {path}: {cause}")
        self.path = str(path)


@dataclass
class DatasetManifest:
    """Inventory of a class-per-directory image corpus."""

    classes: list[str]
    items: list[Item]
    counts: list[int]
    skipped: int = 0

    @property
    def total(self) -> int:
        return len(self.items)

    def items_of_class(self, index: int) -> list[Item]:
        return [it for it in self.items if it[1] == index]


@dataclass
class SplitPlan:
    """Train/test/validation partition of a manifest.

    Validation is a copy drawn from either side (see ``validation_source``);
    the default copies the test selection. Train and test never share a path.
    """

    classes: list[str]
    train: list[Item]
    test: list[Item]
    validation: list[Item]
    seed: int
    validation_source: str = "test"

    def per_class_counts(self, which: str) -> list[int]:
        items = getattr(self, which)
        counts = [0] * len(self.classes)
        for _, idx in items:
            counts[idx] += 1
        return counts

    def to_json(self) -> str:
        doc = {
            "classes": self.classes,
            "seed": self.seed,
            "validation_source": self.validation_source,
            "train": [list(it) for it in self.train],
            "test": [list(it) for it in self.test],
            "validation": [list(it) for it in self.validation],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        doc = json.loads(text)
        return cls(
            classes=list(doc["classes"]),
            train=[(p, i) for p, i in doc["train"]],
            test=[(p, i) for p, i in doc["test"]],
            validation=[(p, i) for p, i in doc["validation"]],
            seed=int(doc["seed"]),
            validation_source=doc.get("validation_source", "test"),
        )


SAMPLING_MODES = ("imbalanced", "undersample", "oversample")


def scan_dataset(root_dir) -> DatasetManifest:
    """Build a manifest from a class-per-directory corpus.

    Classes are the subdirectories of ``root_dir`` sorted alphabetically;
    items are path-sorted within each class. Non-image files are skipped and
    counted; an empty class directory is an error naming the class.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise DatasetError(f"dataset root {root} contains no class directories")

    classes = [d.name for d in class_dirs]
    items: list[Item] = []
    counts: list[int] = []
    skipped = 0
    for index, class_dir in enumerate(class_dirs):
        files = sorted(p for p in class_dir.iterdir() if p.is_file())
        images = [p for p in files if p.suffix.lower() in IMAGE_EXTENSIONS]
        skipped += len(files) - len(images)
        if not images:
            raise DatasetError(f"class directory {class_dir.name!r} contains no images")
        items.extend((str(p), index) for p in images)
        counts.append(len(images))
    if skipped:
        log.warning("skipped %d non-image files while scanning %s", skipped, root)
    return DatasetManifest(classes=classes, items=items, counts=counts, skipped=skipped)


def _train_count(n: int, train_fraction: float) -> int:
    """Per-class train size: round-half-up(train_fraction * n)."""
    return int(np.floor(train_fraction * n + 0.5))


def stratified_split(manifest: DatasetManifest, train_fraction: float = 0.8,
                     seed: int = 0, validation_source: str = "test") -> SplitPlan:
    """Per-class seeded shuffle, then the first round-half-up(f*n) items train
    and the rest test. Validation copies the test selection by default, or a
    test-sized seeded sample of train with ``validation_source="train"``
    (the train reading avoids evaluating on copies of test data)."""
    if validation_source not in ("test", "train"):
        raise ValueError(f"validation_source must be 'test' or 'train', got {validation_source!r}")
    rng = np.random.default_rng(seed)
    train: list[Item] = []
    test: list[Item] = []
    validation: list[Item] = []
    for index, name in enumerate(manifest.classes):
        members = manifest.items_of_class(index)
        if len(members) < 2:
            raise DatasetError(f"class {name!r} needs at least 2 items to split, has {len(members)}")
        order = rng.permutation(len(members))
        shuffled = [members[i] for i in order]
        n_train = _train_count(len(members), train_fraction)
        train.extend(shuffled[:n_train])
        test.extend(shuffled[n_train:])
        n_test = len(members) - n_train
        if validation_source == "test":
            validation.extend(shuffled[n_train:])
        else:
            pick = rng.choice(n_train, size=min(n_test, n_train), replace=False)
            validation.extend(shuffled[i] for i in sorted(pick))
    return SplitPlan(
        classes=list(manifest.classes),
        train=train,
        test=test,
        validation=validation,
        seed=seed,
        validation_source=validation_source,
    )


def _resample_up(groups: list[list[Item]], target: int, rng: np.random.Generator) -> list[Item]:
    """Keep every original item, then pad with seeded draws (with replacement)."""
    out: list[Item] = []
    for members in groups:
        out.extend(members)
        deficit = target - len(members)
        if deficit > 0:
            draws = rng.integers(0, len(members), size=deficit)
            out.extend(members[i] for i in draws)
    return out


def apply_sampling(plan: SplitPlan, mode: str, seed: int = 0,
                   resample_test: bool = True) -> SplitPlan:
    """Rebalance a split plan.

    - ``imbalanced``: returned unchanged (fresh object, same membership).
    - ``undersample``: every class's train list is randomly reduced to the
      minimum per-class train count; test untouched.
    - ``oversample``: every class's train list is padded with replacement up
      to the maximum per-class train count. By default the test side is
      padded the same way so the balanced test table is mirrored exactly;
      pass ``resample_test=False`` to keep the untouched test split, which
      is the methodologically safer evaluation.

    Validation is re-derived from the resulting plan per its
    ``validation_source`` policy.
    """
    if mode not in SAMPLING_MODES:
        raise ValueError(f"unknown sampling mode {mode!r}; expected one of {SAMPLING_MODES}")
    k = len(plan.classes)
    train_groups = [[it for it in plan.train if it[1] == i] for i in range(k)]
    test_groups = [[it for it in plan.test if it[1] == i] for i in range(k)]
    rng = np.random.default_rng(seed)

    if mode == "imbalanced":
        train, test = list(plan.train), list(plan.test)
    elif mode == "undersample":
        target = min(len(g) for g in train_groups)
        train = []
        for members in train_groups:
            if len(members) > target:
                keep = rng.choice(len(members), size=target, replace=False)
                train.extend(members[i] for i in sorted(keep))
            else:
                train.extend(members)
        test = list(plan.test)
    else:  # oversample
        train = _resample_up(train_groups, max(len(g) for g in train_groups), rng)
        if resample_test:
            test = _resample_up(test_groups, max(len(g) for g in test_groups), rng)
        else:
            test = list(plan.test)

    if plan.validation_source == "test":
        validation = list(test)
    else:
        validation = list(plan.validation)
    return SplitPlan(
        classes=list(plan.classes),
        train=train,
        test=test,
        validation=validation,
        seed=plan.seed,
        validation_source=plan.validation_source,
    )


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-center mapping and edge clamping.

    Source coordinate of output pixel i is (i + 0.5) * size_in / size_out - 0.5.
    An identical target size returns the input untouched.
    """
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(np.int64)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    img64 = img.astype(np.float64)
    top = img64[y0][:, x0] * (1 - wx) + img64[y0][:, x1] * wx
    bottom = img64[y1][:, x0] * (1 - wx) + img64[y1][:, x1] * wx
    return (top * (1 - wy) + bottom * wy).astype(np.float32)


def load_image(path, target_size: int | tuple[int, int]) -> np.ndarray:
    """Decode a jpeg/png to RGB floats in [0, 255], bilinearly resized to
    target. Decode failures raise ImageDecodeError carrying the path."""
    if isinstance(target_size, int):
        target_size = (target_size, target_size)
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float32)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ImageDecodeError(path, exc) from exc
    return bilinear_resize(arr, target_size[0], target_size[1])


def load_images(items: list[Item], target_size: int) -> np.ndarray:
    """Load a batch of manifest items in item order: N x H x W x 3, [0, 255]."""
    if not items:
        raise DatasetError("no items to load")
    return np.stack([load_image(path, target_size) for path, _ in items])


def default_preprocess(img: np.ndarray) -> np.ndarray:
    """Map [0, 255] pixels to [-1, 1]: x / 127.5 - 1."""
    return (np.asarray(img, dtype=np.float32) / np.float32(127.5) - np.float32(1.0)).astype(np.float32)


def rescale_preprocess(img: np.ndarray) -> np.ndarray:
    """Map [0, 255] pixels to [0, 1]: x * (1/255), the augmented arm's scaling.

    Computed as a float64 multiply then cast, exactly like the augmentation
    pipeline's rescale step, so the two paths agree bit for bit.
    """
    return (np.asarray(img, dtype=np.float64) * (1.0 / 255.0)).astype(np.float32)


PREPROCESSORS = {"default": default_preprocess, "rescale": rescale_preprocess}
