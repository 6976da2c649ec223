"""Dataset loading and indexing.

All images live in one canonical in-memory layout: float32 arrays of shape
(height, width, channels), channels last, values in [0, 1].  Loaders return
class-disjoint (meta-train, meta-val, meta-test) triples; ``strip_labels``
produces the label-free pool used for unsupervised meta-training.

On-disk layouts:

* Omniglot: ``root/<alphabet>/<character>/*.png`` (a root containing
  ``images_background``/``images_evaluation`` directories is also accepted,
  their alphabets are merged).  Classes are ordered lexicographically by
  (alphabet, character) path and split by 1-based class index into
  [1, 1150], (1150, 1200] and (1200, 1623].  Every class must have exactly
  20 instances.  Images are resized to 28x28 grayscale.
* Mini-Imagenet: ``root/{train,val,test}.csv`` (columns filename,label)
  plus ``root/images/`` holding the files.  Images are resized to 84x84 RGB.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .rng import derive_rng

OMNIGLOT_SIDE = 28
OMNIGLOT_INSTANCES_PER_CLASS = 20
OMNIGLOT_SPLIT_POINTS = (1150, 1200)
MINIIMAGENET_SIDE = 84

SPLIT_NAMES = ("meta-train", "meta-val", "meta-test")


class LoadError(RuntimeError):
    """Dataset root missing, unreadable, or empty."""


class IntegrityError(RuntimeError):
    """Dataset contents violate the documented layout."""


@dataclass(frozen=True)
class DatasetIndex:
    """Class-partitioned image collection belonging to one meta-split.

    ``images`` is (M, H, W, C) float32 in [0, 1]; ``labels`` is (M,) int64
    with values in [0, class_count).  Instances of a class are contiguous
    and ordered deterministically, so loading twice gives identical bytes.
    """

    images: np.ndarray
    labels: np.ndarray
    split: str
    class_count: int
    name: str = "dataset"

    def __post_init__(self):
        if self.split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {self.split!r}")
        if self.images.ndim != 4:
            raise ValueError(f"images must be (M, H, W, C), got {self.images.shape}")
        if self.images.dtype != np.float32:
            raise ValueError(f"images must be float32, got {self.images.dtype}")
        if len(self.images) == 0:
            raise ValueError("empty dataset")
        if len(self.labels) != len(self.images):
            raise ValueError("labels and images disagree in length")
        lo, hi = float(self.images.min()), float(self.images.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel values outside [0, 1]: min={lo}, max={hi}")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise ValueError("label values outside [0, class_count)")
        counts = np.bincount(self.labels, minlength=self.class_count)
        if (counts == 0).any():
            raise ValueError("every class must have at least one sample")
        self.images.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def class_counts(self) -> np.ndarray:
        """Samples per class, indexed by class id."""
        return np.bincount(self.labels, minlength=self.class_count)

    def class_indices(self, c: int) -> np.ndarray:
        """Row indices of all instances of class c."""
        return np.flatnonzero(self.labels == c)


@dataclass(frozen=True)
class UnlabeledPool:
    """Label-free image collection for unsupervised episode sampling."""

    images: np.ndarray
    name: str = "pool"

    def __post_init__(self):
        if self.images.ndim != 4 or len(self.images) == 0:
            raise ValueError("pool needs a non-empty (I, H, W, C) image array")
        self.images.flags.writeable = False

    @property
    def size(self) -> int:
        return len(self.images)

    def __len__(self) -> int:
        return len(self.images)


def strip_labels(d: DatasetIndex) -> UnlabeledPool:
    """Drop all label information, keeping only the images."""
    return UnlabeledPool(images=d.images, name=f"{d.name}-unlabeled")


def _read_image(path: Path, side: int, mode: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert(mode)
            if im.size != (side, side):
                im = im.resize((side, side), Image.LANCZOS)
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except (OSError, SyntaxError) as exc:
        raise IntegrityError(f"unreadable image file {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def _omniglot_class_dirs(root: Path) -> list[Path]:
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    named = {p.name for p in subdirs}
    if {"images_background", "images_evaluation"} & named:
        alphabets = []
        for part in ("images_background", "images_evaluation"):
            if (root / part).is_dir():
                alphabets.extend(sorted(p for p in (root / part).iterdir() if p.is_dir()))
        alphabets.sort(key=lambda p: p.name)
    else:
        alphabets = subdirs
    class_dirs = []
    for alphabet in alphabets:
        class_dirs.extend(sorted(p for p in alphabet.iterdir() if p.is_dir()))
    return class_dirs


_load_cache: dict[tuple, tuple[DatasetIndex, DatasetIndex, DatasetIndex]] = {}


def load_omniglot(
    root_path,
    split_points: tuple[int, int] = OMNIGLOT_SPLIT_POINTS,
    use_cache: bool = True,
) -> tuple[DatasetIndex, DatasetIndex, DatasetIndex]:
    """Load the Omniglot character tree into (meta-train, meta-val, meta-test).

    Classes are numbered 1..C in lexicographic (alphabet, character) order and
    split at the 1-based boundaries in ``split_points`` (inclusive), default
    (1150, 1200).  Raises LoadError for a missing or empty root and
    IntegrityError for a class whose instance count differs from 20.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise LoadError(f"omniglot root {root} is not a readable directory")
    key = ("omniglot", root.resolve(), split_points)
    if use_cache and key in _load_cache:
        return _load_cache[key]

    class_dirs = _omniglot_class_dirs(root)
    if not class_dirs:
        raise LoadError(f"no alphabet/character directories under {root}")
    s0, s1 = split_points
    if not (0 < s0 < s1 <= len(class_dirs)):
        raise LoadError(
            f"split points {split_points} do not fit {len(class_dirs)} classes"
        )

    all_images = []
    for class_dir in class_dirs:
        files = sorted(p for p in class_dir.iterdir() if p.is_file())
        if len(files) != OMNIGLOT_INSTANCES_PER_CLASS:
            raise IntegrityError(
                f"class {class_dir.parent.name}/{class_dir.name} has "
                f"{len(files)} instances, expected {OMNIGLOT_INSTANCES_PER_CLASS}"
            )
        for f in files:
            all_images.append(_read_image(f, OMNIGLOT_SIDE, "L"))

    stacked = np.stack(all_images)
    per = OMNIGLOT_INSTANCES_PER_CLASS
    ranges = [(0, s0), (s0, s1), (s1, len(class_dirs))]
    out = []
    for (lo, hi), split in zip(ranges, SPLIT_NAMES):
        n_cls = hi - lo
        images = stacked[lo * per : hi * per].copy()
        labels = np.repeat(np.arange(n_cls, dtype=np.int64), per)
        out.append(
            DatasetIndex(
                images=images, labels=labels, split=split,
                class_count=n_cls, name="omniglot",
            )
        )
    result = tuple(out)
    if use_cache:
        _load_cache[key] = result
    return result


def _read_split_csv(path: Path) -> list[tuple[str, str]]:
    if not path.is_file():
        raise LoadError(f"missing split listing {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IntegrityError(f"empty split listing {path}")
        for row in reader:
            if len(row) < 2:
                raise IntegrityError(f"malformed row {row!r} in {path}")
            rows.append((row[0], row[1]))
    if not rows:
        raise IntegrityError(f"no entries in split listing {path}")
    return rows


def load_miniimagenet(
    root_path, use_cache: bool = True
) -> tuple[DatasetIndex, DatasetIndex, DatasetIndex]:
    """Load Mini-Imagenet from the standard split CSVs plus an images directory.

    The train/val/test listings define the meta-train/meta-val/meta-test class
    sets (64/12/24 classes, 600 instances each, on the full corpus).
    """
    root = Path(root_path)
    if not root.is_dir():
        raise LoadError(f"mini-imagenet root {root} is not a readable directory")
    key = ("miniimagenet", root.resolve())
    if use_cache and key in _load_cache:
        return _load_cache[key]

    image_dir = root / "images"
    if not image_dir.is_dir():
        raise LoadError(f"missing image directory {image_dir}")

    out = []
    seen_classes: dict[str, str] = {}
    for csv_name, split in zip(("train", "val", "test"), SPLIT_NAMES):
        rows = _read_split_csv(root / f"{csv_name}.csv")
        class_names = sorted({label for _, label in rows})
        for cls in class_names:
            if cls in seen_classes:
                raise IntegrityError(
                    f"class {cls} appears in both {seen_classes[cls]} and {csv_name} listings"
                )
            seen_classes[cls] = csv_name
        cls_to_id = {c: i for i, c in enumerate(class_names)}
        by_class: dict[str, list[str]] = {c: [] for c in class_names}
        for fname, label in rows:
            by_class[label].append(fname)

        images, labels = [], []
        for cls in class_names:
            for fname in sorted(by_class[cls]):
                path = image_dir / fname
                if not path.is_file():
                    raise IntegrityError(f"listed image file missing: {path}")
                images.append(_read_image(path, MINIIMAGENET_SIDE, "RGB"))
                labels.append(cls_to_id[cls])
        out.append(
            DatasetIndex(
                images=np.stack(images),
                labels=np.asarray(labels, dtype=np.int64),
                split=split,
                class_count=len(class_names),
                name="miniimagenet",
            )
        )
    result = tuple(out)
    if use_cache:
        _load_cache[key] = result
    return result


def clear_load_cache():
    _load_cache.clear()


# --- synthetic dataset -------------------------------------------------------

def _render_strokes(control: np.ndarray, thickness: np.ndarray,
                    side: int) -> np.ndarray:
    """Rasterize quadratic strokes into a (side, side) ink mask in [0, 1].

    ``control`` is (strokes, 3, 2) control points in pixel coordinates,
    ``thickness`` one radius per stroke; edges fade over one pixel.
    """
    grid = np.stack(
        np.meshgrid(np.arange(side, dtype=np.float64),
                    np.arange(side, dtype=np.float64), indexing="ij"),
        axis=-1,
    ).reshape(-1, 2)
    t = np.linspace(0.0, 1.0, 24)[:, None, None]
    a, b, c = control[:, 0], control[:, 1], control[:, 2]
    pts = (1 - t) ** 2 * a + 2 * t * (1 - t) * b + t ** 2 * c
    d2 = ((grid[:, None, None, :] - pts[None, :, :, :]) ** 2).sum(axis=-1)
    dist = np.sqrt(d2.min(axis=1))
    alpha = np.clip(thickness + 0.5 - dist, 0.0, 1.0)
    return alpha.max(axis=1).reshape(side, side)


def _glyph_skeleton(seed: int, class_key: int, side: int):
    rng = derive_rng(seed, "glyph", class_key)
    n_strokes = int(rng.integers(2, 5))
    margin = side / 7.0
    control = rng.uniform(margin, side - margin, size=(n_strokes, 3, 2))
    thickness = rng.uniform(1.0, 1.8, size=n_strokes)
    return control, thickness


def make_synthetic(
    n_classes: int,
    n_per_class: int,
    side: int,
    seed: int,
    split: str = "meta-train",
    class_key_offset: int = 0,
) -> DatasetIndex:
    """Deterministic class-separable toy dataset for fast tests.

    Each class is a fixed skeleton of two to four quadratic strokes, drawn
    bright on a dark ground; instances re-draw it with jittered control
    points, a shift of up to two pixels, intensity scaling, and pixel noise.
    Fixed seed gives bit-identical pixels.  ``class_key_offset`` selects
    disjoint skeleton families so multiple splits share no shapes.
    """
    for arg_name, value in (("n_classes", n_classes), ("n_per_class", n_per_class),
                            ("side", side)):
        if value <= 0:
            raise ValueError(f"{arg_name} must be positive, got {value}")

    jitter = 0.45 * side / 28.0
    images = np.zeros((n_classes * n_per_class, side, side, 1), dtype=np.float32)
    row = 0
    for c in range(n_classes):
        control, thickness = _glyph_skeleton(seed, class_key_offset + c, side)
        for i in range(n_per_class):
            irng = derive_rng(seed, "inst", class_key_offset + c, i)
            ctl = control + irng.normal(0.0, jitter, size=control.shape)
            ctl = ctl + irng.integers(-2, 3, size=2)
            th = thickness * irng.uniform(0.9, 1.1, size=thickness.shape)
            inst = _render_strokes(ctl, th, side) * irng.uniform(0.85, 1.0)
            inst = np.clip(inst + irng.normal(0.0, 0.02, size=(side, side)),
                           0.0, 1.0)
            images[row, :, :, 0] = inst.astype(np.float32)
            row += 1
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), n_per_class)
    return DatasetIndex(images=images, labels=labels, split=split,
                        class_count=n_classes, name="synthetic")


def synthetic_splits(
    seed: int,
    n_train: int = 192,
    n_val: int = 8,
    n_test: int = 10,
    n_per_class: int = 20,
    side: int = 28,
    use_cache: bool = True,
) -> tuple[DatasetIndex, DatasetIndex, DatasetIndex]:
    """Three class-disjoint synthetic datasets for end-to-end runs.

    The meta-train split is deliberately the widest: fabricated episodes
    draw pool rows at random, and a thin class inventory would keep putting
    two instances of the same true class into one episode as separate
    fabricated classes, teaching the learner to split what evaluation needs
    held together.  Results are cached in-process (the arrays are
    read-only, so sharing is safe).
    """
    key = ("synthetic", seed, n_train, n_val, n_test, n_per_class, side)
    if use_cache and key in _load_cache:
        return _load_cache[key]
    train = make_synthetic(n_train, n_per_class, side, seed,
                           split="meta-train", class_key_offset=0)
    val = make_synthetic(n_val, n_per_class, side, seed,
                         split="meta-val", class_key_offset=n_train)
    test = make_synthetic(n_test, n_per_class, side, seed,
                          split="meta-test", class_key_offset=n_train + n_val)
    if use_cache:
        _load_cache[key] = (train, val, test)
    return train, val, test


def resolve_data_root(explicit=None) -> Path | None:
    """--data-root flag wins, then the DATA_ROOT environment variable."""
    if explicit:
        return Path(explicit)
    env = os.environ.get("DATA_ROOT")
    return Path(env) if env else None
