"""Few-shot episode construction.

An episode is a tiny classification task: N classes, K labeled support
images per class, and J target images per class to be classified.  Two
samplers build them:

* supervised: classes and instances drawn from a labeled dataset, support
  and target instances disjoint.  Class identity is hidden behind
  episode-local labels 0..N-1 given by the (random) draw order.
* unsupervised: N*K distinct images drawn from an unlabeled pool, balanced
  random labels (each label exactly K times), and targets that are augmented
  copies of the support images carrying the same labels.  No real label
  information is used anywhere.

Row convention: support rows are ordered label 0's K shots, then label 1's,
and so on; supervised target rows likewise with J per label.  Unsupervised
target rows are whole replicas of the support block, repeated J/K times.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .augment.ops import apply_policy
from .augment.policy import AugmentationPolicy
from .data import DatasetIndex, UnlabeledPool
from .rng import split_rng


class SamplingError(ValueError):
    """Episode request impossible for the given data."""


@dataclass(frozen=True)
class EpisodeSpec:
    """Episode shape: N-way, K-shot, J target images per class."""

    n_way: int
    k_shot: int
    target_per_class: int

    def __post_init__(self):
        if self.n_way < 2:
            raise SamplingError(f"n_way must be at least 2, got {self.n_way}")
        if self.k_shot < 1:
            raise SamplingError(f"k_shot must be at least 1, got {self.k_shot}")
        if self.target_per_class < 1:
            raise SamplingError(
                f"target_per_class must be at least 1, got {self.target_per_class}"
            )


@dataclass(frozen=True)
class Episode:
    """One few-shot task, with provenance ids into the source collection."""

    support_images: np.ndarray
    support_labels: np.ndarray
    target_images: np.ndarray
    target_labels: np.ndarray
    support_ids: np.ndarray
    target_ids: np.ndarray
    n_way: int
    k_shot: int

    @property
    def target_per_class(self) -> int:
        return len(self.target_labels) // self.n_way


def sample_supervised_episode(
    dataset: DatasetIndex, spec: EpisodeSpec, rng: np.random.Generator
) -> Episode:
    """Draw an episode from real labels (the evaluation-side sampler).

    Draws, in order: the N classes (without replacement), then per class a
    size-(K+J) instance subset without replacement; its first K rows become
    support, the rest target, so support and target never share an instance.
    """
    n, k, j = spec.n_way, spec.k_shot, spec.target_per_class
    if dataset.class_count < n:
        raise SamplingError(
            f"dataset has {dataset.class_count} classes, episode needs {n}"
        )
    counts = dataset.class_counts()
    if counts.min() < k + j:
        raise SamplingError(
            f"every class needs at least {k + j} instances, smallest has {counts.min()}"
        )
    classes = rng.choice(dataset.class_count, size=n, replace=False)

    support_rows, target_rows = [], []
    for c in classes:
        instances = dataset.class_indices(int(c))
        chosen = rng.choice(len(instances), size=k + j, replace=False)
        picked = instances[chosen]
        support_rows.append(picked[:k])
        target_rows.append(picked[k:])
    support_ids = np.concatenate(support_rows)
    target_ids = np.concatenate(target_rows)

    return Episode(
        support_images=dataset.images[support_ids].copy(),
        support_labels=np.repeat(np.arange(n, dtype=np.int64), k),
        target_images=dataset.images[target_ids].copy(),
        target_labels=np.repeat(np.arange(n, dtype=np.int64), j),
        support_ids=support_ids.astype(np.int64),
        target_ids=target_ids.astype(np.int64),
        n_way=n,
        k_shot=k,
    )


def sample_unsupervised_episode(
    pool: UnlabeledPool,
    spec: EpisodeSpec,
    rng: np.random.Generator,
    policy: AugmentationPolicy | None = None,
) -> Episode:
    """Fabricate an episode from unlabeled images.

    Draws, in order: N*K distinct pool rows, then a permutation assigning
    each of the N labels to exactly K rows, then the augmentation draws for
    each target row (label 0's shots first, repeated block-wise J/K times).
    Targets are augmented copies of the support rows with identical labels;
    with no policy they are plain copies.  J must be a multiple of K so the
    replication is exact.
    """
    n, k, j = spec.n_way, spec.k_shot, spec.target_per_class
    if j % k != 0:
        raise SamplingError(
            f"target_per_class ({j}) must be a multiple of k_shot ({k}) "
            "to replicate the support block evenly"
        )
    if pool.size < n * k:
        raise SamplingError(
            f"pool has {pool.size} images, episode needs {n * k} distinct ones"
        )
    ids = rng.choice(pool.size, size=n * k, replace=False).astype(np.int64)
    labels = rng.permutation(np.repeat(np.arange(n, dtype=np.int64), k))

    order = np.argsort(labels, kind="stable")
    support_ids = ids[order]
    support_labels = labels[order]
    support_images = pool.images[support_ids].copy()

    reps = j // k
    target_ids = np.tile(support_ids, reps)
    target_labels = np.tile(support_labels, reps)
    if policy is not None and policy.ops:
        target_images = np.stack(
            [apply_policy(pool.images[i], policy, rng) for i in target_ids]
        )
    else:
        target_images = pool.images[target_ids].copy()

    return Episode(
        support_images=support_images,
        support_labels=support_labels,
        target_images=target_images,
        target_labels=target_labels,
        support_ids=support_ids,
        target_ids=target_ids,
        n_way=n,
        k_shot=k,
    )


def make_meta_batch(sample_fn, batch_size: int, rng: np.random.Generator) -> list:
    """Draw ``batch_size`` episodes on independent child streams.

    ``sample_fn`` is called once per episode with its own Generator, so a
    change in how one episode consumes randomness cannot shift the others.
    """
    if batch_size < 1:
        raise SamplingError(f"batch_size must be positive, got {batch_size}")
    return [sample_fn(child) for child in split_rng(rng, batch_size)]


def _write_png(path: Path, img: np.ndarray):
    arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(arr, mode="RGB").save(path)


def dump_episode(episode: Episode, out_dir) -> Path:
    """Write an episode as browsable PNGs plus a manifest.json.

    Layout: ``support/row{i:03d}_label{l}.png``, same under ``target/``.
    Pixels are 8-bit quantized; the manifest keeps shapes, labels, and
    source ids exactly.
    """
    out = Path(out_dir)
    for part, images, labels in (
        ("support", episode.support_images, episode.support_labels),
        ("target", episode.target_images, episode.target_labels),
    ):
        sub = out / part
        sub.mkdir(parents=True, exist_ok=True)
        for i, (img, lab) in enumerate(zip(images, labels)):
            _write_png(sub / f"row{i:03d}_label{int(lab)}.png", img)
    manifest = {
        "n_way": episode.n_way,
        "k_shot": episode.k_shot,
        "target_per_class": episode.target_per_class,
        "support_labels": episode.support_labels.tolist(),
        "target_labels": episode.target_labels.tolist(),
        "support_ids": episode.support_ids.tolist(),
        "target_ids": episode.target_ids.tolist(),
        "image_shape": list(episode.support_images.shape[1:]),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return out
