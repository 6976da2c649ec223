"""Experiment orchestration: configs, training runs, evaluation, reporting.

A run meta-trains a learner on label-free episodes fabricated from the
meta-train images under one augmentation policy, validates each epoch on a
bank of real-labeled episodes from meta-val that is frozen for the whole run
(and identical across runs sharing a seed and episode shape, so ablations
compare on the same tasks), then reports accuracy on real-labeled meta-test
episodes.  Evaluation never fine-tunes on test data; the only test-side
computation is each learner's own episode adaptation.

Everything a run writes lands under its output directory: best.ckpt,
last.ckpt, and a record.json holding the config and per-epoch history.
record.json is bit-reproducible: rerunning with the same config gives the
same file, so determinism can be checked by comparing bytes.
"""

from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .augment.policy import policy_from_name
from .data import (
    DatasetIndex,
    LoadError,
    load_miniimagenet,
    load_omniglot,
    resolve_data_root,
    strip_labels,
    synthetic_splits,
)
from .episodes import (
    EpisodeSpec,
    make_meta_batch,
    sample_supervised_episode,
    sample_unsupervised_episode,
)
from .maml import MamlConfig, MamlLearner
from .protonet import ProtoNetConfig, ProtoNetLearner
from .rng import derive_rng

log = logging.getLogger("aalkit")

DATASETS = ("omniglot", "miniimagenet", "synthetic")
LEARNERS = ("maml", "protonet")


@dataclass
class ExperimentConfig:
    """Flat run description; round-trips through YAML unchanged."""

    dataset: str = "omniglot"
    learner: str = "protonet"
    n_way: int = 5
    k_shot: int = 1
    target_per_class: int = 15
    augment: str = "CHV"
    epochs: int = 10
    episodes_per_epoch: int = 200
    meta_batch: int = 1
    seed: int = 0
    data_root: str | None = None
    out: str = "runs/run"
    # learner knobs
    n_blocks: int = 4
    n_filters: int = 64
    metric: str = "sqeuclidean"
    lr: float = 0.05
    momentum: float = 0.9
    inner_steps: int = 5
    inner_lr_init: float = 0.1
    meta_lr: float = 1e-3
    second_order: bool = True
    msl: bool = True
    msl_anneal_epochs: int = 10
    learn_inner_lrs: bool = True
    per_step_bn: bool = True
    # evaluation shape
    val_episodes: int = 100
    test_episodes: int = 600
    eval_seeds: int = 3
    synthetic_data_seed: int = 1234

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ValueError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        if self.learner not in LEARNERS:
            raise ValueError(f"learner must be one of {LEARNERS}, got {self.learner!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        for name in ("episodes_per_epoch", "meta_batch", "val_episodes",
                     "test_episodes", "eval_seeds"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def load_config(path) -> ExperimentConfig:
    """Read a YAML mapping into an ExperimentConfig; unknown keys fail."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must hold a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys in {path}: {sorted(unknown)}")
    return ExperimentConfig(**raw)


def save_config(config: ExperimentConfig, path):
    with open(path, "w") as fh:
        yaml.safe_dump(asdict(config), fh, sort_keys=False)


def apply_overrides(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Return a copy with the non-None entries of ``overrides`` applied."""
    clean = {k: v for k, v in overrides.items() if v is not None}
    return replace(config, **clean) if clean else config


@dataclass(frozen=True)
class EvalReport:
    """One results row; fields mirror the results CSV columns."""

    policy: str
    learner: str
    dataset: str
    N: int
    K: int
    split: str
    mean_acc: float
    dispersion: float
    episodes: int
    seed: int


@dataclass
class RunResult:
    config: ExperimentConfig
    history: list
    best_epoch: int
    best_val_acc: float
    out_dir: Path
    best_checkpoint: Path
    last_checkpoint: Path


def load_splits(config: ExperimentConfig
                ) -> tuple[DatasetIndex, DatasetIndex, DatasetIndex]:
    """Materialize (meta-train, meta-val, meta-test) for the configured dataset."""
    if config.dataset == "synthetic":
        return synthetic_splits(seed=config.synthetic_data_seed)
    root = resolve_data_root(config.data_root)
    if root is None:
        raise LoadError(
            f"dataset {config.dataset!r} needs --data-root or the DATA_ROOT "
            "environment variable pointing at a directory with a "
            f"{config.dataset}/ subdirectory"
        )
    if config.dataset == "omniglot":
        return load_omniglot(root / "omniglot")
    return load_miniimagenet(root / "miniimagenet")


def build_learner(config: ExperimentConfig, in_channels: int, image_side: int):
    if config.learner == "protonet":
        pc = ProtoNetConfig(
            n_way=config.n_way, n_blocks=config.n_blocks,
            n_filters=config.n_filters, metric=config.metric,
            lr=config.lr, momentum=config.momentum, seed=config.seed,
        )
        return ProtoNetLearner.create(pc, in_channels, image_side)
    mc = MamlConfig(
        n_way=config.n_way, inner_steps=config.inner_steps,
        inner_lr_init=config.inner_lr_init, meta_lr=config.meta_lr,
        second_order=config.second_order, msl=config.msl,
        msl_anneal_epochs=config.msl_anneal_epochs,
        learn_inner_lrs=config.learn_inner_lrs,
        per_step_bn=config.per_step_bn, n_blocks=config.n_blocks,
        n_filters=config.n_filters, seed=config.seed,
    )
    return MamlLearner.create(mc, in_channels, image_side)


def load_learner(path):
    """Open a checkpoint with whichever learner type wrote it."""
    import torch

    meta = torch.load(path, map_location="cpu", weights_only=True).get("meta", {})
    kind = meta.get("learner")
    if kind == "protonet":
        return ProtoNetLearner.load(path)
    if kind == "maml":
        return MamlLearner.load(path)
    raise ValueError(f"{path} does not name a known learner type")


def make_eval_bank(
    dataset: DatasetIndex, config: ExperimentConfig, purpose: str,
    n_episodes: int, eval_seed: int = 0,
) -> list:
    """Real-labeled episode bank, a pure function of (seed, shape, purpose).

    The augmentation policy deliberately does not enter the derivation, so
    runs differing only in policy are scored on identical tasks.
    """
    spec = EpisodeSpec(config.n_way, config.k_shot, config.target_per_class)
    bank = []
    for i in range(n_episodes):
        rng = derive_rng(config.seed, purpose, eval_seed, config.n_way,
                         config.k_shot, i)
        bank.append(sample_supervised_episode(dataset, spec, rng))
    return bank


def run_meta_training(config: ExperimentConfig) -> RunResult:
    """Full training run; returns the result record and writes artifacts."""
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_ds, val_ds, _ = load_splits(config)
    h, w, c = train_ds.image_shape
    if h != w:
        raise ValueError(f"square images expected, got {train_ds.image_shape}")

    pool = strip_labels(train_ds)
    policy = policy_from_name(config.augment, config.dataset)
    spec = EpisodeSpec(config.n_way, config.k_shot, config.target_per_class)
    learner = build_learner(config, in_channels=c, image_side=h)
    val_bank = make_eval_bank(val_ds, config, "val-bank", config.val_episodes)

    best_path = out_dir / "best.ckpt"
    last_path = out_dir / "last.ckpt"
    history = []
    best_val, best_epoch = -1.0, -1

    val_acc = float(learner.evaluate(val_bank).mean())
    history.append({"epoch": 0, "train_loss": None, "train_acc": None,
                    "val_acc": val_acc})
    log.info("epoch 0 (init): val_acc=%.4f", val_acc)
    best_val, best_epoch = val_acc, 0
    learner.save(best_path)

    n_batches = config.episodes_per_epoch // config.meta_batch
    for epoch in range(1, config.epochs + 1):
        t0 = time.monotonic()
        losses, accs = [], []
        for b in range(n_batches):
            rng = derive_rng(config.seed, "train", config.augment, epoch, b)
            batch = make_meta_batch(
                lambda r: sample_unsupervised_episode(pool, spec, r, policy),
                config.meta_batch, rng,
            )
            if config.learner == "maml":
                stats = learner.train_step(batch, epoch=epoch - 1)
            else:
                stats = learner.train_step(batch)
            losses.append(stats["loss"])
            accs.append(stats["acc"])
        val_acc = float(learner.evaluate(val_bank).mean())
        history.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "train_acc": float(np.mean(accs)),
            "val_acc": val_acc,
        })
        log.info("epoch %d: train_loss=%.4f train_acc=%.4f val_acc=%.4f (%.1fs)",
                 epoch, history[-1]["train_loss"], history[-1]["train_acc"],
                 val_acc, time.monotonic() - t0)
        if val_acc > best_val:
            best_val, best_epoch = val_acc, epoch
            learner.save(best_path)

    learner.save(last_path)
    record = {
        "config": asdict(config),
        "history": history,
        "best_epoch": best_epoch,
        "best_val_acc": best_val,
    }
    with open(out_dir / "record.json", "w") as fh:
        json.dump(record, fh, indent=2)
    return RunResult(config=config, history=history, best_epoch=best_epoch,
                     best_val_acc=best_val, out_dir=out_dir,
                     best_checkpoint=best_path, last_checkpoint=last_path)


def run_final_test(config: ExperimentConfig, learner=None,
                   checkpoint=None) -> EvalReport:
    """Accuracy on real-labeled meta-test episodes.

    Runs ``eval_seeds`` independent banks of ``test_episodes`` each; reports
    the mean of the per-bank means and their sample standard deviation as
    dispersion.  With neither a learner nor a checkpoint, scores a freshly
    initialized learner (the no-training baseline).
    """
    _, _, test_ds = load_splits(config)
    if learner is None:
        if checkpoint is not None:
            learner = load_learner(checkpoint)
        else:
            h, w, c = test_ds.image_shape
            learner = build_learner(config, in_channels=c, image_side=h)
    repeat_means = []
    for s in range(config.eval_seeds):
        bank = make_eval_bank(test_ds, config, "test-bank",
                              config.test_episodes, eval_seed=s)
        repeat_means.append(float(learner.evaluate(bank).mean()))
    mean_acc = float(np.mean(repeat_means))
    dispersion = float(np.std(repeat_means, ddof=1)) if len(repeat_means) > 1 else 0.0
    return EvalReport(
        policy=policy_from_name(config.augment, config.dataset).name,
        learner=config.learner, dataset=config.dataset, N=config.n_way,
        K=config.k_shot, split="meta-test", mean_acc=mean_acc,
        dispersion=dispersion, episodes=config.test_episodes, seed=config.seed,
    )


def run_ablation_grid(base: ExperimentConfig, policies: list[str]
                      ) -> tuple[list[EvalReport], list[tuple[str, str]]]:
    """Train and test once per policy, identical budget and evaluation tasks.

    Duplicate policies (after canonicalization) are dropped with a warning.
    A policy whose run raises is recorded in the failure list and the grid
    moves on.
    """
    seen, ordered = set(), []
    for name in policies:
        canon = policy_from_name(name, base.dataset).name
        if canon in seen:
            warnings.warn(f"duplicate policy {canon} in ablation grid, skipping")
            continue
        seen.add(canon)
        ordered.append(canon)

    reports, failures = [], []
    for canon in ordered:
        config = replace(base, augment=canon,
                         out=str(Path(base.out) / f"policy_{canon.replace('+', '_')}"))
        try:
            result = run_meta_training(config)
            report = run_final_test(config, checkpoint=result.best_checkpoint)
        except Exception as exc:  # keep the grid alive, report at the end
            log.error("policy %s failed: %s", canon, exc)
            failures.append((canon, str(exc)))
            continue
        reports.append(report)
    return reports, failures


CSV_COLUMNS = ("policy", "learner", "dataset", "N", "K", "split",
               "mean_acc", "dispersion", "episodes", "seed")


def emit_results(reports: list[EvalReport], csv_path, md_path=None):
    """Write results as CSV (full float precision) and optional markdown.

    The CSV is the machine-readable artifact: floats are written with repr
    precision so a round-trip recovers the exact values.  The markdown view
    renders accuracy as the conventional 'NN.NN±N.NN%'.
    """
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            writer.writerow([r.policy, r.learner, r.dataset, r.N, r.K, r.split,
                             repr(r.mean_acc), repr(r.dispersion), r.episodes,
                             r.seed])
    if md_path is not None:
        lines = ["| policy | learner | dataset | task | accuracy | episodes |",
                 "|---|---|---|---|---|---|"]
        for r in reports:
            task = f"{r.N}-way {r.K}-shot"
            acc = f"{100 * r.mean_acc:.2f}±{100 * r.dispersion:.2f}%"
            lines.append(f"| {r.policy} | {r.learner} | {r.dataset} | {task} "
                         f"| {acc} | {r.episodes} |")
        Path(md_path).write_text("\n".join(lines) + "\n")


def read_results(csv_path) -> list[EvalReport]:
    reports = []
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            reports.append(EvalReport(
                policy=row["policy"], learner=row["learner"],
                dataset=row["dataset"], N=int(row["N"]), K=int(row["K"]),
                split=row["split"], mean_acc=float(row["mean_acc"]),
                dispersion=float(row["dispersion"]),
                episodes=int(row["episodes"]), seed=int(row["seed"]),
            ))
    return reports


def emit_plots(out_dir, history: list | None = None,
               reports: list[EvalReport] | None = None) -> list[Path]:
    """Render the run curve and/or the ablation bars as PNGs."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if history:
        fig, ax = plt.subplots(figsize=(6, 4))
        epochs = [h["epoch"] for h in history]
        ax.plot(epochs, [h["val_acc"] for h in history], marker="o",
                label="val accuracy")
        train = [(h["epoch"], h["train_acc"]) for h in history
                 if h["train_acc"] is not None]
        if train:
            ax.plot([t[0] for t in train], [t[1] for t in train], marker=".",
                    label="train accuracy")
        ax.set_xlabel("epoch")
        ax.set_ylabel("accuracy")
        ax.legend()
        fig.tight_layout()
        path = out_dir / "training_curve.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    if reports:
        fig, ax = plt.subplots(figsize=(6, 4))
        names = [r.policy for r in reports]
        ax.bar(range(len(reports)), [r.mean_acc for r in reports],
               yerr=[r.dispersion for r in reports], capsize=4)
        ax.set_xticks(range(len(reports)))
        ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_ylabel("test accuracy")
        fig.tight_layout()
        path = out_dir / "ablation.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written
