"""Prototype-based few-shot learner.

Classification is nearest-prototype in embedding space: class prototypes are
the mean embedded support image per class, target images get a softmax over
negative squared euclidean distances (cosine similarity is available as an
alternative).  Training minimizes the target cross-entropy through the
embedding network; adaptation to a new episode is just recomputing
prototypes, there is no per-episode gradient step.

Episodes are embedded in one concatenated forward pass, so batch norm sees
support and target statistics jointly.  Updates are plain SGD (optionally
with momentum), written functionally: a step maps a parameter dict to a new
parameter dict.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from . import backbone
from .episodes import Episode

METRICS = ("sqeuclidean", "cosine")


def compute_prototypes(embeddings: torch.Tensor, labels: torch.Tensor,
                       n_way: int) -> torch.Tensor:
    """Per-class means of the support embeddings, shape (n_way, D).

    Requires every class 0..n_way-1 to appear equally often; an unbalanced
    support set indicates a sampler bug upstream.
    """
    if embeddings.ndim != 2 or len(embeddings) != len(labels):
        raise ValueError("embeddings must be (M, D) aligned with labels")
    counts = torch.bincount(labels, minlength=n_way)
    if len(torch.unique(counts)) != 1 or counts.min() == 0:
        raise ValueError(f"support labels unbalanced: counts {counts.tolist()}")
    protos = [embeddings[labels == c].mean(dim=0) for c in range(n_way)]
    return torch.stack(protos)


def classify(query: torch.Tensor, prototypes: torch.Tensor,
             metric: str = "sqeuclidean") -> torch.Tensor:
    """Logits of each query against each prototype, shape (Q, N).

    sqeuclidean: negative squared distance (computed by explicit broadcast,
    no matmul shortcut, so results are reproducible to the last bit).
    cosine: similarity of L2-normalized vectors; zero-norm vectors have no
    direction and raise.
    """
    if metric == "sqeuclidean":
        diff = query[:, None, :] - prototypes[None, :, :]
        return -diff.pow(2).sum(dim=-1)
    if metric == "cosine":
        qn = query.norm(dim=-1, keepdim=True)
        pn = prototypes.norm(dim=-1, keepdim=True)
        if (qn == 0).any() or (pn == 0).any():
            raise ValueError("cosine metric undefined for zero-norm embeddings")
        return (query / qn) @ (prototypes / pn).T
    raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")


def episode_logits(params: dict[str, torch.Tensor], episode: Episode,
                   metric: str = "sqeuclidean") -> torch.Tensor:
    """Target logits for one episode, via a single concatenated forward."""
    dtype = params["conv1.weight"].dtype
    xs = backbone.to_torch(episode.support_images, dtype)
    xt = backbone.to_torch(episode.target_images, dtype)
    emb = backbone.forward(params, torch.cat([xs, xt]), with_head=False)
    sup_emb, tgt_emb = emb[: len(xs)], emb[len(xs):]
    protos = compute_prototypes(
        sup_emb, torch.as_tensor(episode.support_labels), episode.n_way
    )
    return classify(tgt_emb, protos, metric)


def episode_loss(params: dict[str, torch.Tensor], episode: Episode,
                 metric: str = "sqeuclidean") -> tuple[torch.Tensor, float]:
    """(cross-entropy over target logits, target accuracy) for one episode."""
    logits = episode_logits(params, episode, metric)
    y = torch.as_tensor(episode.target_labels)
    loss = F.cross_entropy(logits, y)
    acc = (logits.argmax(dim=1) == y).double().mean().item()
    return loss, acc


def sgd_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    lr: float,
    momentum: float = 0.0,
    velocity: dict[str, torch.Tensor] | None = None,
) -> tuple[dict[str, torch.Tensor], dict[str, torch.Tensor]]:
    """One functional SGD update; returns (new params, new velocity)."""
    new_params, new_velocity = {}, {}
    for k, p in params.items():
        g = grads[k]
        if momentum > 0.0:
            v = momentum * (velocity[k] if velocity else torch.zeros_like(g)) + g
        else:
            v = g
        new_velocity[k] = v.detach()
        new_params[k] = (p - lr * v).detach().requires_grad_(True)
    return new_params, new_velocity


@dataclass
class ProtoNetConfig:
    n_way: int = 5
    n_blocks: int = 4
    n_filters: int = 64
    metric: str = "sqeuclidean"
    lr: float = 0.05
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")


@dataclass
class ProtoNetLearner:
    """Stateful wrapper pairing the embedding parameters with their optimizer."""

    config: ProtoNetConfig
    params: dict[str, torch.Tensor]
    velocity: dict[str, torch.Tensor] | None = None
    _step: int = field(default=0)

    @staticmethod
    def create(config: ProtoNetConfig, in_channels: int, image_side: int
               ) -> "ProtoNetLearner":
        params = backbone.init_params(
            in_channels, image_side, n_blocks=config.n_blocks,
            n_filters=config.n_filters, head_dim=None, seed=config.seed,
        )
        for p in params.values():
            p.requires_grad_(True)
        return ProtoNetLearner(config=config, params=params)

    def train_step(self, episodes: list[Episode]) -> dict:
        """One meta-update on a batch of episodes; returns scalar stats."""
        losses, accs = [], []
        for ep in episodes:
            loss, acc = episode_loss(self.params, ep, self.config.metric)
            losses.append(loss)
            accs.append(acc)
        total = torch.stack(losses).mean()
        names = list(self.params)
        grads = torch.autograd.grad(total, [self.params[k] for k in names])
        self.params, self.velocity = sgd_step(
            self.params, dict(zip(names, grads)),
            lr=self.config.lr, momentum=self.config.momentum,
            velocity=self.velocity,
        )
        self._step += 1
        return {"loss": float(total.detach()), "acc": float(np.mean(accs))}

    def evaluate(self, episodes: list[Episode]) -> np.ndarray:
        """Per-episode target accuracy, no parameter or state changes."""
        accs = np.empty(len(episodes))
        with torch.no_grad():
            for i, ep in enumerate(episodes):
                logits = episode_logits(self.params, ep, self.config.metric)
                y = torch.as_tensor(ep.target_labels)
                accs[i] = float((logits.argmax(dim=1) == y).double().mean())
        return accs

    def save(self, path):
        meta = {"learner": "protonet", **vars(self.config)}
        backbone.save_checkpoint(path, self.params, meta=meta)

    @staticmethod
    def load(path) -> "ProtoNetLearner":
        params, _, meta = backbone.load_checkpoint(path)
        if meta.get("learner") != "protonet":
            raise ValueError(f"{path} is not a prototype-learner checkpoint")
        config = ProtoNetConfig(**{k: v for k, v in meta.items() if k != "learner"})
        for p in params.values():
            p.requires_grad_(True)
        return ProtoNetLearner(config=config, params=params)
