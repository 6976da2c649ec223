"""Gradient-based few-shot learner with per-step refinements.

Adaptation runs a short inner loop of gradient steps on the support loss,
starting from shared initial parameters theta; the outer (meta) objective is
the target loss of the adapted parameters, optimized with Adam through the
inner loop (second-order by default, first-order as a switch).

Refinements, each toggleable:

* per-layer, per-step inner learning rates, stored as log-rates so they stay
  positive and get meta-learned alongside theta;
* multi-step target loss: the outer objective is a weighted sum of the
  target loss after every inner step, annealed from uniform weights to
  last-step-only over the first epochs;
* per-step batch norm: norm scale/shift tensors carry one row per inner
  step, and running statistics keep one slot per step (normalization always
  uses current-batch moments; support step s reads row/slot s and the target
  evaluation after it reads the same row).

Inner adaptation is generic: it takes any loss function over a parameter
dict, which is also how the analytic and finite-difference checks drive it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from . import backbone
from .backbone import BnState
from .episodes import Episode

LOG_ALPHA_FLOOR = math.log(1e-8)


@dataclass
class MamlConfig:
    n_way: int = 5
    inner_steps: int = 5
    inner_lr_init: float = 0.1
    meta_lr: float = 1e-3
    second_order: bool = True
    msl: bool = True
    msl_anneal_epochs: int = 10
    learn_inner_lrs: bool = True
    per_step_bn: bool = True
    n_blocks: int = 4
    n_filters: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.inner_steps < 1:
            raise ValueError(f"inner_steps must be at least 1, got {self.inner_steps}")
        if self.inner_lr_init <= 0:
            raise ValueError("inner_lr_init must be positive")


def inner_adapt(
    theta: dict[str, torch.Tensor],
    loss_fn,
    alphas: dict[str, torch.Tensor],
    n_steps: int,
    create_graph: bool,
) -> list[dict[str, torch.Tensor]]:
    """Run ``n_steps`` gradient steps from theta, returning the whole
    trajectory [theta, phi_1, ..., phi_T].

    ``loss_fn(params, step)`` must return a scalar connected to ``params``;
    ``alphas[name][step]`` is the learning rate for that tensor at that
    step.  With ``create_graph`` the steps stay differentiable, so the
    caller can take gradients of any trajectory point with respect to theta
    (and the alphas).
    """
    names = list(theta)
    phi = dict(theta)
    trajectory = [phi]
    for step in range(n_steps):
        loss = loss_fn(phi, step)
        grads = torch.autograd.grad(
            loss, [phi[k] for k in names], create_graph=create_graph
        )
        phi = {
            k: phi[k] - alphas[k][step] * g for k, g in zip(names, grads)
        }
        trajectory.append(phi)
    return trajectory


def msl_weights(n_steps: int, epoch: int, anneal_epochs: int,
                msl: bool) -> tuple[float, ...]:
    """Per-step target loss weights, summing to one.

    Without the multi-step loss this is (0, ..., 0, 1).  With it, weights
    start uniform and shift linearly toward last-step-only as ``epoch``
    approaches ``anneal_epochs``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if not msl:
        return (0.0,) * (n_steps - 1) + (1.0,)
    frac = min(epoch / anneal_epochs, 1.0) if anneal_epochs > 0 else 1.0
    base = (1.0 - frac) / n_steps
    return (base,) * (n_steps - 1) + (base + frac,)


def _episode_tensors(episode: Episode, dtype: torch.dtype):
    xs = backbone.to_torch(episode.support_images, dtype)
    ys = torch.as_tensor(episode.support_labels)
    xt = backbone.to_torch(episode.target_images, dtype)
    yt = torch.as_tensor(episode.target_labels)
    return xs, ys, xt, yt


def maml_episode_loss(
    theta: dict[str, torch.Tensor],
    log_alpha: dict[str, torch.Tensor],
    bn_state: BnState,
    episode: Episode,
    config: MamlConfig,
    weights: tuple[float, ...],
    create_graph: bool,
    update_stats: bool,
) -> tuple[torch.Tensor, float]:
    """(outer loss, last-step target accuracy) for one episode.

    Target losses at steps whose weight is exactly zero are skipped rather
    than multiplied by zero, so a (0, ..., 0, 1) weighting is literally the
    plain last-step objective.
    """
    if len(weights) != config.inner_steps or not any(w != 0.0 for w in weights):
        raise ValueError(
            f"need {config.inner_steps} step weights with a nonzero entry, got {weights}"
        )
    dtype = theta["conv1.weight"].dtype
    xs, ys, xt, yt = _episode_tensors(episode, dtype)
    alphas = {k: torch.exp(v) for k, v in log_alpha.items()}

    def support_loss(phi, step):
        logits = backbone.forward(
            phi, xs, bn_state=bn_state, bn_step=step, bn_mode="batch",
            update_stats=update_stats,
        )
        return F.cross_entropy(logits, ys)

    trajectory = inner_adapt(theta, support_loss, alphas,
                             config.inner_steps, create_graph)

    total = None
    last_logits = None
    for s in range(1, config.inner_steps + 1):
        w = weights[s - 1]
        if w == 0.0 and s != config.inner_steps:
            continue
        logits = backbone.forward(
            trajectory[s], xt, bn_state=bn_state, bn_step=s - 1,
            bn_mode="batch", update_stats=False,
        )
        if s == config.inner_steps:
            last_logits = logits
        if w == 0.0:
            continue
        term = w * F.cross_entropy(logits, yt)
        total = term if total is None else total + term
    acc = float((last_logits.argmax(dim=1) == yt).double().mean())
    return total, acc


@dataclass
class MamlLearner:
    """Initial parameters, per-step learning rates, norm state, and their
    meta-optimizer."""

    config: MamlConfig
    theta: dict[str, torch.Tensor]
    log_alpha: dict[str, torch.Tensor]
    bn_state: BnState
    optimizer: torch.optim.Optimizer
    _step: int = field(default=0)

    @staticmethod
    def create(config: MamlConfig, in_channels: int, image_side: int
               ) -> "MamlLearner":
        bn_steps = config.inner_steps if config.per_step_bn else None
        theta = backbone.init_params(
            in_channels, image_side, n_blocks=config.n_blocks,
            n_filters=config.n_filters, head_dim=config.n_way,
            seed=config.seed, bn_steps=bn_steps,
        )
        for p in theta.values():
            p.requires_grad_(True)
        log_alpha = {
            k: torch.full((config.inner_steps,), math.log(config.inner_lr_init),
                          requires_grad=True)
            for k in theta
        }
        bn_state = BnState.create(config.n_blocks, config.n_filters,
                                  steps=config.inner_steps)
        leaves = list(theta.values())
        if config.learn_inner_lrs:
            leaves += list(log_alpha.values())
        optimizer = torch.optim.Adam(leaves, lr=config.meta_lr)
        return MamlLearner(config=config, theta=theta, log_alpha=log_alpha,
                           bn_state=bn_state, optimizer=optimizer)

    def train_step(self, episodes: list[Episode], epoch: int = 0) -> dict:
        """One meta-update over a batch of episodes.

        Episodes whose outer loss comes out non-finite are dropped with a
        warning; the batch fails only if nothing survives.
        """
        weights = msl_weights(self.config.inner_steps, epoch,
                              self.config.msl_anneal_epochs, self.config.msl)
        losses, accs, skipped = [], [], 0
        for ep in episodes:
            loss, acc = maml_episode_loss(
                self.theta, self.log_alpha, self.bn_state, ep, self.config,
                weights, create_graph=self.config.second_order,
                update_stats=True,
            )
            if not torch.isfinite(loss):
                warnings.warn("dropping episode with non-finite outer loss")
                skipped += 1
                continue
            losses.append(loss)
            accs.append(acc)
        if not losses:
            raise RuntimeError("every episode in the batch had a non-finite loss")
        total = torch.stack(losses).mean()
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        with torch.no_grad():
            for v in self.log_alpha.values():
                v.clamp_(min=LOG_ALPHA_FLOOR)
        self._step += 1
        return {"loss": float(total.detach()), "acc": float(np.mean(accs)),
                "skipped": skipped}

    def evaluate(self, episodes: list[Episode]) -> np.ndarray:
        """Adapt on each support set and score the targets.

        Touches nothing: no optimizer step, no norm statistic updates; the
        inner loop runs first-order since its gradients are discarded.
        """
        weights = msl_weights(self.config.inner_steps, 0, 0, msl=False)
        accs = np.empty(len(episodes))
        for i, ep in enumerate(episodes):
            _, acc = maml_episode_loss(
                self.theta, self.log_alpha, self.bn_state, ep, self.config,
                weights, create_graph=False, update_stats=False,
            )
            accs[i] = acc
        return accs

    def save(self, path):
        flat = {f"theta.{k}": v for k, v in self.theta.items()}
        flat.update({f"log_alpha.{k}": v for k, v in self.log_alpha.items()})
        meta = {"learner": "maml", "step": self._step, **vars(self.config)}
        backbone.save_checkpoint(path, flat, bn_state=self.bn_state, meta=meta)

    @staticmethod
    def load(path) -> "MamlLearner":
        flat, bn_state, meta = backbone.load_checkpoint(path)
        if meta.get("learner") != "maml":
            raise ValueError(f"{path} is not a gradient-learner checkpoint")
        config = MamlConfig(**{k: v for k, v in meta.items()
                               if k not in ("learner", "step")})
        theta, log_alpha = {}, {}
        for k, v in flat.items():
            if k.startswith("theta."):
                theta[k[len("theta."):]] = v.requires_grad_(True)
            elif k.startswith("log_alpha."):
                log_alpha[k[len("log_alpha."):]] = v.requires_grad_(True)
        leaves = list(theta.values())
        if config.learn_inner_lrs:
            leaves += list(log_alpha.values())
        optimizer = torch.optim.Adam(leaves, lr=config.meta_lr)
        learner = MamlLearner(config=config, theta=theta, log_alpha=log_alpha,
                              bn_state=bn_state, optimizer=optimizer)
        learner._step = int(meta.get("step", 0))
        return learner
