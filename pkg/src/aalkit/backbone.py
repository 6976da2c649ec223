"""Functional convolutional backbone shared by both learners.

The network is the standard few-shot embedding stack: ``n_blocks`` repeats
of 3x3 conv (stride 1, padding 1) -> batch norm -> ReLU -> 2x2 max-pool
(floor), then flatten, plus an optional linear head.  On 28x28 input the
four default blocks give a 64-dim embedding; on 84x84 they give 1600.

Parameters live in a plain name->tensor dict instead of a Module so that
adapted ("fast") weights can flow through the forward pass with autograd
intact, which the gradient-based learner needs for its inner loop.  Batch
norm is written out manually for the same reason, with running statistics
held in an explicit BnState carrying one slot per adaptation step; the
normalization itself always uses current-batch moments, stored moments are
only read back in ``bn_mode="stored"``.

Keys: ``conv{i}.weight/.bias``, ``bn{i}.weight/.bias`` (i from 1), and
``head.weight/.bias`` when a head is requested.  Per-step norm layers may
shape bn tensors (S, F) instead of (F,); ``bn_step`` then picks the row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def embed_dim(image_side: int, n_blocks: int = 4, n_filters: int = 64) -> int:
    """Flattened embedding width for a square input."""
    side = image_side
    for _ in range(n_blocks):
        side //= 2
    if side < 1:
        raise ValueError(
            f"{n_blocks} pooling blocks collapse a {image_side}px image to nothing"
        )
    return n_filters * side * side


def init_params(
    in_channels: int,
    image_side: int,
    n_blocks: int = 4,
    n_filters: int = 64,
    head_dim: int | None = None,
    seed: int = 0,
    dtype: torch.dtype = torch.float32,
    bn_steps: int | None = None,
) -> dict[str, torch.Tensor]:
    """Fresh parameter dict, deterministic in ``seed``.

    Conv and head weights are fan-in uniform (U(-b, b), b = 1/sqrt(fan_in))
    drawn from a numpy generator so initialization does not depend on torch's
    RNG stream; biases start at zero, norm scales at one.  ``bn_steps``
    widens the norm weight/bias to (bn_steps, F) for per-step layers.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, torch.Tensor] = {}
    c_in = in_channels
    for i in range(1, n_blocks + 1):
        fan_in = c_in * 9
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(n_filters, c_in, 3, 3))
        params[f"conv{i}.weight"] = torch.tensor(w, dtype=dtype)
        params[f"conv{i}.bias"] = torch.zeros(n_filters, dtype=dtype)
        bn_shape = (n_filters,) if bn_steps is None else (bn_steps, n_filters)
        params[f"bn{i}.weight"] = torch.ones(bn_shape, dtype=dtype)
        params[f"bn{i}.bias"] = torch.zeros(bn_shape, dtype=dtype)
        c_in = n_filters
    if head_dim is not None:
        embed = embed_dim(image_side, n_blocks, n_filters)
        bound = 1.0 / np.sqrt(embed)
        w = rng.uniform(-bound, bound, size=(head_dim, embed))
        params["head.weight"] = torch.tensor(w, dtype=dtype)
        params["head.bias"] = torch.zeros(head_dim, dtype=dtype)
    return params


def n_blocks_of(params: dict[str, torch.Tensor]) -> int:
    return sum(1 for k in params if k.startswith("conv") and k.endswith(".weight"))


@dataclass
class BnState:
    """Per-step batch norm running statistics.

    ``running_mean[name]`` and ``running_var[name]`` are (S, F): one slot per
    adaptation step for layer ``name`` ("bn1", ...).  Slots update with the
    usual momentum rule when a forward pass is told to accumulate.
    """

    running_mean: dict[str, torch.Tensor]
    running_var: dict[str, torch.Tensor]
    steps: int

    @staticmethod
    def create(n_blocks: int, n_filters: int, steps: int,
               dtype: torch.dtype = torch.float32) -> "BnState":
        if steps < 1:
            raise ValueError(f"need at least one slot, got {steps}")
        mean = {f"bn{i}": torch.zeros(steps, n_filters, dtype=dtype)
                for i in range(1, n_blocks + 1)}
        var = {f"bn{i}": torch.ones(steps, n_filters, dtype=dtype)
               for i in range(1, n_blocks + 1)}
        return BnState(running_mean=mean, running_var=var, steps=steps)

    def clone(self) -> "BnState":
        return BnState(
            running_mean={k: v.clone() for k, v in self.running_mean.items()},
            running_var={k: v.clone() for k, v in self.running_var.items()},
            steps=self.steps,
        )

    def equals(self, other: "BnState") -> bool:
        """Bit-exact comparison, used to prove evaluation mutates nothing."""
        if self.steps != other.steps or self.running_mean.keys() != other.running_mean.keys():
            return False
        return all(
            torch.equal(self.running_mean[k], other.running_mean[k])
            and torch.equal(self.running_var[k], other.running_var[k])
            for k in self.running_mean
        )


def _bn_params(params: dict, name: str, step: int):
    w = params[f"{name}.weight"]
    b = params[f"{name}.bias"]
    if w.ndim == 2:
        return w[step], b[step]
    return w, b


def _batch_norm(
    x: torch.Tensor,
    params: dict,
    name: str,
    bn_state: BnState | None,
    bn_step: int,
    bn_mode: str,
    update_stats: bool,
) -> torch.Tensor:
    w, b = _bn_params(params, name, bn_step)
    if bn_mode == "batch":
        mean = x.mean(dim=(0, 2, 3))
        var = x.var(dim=(0, 2, 3), unbiased=False)
        if update_stats:
            if bn_state is None:
                raise ValueError("update_stats needs a BnState to write into")
            n = x.numel() // x.shape[1]
            unbiased = var.detach() * (n / max(n - 1, 1))
            with torch.no_grad():
                slot_m = bn_state.running_mean[name][bn_step]
                slot_v = bn_state.running_var[name][bn_step]
                slot_m.mul_(1 - BN_MOMENTUM).add_(BN_MOMENTUM * mean.detach())
                slot_v.mul_(1 - BN_MOMENTUM).add_(BN_MOMENTUM * unbiased)
    elif bn_mode == "stored":
        if bn_state is None:
            raise ValueError("bn_mode='stored' needs a BnState to read from")
        mean = bn_state.running_mean[name][bn_step]
        var = bn_state.running_var[name][bn_step]
    else:
        raise ValueError(f"bn_mode must be 'batch' or 'stored', got {bn_mode!r}")
    xhat = (x - mean[None, :, None, None]) / torch.sqrt(var[None, :, None, None] + BN_EPS)
    return xhat * w[None, :, None, None] + b[None, :, None, None]


def forward(
    params: dict[str, torch.Tensor],
    x: torch.Tensor,
    bn_state: BnState | None = None,
    bn_step: int = 0,
    bn_mode: str = "batch",
    update_stats: bool = False,
    with_head: bool = True,
) -> torch.Tensor:
    """Run the backbone on an (M, C, H, W) batch.

    Returns (M, head_dim) logits when the params carry a head and
    ``with_head`` is true, else the (M, embed) flattened embedding.
    """
    if x.ndim != 4:
        raise ValueError(f"input must be (M, C, H, W), got shape {tuple(x.shape)}")
    out = x
    for i in range(1, n_blocks_of(params) + 1):
        out = F.conv2d(out, params[f"conv{i}.weight"], params[f"conv{i}.bias"],
                       stride=1, padding=1)
        out = _batch_norm(out, params, f"bn{i}", bn_state, bn_step, bn_mode,
                          update_stats)
        out = F.relu(out)
        out = F.max_pool2d(out, 2)
    out = out.flatten(start_dim=1)
    if with_head and "head.weight" in params:
        out = F.linear(out, params["head.weight"], params["head.bias"])
    return out


def to_torch(images: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Convert an (M, H, W, C) float array to an (M, C, H, W) tensor copy."""
    if images.ndim != 4:
        raise ValueError(f"expected (M, H, W, C), got shape {images.shape}")
    return torch.tensor(np.ascontiguousarray(images.transpose(0, 3, 1, 2)),
                        dtype=dtype)


CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: dict[str, torch.Tensor],
                    bn_state: BnState | None = None, meta: dict | None = None):
    """Persist parameters (and optional norm statistics) to ``path``."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "params": {k: v.detach().cpu() for k, v in params.items()},
        "meta": dict(meta or {}),
    }
    if bn_state is not None:
        payload["bn_state"] = {
            "running_mean": {k: v.cpu() for k, v in bn_state.running_mean.items()},
            "running_var": {k: v.cpu() for k, v in bn_state.running_var.items()},
            "steps": bn_state.steps,
        }
    torch.save(payload, path)


def load_checkpoint(path):
    """Read a checkpoint back as (params, bn_state or None, meta)."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint {path} has format version {version}, "
            f"this build reads {CHECKPOINT_VERSION}"
        )
    bn_state = None
    if "bn_state" in payload:
        raw = payload["bn_state"]
        bn_state = BnState(
            running_mean=dict(raw["running_mean"]),
            running_var=dict(raw["running_var"]),
            steps=int(raw["steps"]),
        )
    return payload["params"], bn_state, payload.get("meta", {})
