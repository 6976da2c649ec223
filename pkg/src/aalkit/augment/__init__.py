"""Stochastic image augmentation: policies, operators, resampling kernels."""

from .kernels import active_backend, bilinear_sample, upsample_grid
from .ops import apply_policy, augment_batch
from .policy import (
    APPLY_ORDER,
    DATASET_PARAMS,
    AugmentationOp,
    AugmentationPolicy,
    PolicyError,
    available_tokens,
    canonical_name,
    parse_tokens,
    policy_from_name,
)

__all__ = [
    "APPLY_ORDER",
    "DATASET_PARAMS",
    "AugmentationOp",
    "AugmentationPolicy",
    "PolicyError",
    "active_backend",
    "apply_policy",
    "augment_batch",
    "available_tokens",
    "bilinear_sample",
    "canonical_name",
    "parse_tokens",
    "policy_from_name",
    "upsample_grid",
]
