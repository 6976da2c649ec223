"""Augmentation policies: named bundles of image operators.

A policy is an ordered subset of eight operators, each configured per dataset:

    C    random crop after zero-padding
    H    horizontal flip
    V    vertical flip
    R    random rotation
    W    elastic warp of a random sub-region
    DROP independent pixel dropout
    CUT  cutout (random zeroed squares)
    G    grayscale conversion

Policies are written as the single-letter tokens run together plus the word
tokens appended with '+': "CHV", "CHVWG", "CHV+DROP+CUT".  Parsing is
case-insensitive and whitespace-tolerant; "NONE" is the empty policy.
Operators always apply in the fixed order C, H, V, R, W, DROP, CUT, G
regardless of how the name is spelled.
"""

from __future__ import annotations

from dataclasses import dataclass

APPLY_ORDER = ("C", "H", "V", "R", "W", "DROP", "CUT", "G")
_NAME_LETTER_ORDER = ("C", "H", "V", "R", "W", "G")
_WORD_TOKENS = ("DROP", "CUT")


class PolicyError(ValueError):
    """Malformed policy name or operator unavailable for the dataset."""


# Operator hyperparameters per dataset.  Integer ranges are inclusive on
# both ends.  Warp carves a (base + U{0..extra})-sided region per axis and
# displaces it by at most mag_frac of the smaller region side.  G is absent
# for single-channel datasets.
DATASET_PARAMS: dict[str, dict[str, dict]] = {
    "omniglot": {
        "C": {"pad": 7},
        "H": {"p": 0.5},
        "V": {"p": 0.5},
        "R": {"low": 1.0, "high": 30.0},
        "W": {"base": 14, "extra": 6, "mag_frac": 0.1},
        "DROP": {"p": 0.3},
        "CUT": {"holes": 5, "side_lo": 4, "side_hi": 14},
    },
    "miniimagenet": {
        "C": {"pad": 21},
        "H": {"p": 0.5},
        "V": {"p": 0.5},
        "R": {"low": 1.0, "high": 270.0},
        "W": {"base": 42, "extra": 41, "mag_frac": 0.1},
        "DROP": {"p": 0.7},
        "CUT": {"holes": 5, "side_lo": 11, "side_hi": 42},
        "G": {"p": 0.5},
    },
}
# The synthetic glyph-sized set reuses the small-image settings.
DATASET_PARAMS["synthetic"] = DATASET_PARAMS["omniglot"]


@dataclass(frozen=True)
class AugmentationOp:
    """One configured operator: token plus its hyperparameters."""

    token: str
    params: dict

    def __post_init__(self):
        if self.token not in APPLY_ORDER:
            raise PolicyError(f"unknown operator token {self.token!r}")


@dataclass(frozen=True)
class AugmentationPolicy:
    """Ordered operator list for one dataset, with its canonical name."""

    name: str
    dataset: str
    ops: tuple[AugmentationOp, ...]

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(op.token for op in self.ops)


def parse_tokens(name: str) -> tuple[str, ...]:
    """Split a policy name into tokens, in canonical apply order.

    Duplicate tokens are rejected; unknown letters raise PolicyError with
    the valid alphabet spelled out.
    """
    text = name.strip().upper()
    if text in ("", "NONE"):
        return ()
    letter_set = set(_NAME_LETTER_ORDER)
    seen = set()
    for group in text.split("+"):
        group = group.strip()
        items = [group] if group in _WORD_TOKENS else list(group)
        if not items:
            raise PolicyError(f"empty operator group in policy name {name!r}")
        for tok in items:
            if tok not in letter_set and tok not in _WORD_TOKENS:
                raise PolicyError(
                    f"unknown operator {tok!r} in policy {name!r}; valid tokens are "
                    f"{', '.join(APPLY_ORDER)} (DROP and CUT spelled out, joined by '+')"
                )
            if tok in seen:
                raise PolicyError(f"operator {tok} repeated in policy {name!r}")
            seen.add(tok)
    return tuple(t for t in APPLY_ORDER if t in seen)


def canonical_name(tokens) -> str:
    """Render a token set in the conventional spelling: letters run together
    in C, H, V, R, W, G order, then +DROP and +CUT."""
    toks = set(tokens)
    unknown = toks - set(APPLY_ORDER)
    if unknown:
        raise PolicyError(f"unknown operator tokens {sorted(unknown)}")
    letters = "".join(t for t in _NAME_LETTER_ORDER if t in toks)
    words = [t for t in _WORD_TOKENS if t in toks]
    parts = ([letters] if letters else []) + words
    return "+".join(parts) if parts else "NONE"


def policy_from_name(name: str, dataset: str) -> AugmentationPolicy:
    """Build the configured operator list for ``name`` on ``dataset``."""
    if dataset not in DATASET_PARAMS:
        raise PolicyError(
            f"unknown dataset {dataset!r}; expected one of {sorted(DATASET_PARAMS)}"
        )
    table = DATASET_PARAMS[dataset]
    tokens = parse_tokens(name)
    ops = []
    for tok in tokens:
        if tok not in table:
            raise PolicyError(f"operator {tok} is not available for {dataset}")
        ops.append(AugmentationOp(token=tok, params=dict(table[tok])))
    return AugmentationPolicy(
        name=canonical_name(tokens), dataset=dataset, ops=tuple(ops)
    )


def available_tokens(dataset: str) -> tuple[str, ...]:
    """Operator tokens usable on ``dataset``, in apply order."""
    if dataset not in DATASET_PARAMS:
        raise PolicyError(
            f"unknown dataset {dataset!r}; expected one of {sorted(DATASET_PARAMS)}"
        )
    return tuple(t for t in APPLY_ORDER if t in DATASET_PARAMS[dataset])
