"""Few-shot meta-learning from unlabeled images.

Training tasks are fabricated instead of labeled: a handful of images drawn
from an unlabeled pool get arbitrary (balanced, random) class labels, and
their augmented copies become the classification targets.  Meta-learners
trained on streams of such episodes are then scored, without any
fine-tuning, on standard few-shot episodes built from real labels.

The pieces: ``data`` loads or synthesizes class-partitioned image sets,
``augment`` holds the stochastic image policies, ``episodes`` samples both
fabricated and real-labeled tasks, ``backbone`` is the shared functional
conv net, ``protonet`` and ``maml`` are the two learners, ``harness`` runs
experiments, and ``cli`` exposes it all as the ``aalkit`` command.
"""

__version__ = "0.1.0"

from . import augment, backbone, data, episodes, harness, maml, protonet, rng

__all__ = [
    "__version__",
    "augment",
    "backbone",
    "data",
    "episodes",
    "harness",
    "maml",
    "protonet",
    "rng",
]
