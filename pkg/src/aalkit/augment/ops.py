"""Image operators behind the augmentation policies.

Every operator takes an (H, W, C) float32 image in [0, 1] plus a numpy
Generator and returns a NEW array of the same shape, dtype, and range; the
input is never written.  Each documents its exact draw order, and the
stochastic ones draw even when a probability of 0 makes the result a no-op,
so the consumed stream depends only on the policy, not on outcomes.
"""

from __future__ import annotations

import numpy as np

from .kernels import bilinear_sample, upsample_grid
from .policy import AugmentationPolicy

WARP_GRID = 4  # control points per axis of the elastic displacement field


def _check_image(img: np.ndarray) -> np.ndarray:
    if img.ndim != 3:
        raise ValueError(f"image must be (H, W, C), got shape {img.shape}")
    if img.dtype != np.float32:
        raise ValueError(f"image must be float32, got {img.dtype}")
    return img


def crop(img: np.ndarray, rng: np.random.Generator, pad: int) -> np.ndarray:
    """Zero-pad by ``pad`` on every side, then cut a random full-size window.

    Draws: offset-y, offset-x, each uniform over {0..2*pad}.
    """
    _check_image(img)
    h, w, _ = img.shape
    padded = np.pad(img, ((pad, pad), (pad, pad), (0, 0)))
    oy = int(rng.integers(0, 2 * pad + 1))
    ox = int(rng.integers(0, 2 * pad + 1))
    return padded[oy : oy + h, ox : ox + w].copy()


def hflip(img: np.ndarray, rng: np.random.Generator, p: float) -> np.ndarray:
    """Mirror left-right with probability p.  Draws: one uniform."""
    _check_image(img)
    if rng.random() < p:
        return img[:, ::-1].copy()
    return img.copy()


def vflip(img: np.ndarray, rng: np.random.Generator, p: float) -> np.ndarray:
    """Mirror top-bottom with probability p.  Draws: one uniform."""
    _check_image(img)
    if rng.random() < p:
        return img[::-1].copy()
    return img.copy()


def rotate(img: np.ndarray, rng: np.random.Generator,
           low: float, high: float) -> np.ndarray:
    """Rotate about the image center by an angle uniform in [low, high)
    degrees, bilinear interpolation, zero fill.  Draws: one uniform.
    """
    _check_image(img)
    angle = float(rng.uniform(low, high))
    h, w, _ = img.shape
    rad = np.deg2rad(angle)
    cos_a, sin_a = np.cos(rad), np.sin(rad)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
        indexing="ij",
    )
    dy, dx = yy - cy, xx - cx
    src_x = cx + cos_a * dx + sin_a * dy
    src_y = cy - sin_a * dx + cos_a * dy
    return np.clip(bilinear_sample(img, src_y, src_x), 0.0, 1.0)


def warp(img: np.ndarray, rng: np.random.Generator,
         base: int, extra: int, mag_frac: float) -> np.ndarray:
    """Elastically deform one random sub-region, leaving the rest untouched.

    Region sides are base + U{0..extra} per axis (clamped to the image).  A
    WARP_GRID x WARP_GRID control grid per axis, zero on its border ring so
    the patch edge stays anchored, is upsampled to the region and applied as
    a displacement of at most mag_frac * min(region sides) pixels.  Samples
    are read from the full image, so content can flow in across the region
    edge.  Draws: region-h, region-w, corner-y, corner-x, then the
    (2, WARP_GRID, WARP_GRID) uniform field.
    """
    _check_image(img)
    h, w, _ = img.shape
    rh = min(base + int(rng.integers(0, extra + 1)), h)
    rw = min(base + int(rng.integers(0, extra + 1)), w)
    y0 = int(rng.integers(0, h - rh + 1))
    x0 = int(rng.integers(0, w - rw + 1))
    field = rng.uniform(-1.0, 1.0, size=(2, WARP_GRID, WARP_GRID))
    field[:, 0, :] = 0.0
    field[:, -1, :] = 0.0
    field[:, :, 0] = 0.0
    field[:, :, -1] = 0.0
    mag = mag_frac * min(rh, rw)
    disp_y = upsample_grid(field[0], rh, rw) * mag
    disp_x = upsample_grid(field[1], rh, rw) * mag
    yy, xx = np.meshgrid(
        np.arange(y0, y0 + rh, dtype=np.float64),
        np.arange(x0, x0 + rw, dtype=np.float64),
        indexing="ij",
    )
    patch = np.clip(bilinear_sample(img, yy + disp_y, xx + disp_x), 0.0, 1.0)
    out = img.copy()
    out[y0 : y0 + rh, x0 : x0 + rw] = patch
    return out


def dropout(img: np.ndarray, rng: np.random.Generator, p: float) -> np.ndarray:
    """Zero each pixel (all channels together) independently with
    probability p.  Draws: one (H, W) uniform field.
    """
    _check_image(img)
    h, w, _ = img.shape
    keep = rng.random(size=(h, w)) >= p
    out = img.copy()
    out[~keep] = 0.0
    return out


def cutout(img: np.ndarray, rng: np.random.Generator,
           holes: int, side_lo: int, side_hi: int) -> np.ndarray:
    """Zero ``holes`` axis-aligned squares at random centers.

    Per hole the draws are: side uniform over {side_lo..side_hi}, then
    center-y, center-x uniform over the image.  Squares are clipped at the
    border, so they may overlap and cover fewer pixels than side**2.
    """
    _check_image(img)
    h, w, _ = img.shape
    out = img.copy()
    for _ in range(holes):
        side = int(rng.integers(side_lo, side_hi + 1))
        cy = int(rng.integers(0, h))
        cx = int(rng.integers(0, w))
        y_lo = max(cy - side // 2, 0)
        x_lo = max(cx - side // 2, 0)
        out[y_lo : y_lo + side, x_lo : x_lo + side] = 0.0
    return out


def grayscale(img: np.ndarray, rng: np.random.Generator, p: float) -> np.ndarray:
    """With probability p, replace every channel by the channel mean.

    The mean is taken in float64 so an already-gray image is returned
    bit-identically.  Single-channel input passes through (after the draw).
    Draws: one uniform.
    """
    _check_image(img)
    apply = rng.random() < p
    if not apply or img.shape[2] == 1:
        return img.copy()
    lum = img.astype(np.float64).mean(axis=2, keepdims=True)
    return np.repeat(lum, img.shape[2], axis=2).astype(np.float32)


_OP_FUNCS = {
    "C": crop,
    "H": hflip,
    "V": vflip,
    "R": rotate,
    "W": warp,
    "DROP": dropout,
    "CUT": cutout,
    "G": grayscale,
}


def apply_policy(img: np.ndarray, policy: AugmentationPolicy,
                 rng: np.random.Generator) -> np.ndarray:
    """Run the policy's operators in order, all drawing from ``rng``.

    The empty policy returns an untouched copy.
    """
    out = _check_image(img).copy()
    for op in policy.ops:
        out = _OP_FUNCS[op.token](out, rng, **op.params)
    return out


def augment_batch(images: np.ndarray, policy: AugmentationPolicy,
                  rng: np.random.Generator) -> np.ndarray:
    """Apply the policy to each image of an (M, H, W, C) batch, in row order."""
    if images.ndim != 4:
        raise ValueError(f"batch must be (M, H, W, C), got shape {images.shape}")
    return np.stack([apply_policy(im, policy, rng) for im in images])
