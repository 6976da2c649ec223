"""Vectorized resampling backend.

Arithmetic contract shared with the compiled twin (_kernels_cy): every output
pixel is computed in float64 as

    acc = p00*w00; acc += p01*w01; acc += p10*w10; acc += p11*w11

with out-of-bounds neighbors contributing weight 0.0, then cast to float32.
Both backends follow that exact operation order, so their outputs are
bit-identical.  Any change here must be mirrored in the .pyx file.
"""

import numpy as np


def bilinear_sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample img (H, W, C) float32 at float64 coordinate grids (OH, OW).

    Coordinates are in pixel units of the source image; samples falling
    outside it read as zero.  Returns (OH, OW, C) float32.
    """
    h, w, _ = img.shape
    img64 = img.astype(np.float64)

    y0f = np.floor(ys)
    x0f = np.floor(xs)
    fy = ys - y0f
    fx = xs - x0f
    y0 = y0f.astype(np.int64)
    x0 = x0f.astype(np.int64)
    y1 = y0 + 1
    x1 = x0 + 1

    w00 = (1.0 - fy) * (1.0 - fx)
    w01 = (1.0 - fy) * fx
    w10 = fy * (1.0 - fx)
    w11 = fy * fx

    yv0 = (y0 >= 0) & (y0 < h)
    yv1 = (y1 >= 0) & (y1 < h)
    xv0 = (x0 >= 0) & (x0 < w)
    xv1 = (x1 >= 0) & (x1 < w)
    w00 = w00 * (yv0 & xv0).astype(np.float64)
    w01 = w01 * (yv0 & xv1).astype(np.float64)
    w10 = w10 * (yv1 & xv0).astype(np.float64)
    w11 = w11 * (yv1 & xv1).astype(np.float64)

    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x1, 0, w - 1)

    acc = img64[y0c, x0c] * w00[:, :, None]
    acc = acc + img64[y0c, x1c] * w01[:, :, None]
    acc = acc + img64[y1c, x0c] * w10[:, :, None]
    acc = acc + img64[y1c, x1c] * w11[:, :, None]
    return acc.astype(np.float32)
