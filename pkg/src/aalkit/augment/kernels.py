"""Resampling kernel dispatch.

The bilinear sampler sits on the hot path of rotation and elastic warp, so it
ships in two interchangeable builds: a Cython extension and a pure-numpy
fallback.  The compiled one is picked at import when present; set
AALKIT_KERNELS=numpy (or =cython) to force a backend.  Both produce
bit-identical float32 output (see benchmarks/bench_kernels.py for the speed
comparison).
"""

import os

import numpy as np

from . import _kernels_np

_ENV_VAR = "AALKIT_KERNELS"
_requested = os.environ.get(_ENV_VAR, "").strip().lower()
if _requested not in ("", "numpy", "cython"):
    raise ImportError(
        f"{_ENV_VAR} must be 'numpy' or 'cython', got {_requested!r}"
    )

if _requested == "numpy":
    _impl = _kernels_np
    _backend = "numpy"
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[no-redef]
        _backend = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        _impl = _kernels_np
        _backend = "numpy"


def active_backend() -> str:
    """Name of the sampling backend selected at import: cython or numpy."""
    return _backend


def bilinear_sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear lookup of img (H, W, C) at coordinate grids ys/xs (OH, OW).

    Coordinates are float64 pixel positions in the source frame; samples
    outside the image read as zero.  Returns float32 (OH, OW, C).
    """
    img = np.ascontiguousarray(img, dtype=np.float32)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"img must be (H, W, C), got shape {img.shape}")
    if ys.ndim != 2 or ys.shape != xs.shape:
        raise ValueError(
            f"ys and xs must be equal-shape 2-D grids, got {ys.shape} and {xs.shape}"
        )
    return _impl.bilinear_sample(img, ys, xs)


def upsample_grid(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear upsampling of a small 2-D float grid (align-corners).

    Used for the coarse control grids behind the elastic warp and the
    synthetic class motifs; these are tiny, so plain numpy is enough.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
        raise ValueError(f"grid must be non-empty 2-D, got shape {grid.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be positive")
    gh, gw = grid.shape
    ys = np.linspace(0.0, gh - 1.0, out_h) if gh > 1 else np.zeros(out_h)
    xs = np.linspace(0.0, gw - 1.0, out_w) if gw > 1 else np.zeros(out_w)
    y0 = np.minimum(ys.astype(np.int64), max(gh - 2, 0))
    x0 = np.minimum(xs.astype(np.int64), max(gw - 2, 0))
    dy = (ys - y0)[:, None]
    dx = (xs - x0)[None, :]
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    return (grid[np.ix_(y0, x0)] * (1 - dy) * (1 - dx)
            + grid[np.ix_(y0, x1)] * (1 - dy) * dx
            + grid[np.ix_(y1, x0)] * dy * (1 - dx)
            + grid[np.ix_(y1, x1)] * dy * dx)
