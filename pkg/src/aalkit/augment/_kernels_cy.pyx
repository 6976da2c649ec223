# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled resampling backend.

Same float64 expression tree per output pixel as _kernels_np, same float32
cast, so the two backends return equal bits.  Keep the operation order in
lockstep with the numpy file when editing either.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def bilinear_sample(const float[:, :, ::1] img,
                    const double[:, ::1] ys,
                    const double[:, ::1] xs):
    """Sample img (H, W, C) float32 at float64 coordinate grids (OH, OW)."""
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t c = img.shape[2]
    cdef Py_ssize_t oh = ys.shape[0]
    cdef Py_ssize_t ow = ys.shape[1]

    out_arr = np.empty((oh, ow, c), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr

    cdef Py_ssize_t i, j, k, y0, x0, y1, x1, y0c, x0c, y1c, x1c
    cdef double y, x, fy, fx, w00, w01, w10, w11, acc

    for i in range(oh):
        for j in range(ow):
            y = ys[i, j]
            x = xs[i, j]
            fy = y - floor(y)
            fx = x - floor(x)
            y0 = <Py_ssize_t>floor(y)
            x0 = <Py_ssize_t>floor(x)
            y1 = y0 + 1
            x1 = x0 + 1

            w00 = (1.0 - fy) * (1.0 - fx)
            w01 = (1.0 - fy) * fx
            w10 = fy * (1.0 - fx)
            w11 = fy * fx

            if not (0 <= y0 < h and 0 <= x0 < w):
                w00 = w00 * 0.0
            if not (0 <= y0 < h and 0 <= x1 < w):
                w01 = w01 * 0.0
            if not (0 <= y1 < h and 0 <= x0 < w):
                w10 = w10 * 0.0
            if not (0 <= y1 < h and 0 <= x1 < w):
                w11 = w11 * 0.0

            y0c = min(max(y0, 0), h - 1)
            y1c = min(max(y1, 0), h - 1)
            x0c = min(max(x0, 0), w - 1)
            x1c = min(max(x1, 0), w - 1)

            for k in range(c):
                acc = (<double>img[y0c, x0c, k]) * w00
                acc = acc + (<double>img[y0c, x1c, k]) * w01
                acc = acc + (<double>img[y1c, x0c, k]) * w10
                acc = acc + (<double>img[y1c, x1c, k]) * w11
                out[i, j, k] = <float>acc
    return out_arr
