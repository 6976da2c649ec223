"""Throughput comparison of the two resampling backends.

Runs the rotation and warp operators over a batch of images with each
backend forced in turn, checks the outputs are bit-identical, and prints
images/second plus the speedup.  Usage:

    python benchmarks/bench_kernels.py [--side 28] [--images 2000]
"""

import argparse
import time

import numpy as np

from aalkit.augment import _kernels_np, kernels, ops
from aalkit.augment.policy import policy_from_name
from aalkit.rng import new_rng


def _run(policy, images, impl, label):
    kernels._impl = impl
    rng = new_rng(0)
    t0 = time.perf_counter()
    out = [ops.apply_policy(img, policy, rng) for img in images]
    dt = time.perf_counter() - t0
    print(f"{label:>8}: {len(images) / dt:8.1f} images/s ({dt:.3f}s total)")
    return np.stack(out), dt


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--side", type=int, default=28)
    parser.add_argument("--images", type=int, default=2000)
    args = parser.parse_args()

    dataset = "omniglot" if args.side <= 32 else "miniimagenet"
    policy = policy_from_name("RW", dataset)
    data_rng = new_rng(42)
    images = data_rng.random((args.images, args.side, args.side, 1)).astype(np.float32)

    try:
        from aalkit.augment import _kernels_cy
    except ImportError:
        print("compiled backend not built; only the numpy backend is available")
        _run(policy, images, _kernels_np, "numpy")
        return

    original = kernels._impl
    try:
        out_np, t_np = _run(policy, images, _kernels_np, "numpy")
        out_cy, t_cy = _run(policy, images, _kernels_cy, "cython")
    finally:
        kernels._impl = original

    identical = np.array_equal(out_np, out_cy)
    print(f"outputs bit-identical: {identical}")
    print(f"speedup: {t_np / t_cy:.2f}x")
    if not identical:
        raise SystemExit("backend outputs differ")


if __name__ == "__main__":
    main()
