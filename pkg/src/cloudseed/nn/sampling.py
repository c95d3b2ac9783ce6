"""Fixed-size point resampling for variable-size patches."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError


def sample_fixed_points(
    points: np.ndarray, count: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Resample a point set to exactly `count` rows, deterministically.

    With n >= count the result is a uniform draw without replacement
    (a random permutation when n == count). With n < count every source
    point appears at least once and the remainder is drawn uniformly with
    replacement, so predictions can always be scattered back onto all n
    source points.

    Returns (sampled points of shape (count, 3), index map of shape
    (count,) into the input).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DimensionError(f"expected (n, 3) points, got {pts.shape}")
    n = pts.shape[0]
    if n < 1:
        raise DimensionError("need at least one point to sample")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    if n >= count:
        indices = rng.choice(n, size=count, replace=False)
    else:
        extra = rng.choice(n, size=count - n, replace=True)
        indices = rng.permutation(np.concatenate([np.arange(n), extra]))
    return pts[indices], indices
