"""Deterministic low-discrepancy sampling for the hypothesis probes.

Probes must be reproducible and prefix-nested (the first n points of a
longer sequence are exactly the n-point sequence), so constants estimated
from them are monotone under sample-count doubling. Halton sequences give
both properties without consulting any RNG.
"""

from __future__ import annotations

import numpy as np

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53)


def halton(count: int, dim: int, skip: int = 0) -> np.ndarray:
    """First ``count`` points of the ``dim``-dimensional Halton sequence.

    ``skip`` offsets the start index, used to draw independent-looking
    sub-sequences for different probe roles.
    """
    if dim > len(_PRIMES):
        raise ValueError(f"halton: dimension {dim} exceeds supported {len(_PRIMES)}")
    out = np.empty((count, dim))
    for j in range(dim):
        base = _PRIMES[j]
        for k in range(count):
            i = k + 1 + skip
            value, denom = 0.0, 1.0
            while i > 0:
                denom *= base
                i, rem = divmod(i, base)
                value += rem / denom
            out[k, j] = value
    return out


def box_points(count: int, box: np.ndarray, skip: int = 0) -> np.ndarray:
    """Halton points scaled into ``box`` (shape (d, 2) of [lo, hi] rows)."""
    lo, hi = box[:, 0], box[:, 1]
    return lo + halton(count, box.shape[0], skip=skip) * (hi - lo)


def as_box(box, dim_hint: int | None = None) -> np.ndarray:
    """Normalize a box spec ((lo, hi) pair or per-axis rows) to shape (d, 2)."""
    arr = np.asarray(box, dtype=float)
    if arr.ndim == 1:
        if arr.shape != (2,):
            raise ValueError("box: one-dimensional spec must be (lo, hi)")
        arr = np.tile(arr, (dim_hint or 1, 1))
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("box: expected shape (d, 2)")
    if np.any(arr[:, 1] < arr[:, 0]):
        raise ValueError("box: upper bound below lower bound")
    if np.any(arr[:, 1] == arr[:, 0]):
        raise ValueError("box: degenerate (zero volume)")
    return arr
