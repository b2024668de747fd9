"""Numpy reference implementations of the hot kernels.

This is the fallback backend used when the compiled extension is not
available. Results match the compiled backend exactly for integer-valued
inputs and to ~1e-9 relative tolerance for general floats (the two backends
may order floating-point additions differently).
"""

import numpy as np

_KNN_CHUNK = 32  # queries per distance block, keeps broadcasting under ~tens of MB


def single_bin_amplitudes(windows, k):
    """|DFT bin k| / N for each row of `windows` (n_windows, N)."""
    windows = np.asarray(windows, dtype=np.float64)
    n = windows.shape[1]
    phase = np.exp(-2j * np.pi * k * np.arange(n) / n)
    return np.abs(windows @ phase) / n


def clamped_walk(steps, clamp):
    """Cumulative sum of `steps` with the running level clamped to [-clamp, clamp]."""
    steps = np.asarray(steps, dtype=np.float64)
    out = np.empty_like(steps)
    level = 0.0
    lo, hi = -float(clamp), float(clamp)
    for i in range(steps.shape[0]):
        level += steps[i]
        if level > hi:
            level = hi
        elif level < lo:
            level = lo
        out[i] = level
    return out


def knn_predict(train_x, train_y, queries, k):
    """Majority label among the k nearest training rows (squared Euclidean).

    Neighbor order is lexicographic on (distance, training index), so exact
    distance ties resolve to the lower index. An even vote split returns 0.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    n_train = train_x.shape[0]
    idx = np.arange(n_train)
    labels = np.empty(queries.shape[0], dtype=np.int64)
    for start in range(0, queries.shape[0], _KNN_CHUNK):
        chunk = queries[start : start + _KNN_CHUNK]
        diffs = chunk[:, None, :] - train_x[None, :, :]
        dists = np.einsum("qtf,qtf->qt", diffs, diffs)
        for row in range(chunk.shape[0]):
            order = np.lexsort((idx, dists[row]))[:k]
            votes = int(train_y[order].sum())
            labels[start + row] = 1 if 2 * votes > k else 0
    return labels


def minmax_windows(windows):
    """Per-row min-max scaling to [0, 1]; constant rows map to all 0.5."""
    windows = np.asarray(windows, dtype=np.float64)
    lo = windows.min(axis=1, keepdims=True)
    hi = windows.max(axis=1, keepdims=True)
    span = hi - lo
    flat = span[:, 0] == 0.0
    span[flat] = 1.0
    out = (windows - lo) / span
    out[flat] = 0.5
    return out
