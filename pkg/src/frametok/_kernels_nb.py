"""Numba-compiled kernel implementations.

Mirrors _kernels_np with explicit loops. No parallel=True and no fastmath:
accumulation orders are fixed, so results are bit-stable regardless of the
numba threading layer or OMP settings. Inner loops are arranged so the
independent lanes (never the accumulation chains) vectorize.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=a.dtype)
    for i in range(m):
        for j in range(k):
            aij = a[i, j]
            for col in range(n):
                out[i, col] += aij * b[j, col]
    return out


@njit(cache=True)
def pairwise_mean_sqdist(items):
    """(n, n) squared Frobenius distances / row count via the Gram matrix.

    Shared accumulation order between Gram and diagonal keeps distances of
    identical items exactly zero and the matrix bitwise symmetric.
    """
    n, rows, d = items.shape
    m = rows * d
    flat = items.reshape(n, m)
    flat_t = flat.T.copy()
    gram = np.zeros((n, n), dtype=items.dtype)
    for i in range(n):
        for k in range(m):
            aik = flat[i, k]
            for j in range(n):
                gram[i, j] += aik * flat_t[k, j]
    dist = np.empty((n, n), dtype=items.dtype)
    for i in range(n):
        for j in range(n):
            v = (gram[i, i] + gram[j, j] - 2.0 * gram[i, j]) / rows
            dist[i, j] = v if v > 0.0 else 0.0
    return dist


@njit(cache=True)
def topk_rows(values, k):
    """Per-row indices of the k largest entries, descending, ties by index."""
    m = values.shape[0]
    out = np.empty((m, k), dtype=np.int64)
    neg = -values
    for i in range(m):
        out[i] = np.argsort(neg[i], kind="mergesort")[:k]
    return out


@njit(cache=True)
def indicator_mean(idx, n_candidates):
    m, k = idx.shape
    counts = np.zeros((k, n_candidates), dtype=np.int64)
    for i in range(m):
        for col in range(k):
            counts[col, idx[i, col]] += 1
    return counts / float(m)


@njit(cache=True)
def topk_backward(d_soft, idx, noise, sigma):
    m, k = idx.shape
    n = noise.shape[1]
    grad = np.zeros(n, dtype=noise.dtype)
    for i in range(m):
        weight = 0.0
        for col in range(k):
            weight += d_soft[col, idx[i, col]]
        for j in range(n):
            grad[j] += weight * noise[i, j]
    return grad / (m * sigma)
