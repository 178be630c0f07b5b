"""Pure-numpy kernel implementations.

Fallback path when numba is unavailable or FRAMETOK_BACKEND=numpy.
Everything here must stay single-threaded and bit-stable, which is why
matrix products go through plain `einsum` (sequential C accumulation)
instead of the threaded BLAS behind `np.dot`.
"""

import numpy as np


def matmul(a, b):
    return np.einsum("ij,jk->ik", a, b)


def pairwise_mean_sqdist(items):
    """Symmetric (n, n) matrix of squared Frobenius distances / row count.

    `items` is (n, rows, d); identical items produce exact zeros because
    Gram and squared-norm entries share the same accumulation order.
    """
    n, rows, d = items.shape
    flat = items.reshape(n, rows * d)
    sq = np.einsum("ij,ij->i", flat, flat)
    gram = np.einsum("ik,jk->ij", flat, flat)
    dist = sq[:, None] + sq[None, :] - 2.0 * gram
    np.maximum(dist, 0.0, out=dist)
    dist /= rows
    return dist


def topk_rows(values, k):
    """Per-row indices of the k largest entries, descending, ties by index."""
    order = np.argsort(-values, axis=1, kind="stable")
    return np.ascontiguousarray(order[:, :k])


def indicator_mean(idx, n_candidates):
    """Mean of one-hot indicator stacks: (m, K) index rows -> (K, L)."""
    m, k = idx.shape
    counts = np.empty((k, n_candidates), dtype=np.int64)
    for col in range(k):
        counts[col] = np.bincount(idx[:, col], minlength=n_candidates)
    return counts / float(m)


def topk_backward(d_soft, idx, noise, sigma):
    """Contract the indicator/noise Jacobian estimator with d_soft.

    d_soft is (K, L), idx is (m, K) per-sample selections, noise is (m, L).
    Returns the (L,) gradient (1/(m*sigma)) * sum_i <d_soft, ind_i> * z_i.
    """
    m, k = idx.shape
    per_sample = d_soft[np.arange(k)[None, :], idx].sum(axis=1)
    grad = np.einsum("ml,m->l", noise, per_sample)
    return grad / (m * sigma)
