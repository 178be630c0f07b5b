"""Density-peaks clustering over k-nearest-neighbour densities.

Runs temporally over pooled frame maps (items are P x d feature maps) and
spatially over patch rows within one frame (items are 1 x d rows). Cluster
centers maximize density x separation; members aggregate into prototypes
by importance-weighted averaging.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ValidationError


@dataclass
class DensityProfile:
    density: np.ndarray      # exp(-mean squared distance to the C nearest)
    separation: np.ndarray   # distance to the nearest denser item
    importance: np.ndarray   # density * separation, elementwise


@dataclass
class EventPrototypeSet:
    prototypes: np.ndarray        # (L, rows, d) importance-weighted means
    center_indices: np.ndarray    # (L,) item index of each cluster center
    assignments: np.ndarray       # (n_items,) cluster id per item
    center_importance: np.ndarray  # importance at the centers

    @property
    def n_prototypes(self):
        return self.prototypes.shape[0]


def default_neighbor_count(n_items):
    """sqrt-of-n heuristic, at least 2, capped at n_items - 1."""
    return min(max(2, int(round(np.sqrt(n_items)))), n_items - 1)


def knn_distances(items, c):
    """Pairwise mean-squared distances plus per-item C-nearest neighbours.

    Distance ties break toward the lower item index; an item is never its
    own neighbour.
    """
    n = items.shape[0]
    if c < 1:
        raise ValidationError(f"neighbor count must be >= 1, got {c}")
    if c >= n:
        raise ValidationError(f"neighbor count {c} must be < item count {n}")
    dist = kernels.pairwise_mean_sqdist(np.ascontiguousarray(items))
    masked = dist.copy()
    np.fill_diagonal(masked, np.inf)
    order = np.argsort(masked, axis=1, kind="stable")
    return dist, order[:, :c]


def local_density(dist, neighbors):
    mean_knn = dist[np.arange(dist.shape[0])[:, None], neighbors].mean(axis=1)
    return np.exp(-mean_knn)


def distance_indicator(dist, density):
    """Distance to the nearest strictly-denser item; the densest items
    (ties included) take the maximum distance instead."""
    n = dist.shape[0]
    sep = np.empty(n, dtype=dist.dtype)
    for i in range(n):
        higher = density > density[i]
        if higher.any():
            sep[i] = dist[i, higher].min()
        else:
            sep[i] = dist[i].max() if n > 1 else 0.0
    return sep


def select_centers(importance, n_centers):
    """Indices of the largest importance values, ties toward lower index.

    n_centers is clamped to the item count.
    """
    if n_centers < 1:
        raise ValidationError(f"need at least one center, got {n_centers}")
    n_centers = min(n_centers, importance.shape[0])
    order = np.argsort(-importance, kind="stable")
    return order[:n_centers]


def aggregate_prototypes(items, dist, profile, centers):
    """Assign every item to its nearest center and build weighted means.

    Weights are exp(importance); assignment ties go to the earlier center
    in the list (the higher-importance one). A center always belongs to
    its own cluster, even when another center sits at distance zero.
    """
    to_centers = dist[:, centers]                      # (n_items, L)
    assignments = np.argmin(to_centers, axis=1)
    assignments[centers] = np.arange(centers.shape[0])
    weights = np.exp(profile.importance)
    n_centers = centers.shape[0]
    protos = np.empty((n_centers,) + items.shape[1:], dtype=items.dtype)
    for l in range(n_centers):
        members = assignments == l
        w = weights[members]
        protos[l] = np.einsum("i,ird->rd", w, items[members]) / w.sum()
    return EventPrototypeSet(
        prototypes=protos,
        center_indices=centers.astype(np.int64),
        assignments=assignments.astype(np.int64),
        center_importance=profile.importance[centers],
    )


def density_profile(items, c=None):
    """Density/separation/importance for a stack of items."""
    n = items.shape[0]
    if n == 1:
        one = np.ones(1, dtype=items.dtype)
        zero = np.zeros(1, dtype=items.dtype)
        return DensityProfile(density=one, separation=zero, importance=zero), \
            np.zeros((1, 1), dtype=items.dtype)
    if c is None or c == 0:
        c = default_neighbor_count(n)
    dist, neighbors = knn_distances(items, c)
    rho = local_density(dist, neighbors)
    sep = distance_indicator(dist, rho)
    return DensityProfile(density=rho, separation=sep, importance=rho * sep), dist


def cluster(items, n_centers, c=None):
    """Full pass: profile, pick centers, aggregate prototypes.

    items is (n, rows, d); n_centers is clamped to n.
    """
    if items.ndim != 3:
        raise ValidationError(f"cluster input must be (n, rows, d), got {items.shape}")
    profile, dist = density_profile(items, c)
    centers = select_centers(profile.importance, n_centers)
    protos = aggregate_prototypes(items, dist, profile, centers)
    return protos, profile


def spatial_multigrained(frame, layer_sizes, c=None):
    """Stacked spatial clustering of one frame's patch rows.

    Layer 1 clusters the N rows into layer_sizes[0] prototypes; each later
    layer re-clusters the previous layer's output. Returns the
    concatenation of every layer's prototypes: (sum(layer_sizes), d).
    """
    if any(a < b for a, b in zip(layer_sizes, layer_sizes[1:])):
        raise ValidationError(f"layer sizes must be non-increasing: {layer_sizes}")
    if layer_sizes[0] > frame.shape[0]:
        raise ValidationError(
            f"first layer wants {layer_sizes[0]} prototypes from {frame.shape[0]} rows"
        )
    current = frame[:, None, :]  # each patch row is one item
    outputs = []
    for size in layer_sizes:
        protos, _ = cluster(current, size, c)
        flat = protos.prototypes[:, 0, :]
        outputs.append(flat)
        current = flat[:, None, :]
    return np.concatenate(outputs, axis=0)
