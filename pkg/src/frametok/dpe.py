"""Prototype scoring and top-K selection, hard and differentiable.

The trainable path relaxes the discrete top-K through random score
perturbations: the soft selection matrix is the Monte Carlo mean of hard
sorted-top-K indicators under Gaussian noise, and its gradient is the
matching score-function estimator, so a scorer network upstream can be
trained end-to-end.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import NumericError, ValidationError
from .numerics import mlp_forward
from .rng import stream


@dataclass
class ScoreVector:
    raw: np.ndarray         # (L,) regressed scores
    normalized: np.ndarray  # min-max mapped to [0, 1]


@dataclass
class PerturbConfig:
    sigma: float
    n_samples: int
    seed: int

    def validate(self):
        if self.sigma <= 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if self.n_samples < 1:
            raise ValidationError(f"n_samples must be >= 1, got {self.n_samples}")
        return self


@dataclass
class SelectionResult:
    indices: np.ndarray                  # (K,) prototype ids, best first
    hard_selection: np.ndarray           # (K, L) one-hot rows
    soft_selection: Optional[np.ndarray]  # (K, L) perturbed mean, train mode
    selected: np.ndarray                 # (K, rows, d) prototypes fed downstream
    frame_mask: np.ndarray               # (T,) 1 where a selected center lives


@dataclass
class ScoreCache:
    features: np.ndarray
    mlp_cache: object


@dataclass
class TopkCache:
    scores: np.ndarray   # (L,) reference point of the sampling
    noise: np.ndarray    # (m, L) standard normal draws
    idx: np.ndarray      # (m, K) per-sample sorted top-K indices
    sigma: float


def minmax_normalize(raw):
    """Map scores to [0, 1]; a constant vector maps to all 0.5."""
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.full_like(raw, 0.5)
    return (raw - lo) / (hi - lo)


def prototype_features(prototypes):
    """Per-prototype scorer input: max-norm row concatenated with mean row."""
    norms = np.linalg.norm(prototypes, axis=2)
    max_rows = prototypes[np.arange(prototypes.shape[0]), norms.argmax(axis=1)]
    mean_rows = prototypes.mean(axis=1)
    return np.concatenate([max_rows, mean_rows], axis=1)


def score_prototypes(protos, scorer):
    """Regress one score per prototype and min-max normalize."""
    feats = prototype_features(protos.prototypes)
    if scorer.in_dim != feats.shape[1]:
        raise ValidationError(
            f"scorer expects input dim {scorer.in_dim}, features have {feats.shape[1]}"
        )
    if scorer.out_dim != 1:
        raise ValidationError(f"scorer must output one value, not {scorer.out_dim}")
    out, cache = mlp_forward(scorer, feats)
    raw = out[:, 0]
    return ScoreVector(raw=raw, normalized=minmax_normalize(raw)), \
        ScoreCache(features=feats, mlp_cache=cache)


def hard_topk(scores, k, protos, n_frames):
    """Gather the k best prototypes; ties fall to the lower index."""
    n_scores = scores.normalized.shape[0]
    if k > n_scores:
        raise ValidationError(f"cannot select {k} of {n_scores} prototypes")
    order = np.argsort(-scores.normalized, kind="stable")
    indices = order[:k].astype(np.int64)
    hard = np.zeros((k, n_scores), dtype=scores.raw.dtype)
    hard[np.arange(k), indices] = 1.0
    mask = np.zeros(n_frames, dtype=np.uint8)
    mask[protos.center_indices[indices]] = 1
    return SelectionResult(
        indices=indices,
        hard_selection=hard,
        soft_selection=None,
        selected=protos.prototypes[indices],
        frame_mask=mask,
    )


def perturbed_topk_forward(raw_scores, k, cfg):
    """Soft selection matrix: mean of sorted top-K indicators under noise.

    Row r of each per-sample indicator is one-hot at the index of the
    r-th largest perturbed score.
    """
    cfg.validate()
    n_scores = raw_scores.shape[0]
    if k > n_scores:
        raise ValidationError(f"cannot select {k} of {n_scores} prototypes")
    if not np.isfinite(raw_scores).all():
        raise NumericError("non-finite scores fed to the perturbed selector")
    noise = stream(cfg.seed, "topk-noise").standard_normal(
        (cfg.n_samples, n_scores)
    ).astype(raw_scores.dtype)
    perturbed = raw_scores[None, :] + cfg.sigma * noise
    idx = kernels.topk_rows(perturbed, k)
    soft = kernels.indicator_mean(idx, n_scores).astype(raw_scores.dtype)
    return soft, TopkCache(scores=raw_scores.copy(), noise=noise, idx=idx,
                           sigma=cfg.sigma)


def perturbed_topk_backward(cache, d_soft):
    """Gradient of the sampled soft selection with respect to the scores.

    Score-function estimator: (1/(m*sigma)) sum_i <d_soft, indicator_i> z_i.
    """
    k, n_scores = d_soft.shape
    if k != cache.idx.shape[1] or n_scores != cache.noise.shape[1]:
        raise ValidationError(
            f"gradient shape {d_soft.shape} does not match cache "
            f"({cache.idx.shape[1]}, {cache.noise.shape[1]})"
        )
    return kernels.topk_backward(
        np.ascontiguousarray(d_soft), cache.idx, cache.noise, cache.sigma
    )


def perturbed_topk_value(cache, scores):
    """Smooth revaluation of the cached sampling at nearby scores.

    Reweights the frozen samples by the Gaussian likelihood ratio of
    drawing them at `scores` instead of the cached reference. At the
    reference it reproduces the sampled forward, and its exact gradient
    there is the score-function estimator, which makes finite-difference
    checks of the backward pass meaningful.
    """
    delta = (scores - cache.scores) / cache.sigma
    log_w = np.einsum("ml,l->m", cache.noise, delta) - 0.5 * float(delta @ delta)
    w = np.exp(log_w)
    m, k = cache.idx.shape
    n_scores = cache.noise.shape[1]
    soft = np.empty((k, n_scores), dtype=np.float64)
    for col in range(k):
        soft[col] = np.bincount(cache.idx[:, col], weights=w, minlength=n_scores)
    return soft / m


def soft_mixture(soft, protos):
    """Blend prototypes by soft selection rows: (K, L) x (L, rows, d)."""
    flat = protos.prototypes.reshape(protos.n_prototypes, -1)
    mixed = kernels.matmul(soft, np.ascontiguousarray(flat))
    return mixed.reshape((soft.shape[0],) + protos.prototypes.shape[1:])


def dpe_select(protos, scorer, k, cfg, n_frames, mode="infer",
               straight_through=False):
    """Score prototypes and select the top k.

    infer: hard gather only. train: additionally sample the soft selection
    and hand back caches; `selected` becomes the soft mixture (or stays the
    hard gather when straight_through). Returns (SelectionResult, caches)
    with caches None in infer mode.
    """
    scores, score_cache = score_prototypes(protos, scorer)
    result = hard_topk(scores, k, protos, n_frames)
    if mode == "infer":
        return result, None
    if mode != "train":
        raise ValidationError(f"mode must be 'infer' or 'train', got {mode!r}")
    soft, topk_cache = perturbed_topk_forward(scores.raw, k, cfg)
    result.soft_selection = soft
    if not straight_through:
        result.selected = soft_mixture(soft, protos)
    return result, (scores, score_cache, topk_cache)
