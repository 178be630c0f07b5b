"""Dense-array math and the small trainable layers used by the pipeline.

Matrix products route through the kernel backend; multilayer perceptrons
carry hand-written forward/backward passes so gradients are analytic and
auditable, and `finite_diff_check` verifies them against central
differences.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NumericError, ValidationError


def matmul(a, b):
    """Matrix product with fixed accumulation order."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValidationError(
            f"matmul dimension mismatch: {a.shape} x {b.shape}"
        )
    return kernels.matmul(a, b)


def softmax_rows(x):
    """Row-wise softmax with per-row max subtraction for stability."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def block_pool(frame, grid, block):
    """Average-pool an (N, d) patch map over non-overlapping spatial blocks.

    The N rows are read as a grid[0] x grid[1] spatial layout in row-major
    order; each block[0] x block[1] cell becomes one output row.
    """
    g_r, g_c = grid
    s_r, s_c = block
    n, d = frame.shape
    if g_r * g_c != n:
        raise ValidationError(f"grid {grid} does not cover {n} patch rows")
    if g_r % s_r or g_c % s_c:
        raise ValidationError(f"grid {grid} not divisible by block {block}")
    cells = frame.reshape(g_r // s_r, s_r, g_c // s_c, s_c, d)
    pooled = cells.mean(axis=(1, 3))
    return pooled.reshape(-1, d)


@dataclass
class Mlp:
    """Stack of linear layers with one activation between them (none after
    the last). Parameters mutate only through `sgd_step`."""

    weights: list
    biases: list
    activation: str = "relu"

    @property
    def in_dim(self):
        return self.weights[0].shape[0]

    @property
    def out_dim(self):
        return self.weights[-1].shape[1]


def mlp_init(sizes, rng, dtype=np.float64, activation="relu"):
    """Glorot-uniform init: weights in [-a, a], a = sqrt(6/(fan_in+fan_out))."""
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValidationError(f"bad mlp sizes: {sizes}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return Mlp(weights, biases, activation)


def identity_mlp(dim, n_layers=1, dtype=np.float64):
    """Mlp that reproduces its input; handy in tests."""
    weights = [np.eye(dim, dtype=dtype) for _ in range(n_layers)]
    biases = [np.zeros(dim, dtype=dtype) for _ in range(n_layers)]
    return Mlp(weights, biases, activation="none")


@dataclass
class MlpCache:
    x: np.ndarray
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "none":
        return z
    raise ValidationError(f"unknown activation: {kind}")


def mlp_forward(mlp, x):
    """Forward pass; returns (output, cache) with the cache feeding backward."""
    if x.ndim != 2 or x.shape[1] != mlp.in_dim:
        raise ValidationError(
            f"mlp input {x.shape} incompatible with first layer {mlp.weights[0].shape}"
        )
    cache = MlpCache(x=x)
    h = x
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = matmul(h, w) + b
        cache.pre.append(z)
        h = _activate(z, mlp.activation) if i < last else z
        cache.post.append(h)
    return h, cache


def mlp_backward(mlp, cache, dy):
    """Analytic gradients of the cached forward.

    Returns (dx, grads) where grads is a list of (dW, db) matching layers.
    """
    if dy.shape != cache.post[-1].shape:
        raise ValidationError(
            f"upstream gradient {dy.shape} does not match cached output "
            f"{cache.post[-1].shape}"
        )
    if cache.x.shape[1] != mlp.in_dim:
        raise ValidationError("cache does not belong to this mlp")
    grads = [None] * len(mlp.weights)
    delta = dy
    last = len(mlp.weights) - 1
    for i in range(last, -1, -1):
        if i < last and mlp.activation == "relu":
            delta = delta * (cache.pre[i] > 0)
        h_in = cache.x if i == 0 else cache.post[i - 1]
        dw = matmul(h_in.T.copy(), delta)
        db = delta.sum(axis=0)
        grads[i] = (dw, db)
        delta = matmul(delta, mlp.weights[i].T.copy())
    return delta, grads


def sgd_step(mlp, grads, lr):
    """The one mutation point: plain gradient descent on all parameters."""
    for (w, b), (dw, db) in zip(zip(mlp.weights, mlp.biases), grads):
        w -= lr * dw
        b -= lr * db


@dataclass
class GradReport:
    max_abs_err: float
    max_rel_err: float
    per_param_errs: list

    def ok(self, tol):
        return self.max_rel_err < tol


def finite_diff_check(f, params, analytic, h=1e-5, names=None):
    """Compare central finite differences of f against analytic gradients.

    f is a scalar function of the parameter arrays (evaluated with all other
    randomness frozen by the caller). Per-parameter relative error is the
    norm of the difference over the larger of the two gradient norms.
    """
    if names is None:
        names = [f"param{i}" for i in range(len(params))]
    per_param = []
    max_abs = 0.0
    for p, a, name in zip(params, analytic, names):
        fd = np.zeros_like(p, dtype=np.float64)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            f_plus = f()
            p[idx] = orig - h
            f_minus = f()
            p[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(f"non-finite objective while probing {name}{idx}")
            fd[idx] = (f_plus - f_minus) / (2.0 * h)
        diff = np.linalg.norm(fd - a)
        denom = max(np.linalg.norm(fd), np.linalg.norm(a))
        rel = 0.0 if denom == 0.0 else float(diff / denom)
        per_param.append((name, rel))
        max_abs = max(max_abs, float(np.abs(fd - a).max(initial=0.0)))
    max_rel = max((e for _, e in per_param), default=0.0)
    return GradReport(max_abs_err=max_abs, max_rel_err=max_rel, per_param_errs=per_param)
