"""End-to-end orchestration: compress a video's features into tokens,
generate synthetic corpora with planted ground truth, and run a small
training demo that exercises the differentiable selector.

All randomness is drawn from counter-based streams keyed by (seed, tag),
so repeated runs are bit-identical regardless of thread count.
"""

import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import cce, dpc, dpe
from .errors import TrainingError, ValidationError
from .numerics import (
    block_pool, finite_diff_check, matmul, mlp_backward, mlp_forward,
    mlp_init, sgd_step,
)
from .rng import stream, derive
from .storage import read_tensor, write_tensor


@dataclass
class SyntheticSpec:
    T: int
    d: int
    n_events: int
    relevant_fraction: float
    noise_std: float
    seed: int
    n_patches: int = 256

    def validate(self):
        if self.T < 1 or not 1 <= self.n_events <= self.T:
            raise ValidationError(f"need 1 <= n_events <= T, got {self.n_events}, {self.T}")
        if not 0.0 < self.relevant_fraction <= 1.0:
            raise ValidationError(f"relevant_fraction must be in (0, 1], got {self.relevant_fraction}")
        if self.noise_std < 0 or self.n_patches < 1:
            raise ValidationError("noise_std must be >= 0 and n_patches >= 1")
        return self


def spec_from_dict(data):
    unknown = set(data) - set(SyntheticSpec.__dataclass_fields__)
    if unknown:
        raise ValidationError(f"unknown synthetic-spec keys: {sorted(unknown)}")
    return SyntheticSpec(**data).validate()


def load_spec(path):
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))


@dataclass
class ModelParams:
    scorer: object
    f_fine: object
    f_coarse: object
    f_q: object
    f_k: object


def scorer_sizes(d):
    if d < 4:
        raise ValidationError(f"feature dim {d} too small for the scorer (need >= 4)")
    return [2 * d, d // 2, d // 4, 1]


def encoder_sizes(d, d_out):
    sizes = [d, d, d]
    if d_out != d:
        sizes.append(d_out)
    return sizes


def init_params(cfg, dtype=np.float32):
    """Seeded parameter set; each component has its own random stream."""
    d, d_out = cfg.d, cfg.d_prime
    return ModelParams(
        scorer=mlp_init(scorer_sizes(d), stream(cfg.seed, "scorer"), dtype),
        f_fine=mlp_init(encoder_sizes(d, d_out), stream(cfg.seed, "f-fine"), dtype),
        f_coarse=mlp_init(encoder_sizes(d, d_out), stream(cfg.seed, "f-coarse"), dtype),
        f_q=mlp_init([d, d], stream(cfg.seed, "f-q"), dtype),
        f_k=mlp_init([d, d], stream(cfg.seed, "f-k"), dtype),
    )


def save_params(params, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name in ("scorer", "f_fine", "f_coarse", "f_q", "f_k"):
        mlp = getattr(params, name)
        for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            write_tensor(os.path.join(out_dir, f"{name}.w{i}.dft"), w)
            write_tensor(os.path.join(out_dir, f"{name}.b{i}.dft"), b)


def load_params(cfg, params_dir, dtype=np.float32):
    params = init_params(cfg, dtype)
    for name in ("scorer", "f_fine", "f_coarse", "f_q", "f_k"):
        mlp = getattr(params, name)
        for i in range(len(mlp.weights)):
            w = read_tensor(os.path.join(params_dir, f"{name}.w{i}.dft"))
            b = read_tensor(os.path.join(params_dir, f"{name}.b{i}.dft"))
            if w.shape != mlp.weights[i].shape:
                raise ValidationError(
                    f"{name} layer {i}: stored shape {w.shape} "
                    f"does not match config shape {mlp.weights[i].shape}"
                )
            mlp.weights[i] = w.astype(dtype)
            mlp.biases[i] = b.astype(dtype)
    return params


def _pool_grid(n_patches, cfg):
    g = int(round(np.sqrt(n_patches)))
    if g * g != n_patches:
        raise ValidationError(f"patch count {n_patches} is not a square grid")
    if g % cfg.pool_block:
        raise ValidationError(f"grid {g} not divisible by pool_block {cfg.pool_block}")
    pooled = (g // cfg.pool_block) ** 2
    if pooled != cfg.P:
        raise ValidationError(
            f"pooling {n_patches} patches with block {cfg.pool_block} gives "
            f"{pooled} rows, config expects P={cfg.P}"
        )
    return g


def _ingest_text(text, cfg, report):
    if text.ndim != 2 or text.shape[0] < 1:
        raise ValidationError(f"text must be (R, d), got {text.shape}")
    if text.shape[1] != cfg.d:
        proj = stream(cfg.seed, "text-proj").standard_normal(
            (text.shape[1], cfg.d)
        ).astype(text.dtype) / np.sqrt(text.shape[1])
        report["text_projected_from"] = int(text.shape[1])
        return matmul(text, proj)
    return text


def compress(frames, text, params, cfg, mode="infer"):
    """Pool, cluster temporally, score and select, then encode per frame.

    frames is (T, N, d); text is (R, d) (other text dims are projected in
    with a seeded fixed matrix). Returns (TokenSequence, report dict).
    """
    t_start = time.perf_counter()
    if frames.ndim != 3:
        raise ValidationError(f"frames must be (T, N, d), got {frames.shape}")
    n_frames, n_patches, d = frames.shape
    if n_frames < 1:
        raise ValidationError("need at least one frame")
    if d != cfg.d:
        raise ValidationError(f"frames have feature dim {d}, config says {cfg.d}")
    if not np.isfinite(frames).all() or not np.isfinite(text).all():
        raise ValidationError("non-finite values in input features")
    g = _pool_grid(n_patches, cfg)

    report = {"config": cfg.to_dict(), "mode": mode}
    text = _ingest_text(text, cfg, report)

    pooled = np.stack([
        block_pool(frame, (g, g), (cfg.pool_block, cfg.pool_block))
        for frame in frames
    ])

    l_eff = min(cfg.L, n_frames)
    k_eff = min(cfg.K, l_eff)
    protos, _profile = dpc.cluster(pooled, l_eff, cfg.C or None)
    perturb = dpe.PerturbConfig(cfg.sigma, cfg.n_samples, cfg.seed)
    selection, _caches = dpe.dpe_select(
        protos, params.scorer, k_eff, perturb, n_frames, mode
    )
    rank_of_frame = {
        int(protos.center_indices[p]): rank
        for rank, p in enumerate(selection.indices)
    }

    encodings = []
    for t in range(n_frames):
        spatial = dpc.spatial_multigrained(frames[t], cfg.layer_sizes, cfg.C or None)
        coarse = cce.rods_encode(spatial, text, params.f_q, params.f_k, params.f_coarse)
        fine = None
        if selection.frame_mask[t]:
            fine = cce.cones_encode(
                selection.selected[rank_of_frame[t]], spatial, params.f_fine
            )
        encodings.append(
            cce.cooperative_combine(fine, coarse, int(selection.frame_mask[t]), t)
        )
    seq = cce.build_sequence(encodings)

    scores, _ = dpe.score_prototypes(protos, params.scorer)
    report.update({
        "n_frames": n_frames,
        "effective_L": l_eff,
        "effective_K": k_eff,
        "selected_frames": [int(protos.center_indices[p]) for p in selection.indices],
        "selected_prototypes": [int(p) for p in selection.indices],
        "scores": [float(s) for s in scores.normalized],
        "budget": cce.budget_report(seq, uniform_fine=n_patches),
        "timing": {"seconds": time.perf_counter() - t_start},
    })
    return seq, report


def write_tokens(seq, out_dir):
    """One stacked tokens.dft plus a manifest with per-frame row offsets."""
    os.makedirs(out_dir, exist_ok=True)
    stacked = np.concatenate([e.tokens for e in seq.per_frame], axis=0)
    write_tensor(os.path.join(out_dir, "tokens.dft"), stacked)
    manifest = {"total_tokens": int(stacked.shape[0]), "frames": []}
    offset = 0
    for enc in seq.per_frame:
        n_tok = int(enc.tokens.shape[0])
        manifest["frames"].append({
            "frame_index": enc.frame_index,
            "kind": enc.kind,
            "n_tok": n_tok,
            "offset": offset,
        })
        offset += n_tok
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def generate_synthetic(spec, dtype=np.float32):
    """Planted corpus for one video: contiguous events around Gaussian
    means, a relevant subset, and a text embedding near the relevant mean.

    Returns (frames (T, N, d), text (1, d), truth (T,) of {0., 1.}).
    """
    spec.validate()
    rng = stream(spec.seed, "synth")
    t_total, d, n_events = spec.T, spec.d, spec.n_events

    means = rng.normal(0.0, 1.0 / np.sqrt(d), size=(n_events, d))
    n_rel = max(1, int(round(spec.relevant_fraction * n_events)))
    relevant = np.zeros(n_events, dtype=bool)
    relevant[rng.choice(n_events, size=n_rel, replace=False)] = True

    base, rem = divmod(t_total, n_events)
    lengths = [base + (1 if e < rem else 0) for e in range(n_events)]
    event_of_frame = np.repeat(np.arange(n_events), lengths)

    noise = rng.normal(0.0, spec.noise_std, size=(t_total, spec.n_patches, d))
    frames = means[event_of_frame][:, None, :] + noise
    text = means[relevant].mean(axis=0, keepdims=True) \
        + rng.normal(0.0, spec.noise_std, size=(1, d))
    truth = relevant[event_of_frame].astype(np.float64)
    return frames.astype(dtype), text.astype(dtype), truth.astype(dtype)


def plant_profile_corpus(out_dir, n_videos, n_frames, d, dup_fraction,
                         irrelevant_fraction, seed):
    """Write a profiling corpus with exact planted redundancy fractions.

    Each video is unit vectors around a text direction: relevant frames sit
    at cosine 0.5 to it, irrelevant at 0.05; a planted set of consecutive
    pairs are near-duplicates. Returns the planted per-video fractions.
    """
    if n_frames < 3:
        raise ValidationError("need at least 3 frames per video")
    if not 0 <= dup_fraction <= 0.95 or not 0 <= irrelevant_fraction <= 1:
        raise ValidationError("fractions out of range")
    os.makedirs(out_dir, exist_ok=True)
    n_dup = int(round(dup_fraction * (n_frames - 1)))
    n_irr = int(round(irrelevant_fraction * n_frames))

    for v in range(n_videos):
        rng = stream(seed, f"profile-video-{v}")
        qa = rng.standard_normal(d)
        qa /= np.linalg.norm(qa)

        rel = np.ones(n_frames, dtype=bool)
        if n_irr:
            if rng.integers(2):
                rel[:n_irr] = False
            else:
                rel[n_frames - n_irr:] = False
        valid = np.flatnonzero(rel[:-1] == rel[1:])
        if n_dup > valid.size:
            raise ValidationError(
                f"cannot plant {n_dup} duplicate pairs with only {valid.size} "
                "same-relevance positions"
            )
        dup = np.zeros(n_frames - 1, dtype=bool)
        dup[rng.choice(valid, size=n_dup, replace=False)] = True

        def fresh(is_rel):
            s = 0.5 if is_rel else 0.05
            raw = rng.standard_normal(d)
            orth = raw - (raw @ qa) * qa
            orth /= np.linalg.norm(orth)
            return s * qa + np.sqrt(1.0 - s * s) * orth

        frames = np.empty((n_frames, d))
        frames[0] = fresh(rel[0])
        for t in range(1, n_frames):
            if dup[t - 1]:
                vec = frames[t - 1] + 0.01 * rng.standard_normal(d)
                frames[t] = vec / np.linalg.norm(vec)
            else:
                frames[t] = fresh(rel[t])

        video_dir = os.path.join(out_dir, f"{v:03d}")
        os.makedirs(video_dir, exist_ok=True)
        write_tensor(os.path.join(video_dir, "frames.dft"), frames.astype(np.float32))
        write_tensor(os.path.join(video_dir, "qa.dft"), qa.astype(np.float32))

    return {
        "n_videos": n_videos,
        "planted_r_d": n_dup / (n_frames - 1),
        "planted_r_a": n_irr / n_frames,
    }


def selector_gradcheck(d, p_rows, l, k, sigma, n_samples, seed, h=1e-5):
    """Finite-difference check of the full trainable chain.

    Builds random prototypes, runs scorer -> perturbed top-K -> mixture
    loss, and compares analytic parameter gradients against central
    differences of the smooth common-random-number revaluation of the
    same sampled forward. Returns a GradReport.
    """
    protos_rng = stream(seed, "gradcheck-protos")
    prototypes = protos_rng.standard_normal((l, p_rows, d))
    protos = dpc.EventPrototypeSet(
        prototypes=prototypes,
        center_indices=np.arange(l, dtype=np.int64),
        assignments=np.arange(l, dtype=np.int64),
        center_importance=np.zeros(l),
    )
    target = stream(seed, "gradcheck-target").standard_normal(p_rows * d)
    proto_flat = np.ascontiguousarray(prototypes.reshape(l, -1))
    proto_flat_t = np.ascontiguousarray(proto_flat.T)

    # resample the scorer until every hidden pre-activation clears the
    # relu kink by a margin much larger than the probe step
    scorer = None
    for attempt in range(64):
        candidate = mlp_init(
            scorer_sizes(d),
            stream(derive(seed, f"gradcheck-scorer-{attempt}"), "scorer"),
            np.float64,
        )
        _, cache = mlp_forward(candidate, dpe.prototype_features(prototypes))
        margin = min(np.abs(z).min() for z in cache.pre[:-1])
        if margin > 1e-3:
            scorer = candidate
            break
    if scorer is None:
        raise ValidationError("could not find a kink-free scorer init")

    scores_ref, score_cache = dpe.score_prototypes(protos, scorer)
    perturb = dpe.PerturbConfig(sigma, n_samples, derive(seed, "gradcheck-noise"))
    _soft_ref, topk_cache = dpe.perturbed_topk_forward(scores_ref.raw, k, perturb)

    def objective():
        out, _ = mlp_forward(scorer, dpe.prototype_features(prototypes))
        soft = dpe.perturbed_topk_value(topk_cache, out[:, 0])
        diff = matmul(soft, proto_flat).mean(axis=0) - target
        return float(diff @ diff)

    soft0 = dpe.perturbed_topk_value(topk_cache, scores_ref.raw)
    diff = matmul(soft0, proto_flat).mean(axis=0) - target
    d_mixed = np.tile(diff * (2.0 / k), (k, 1))
    d_soft = matmul(d_mixed, proto_flat_t)
    d_scores = dpe.perturbed_topk_backward(topk_cache, d_soft)
    _, grads = mlp_backward(scorer, score_cache.mlp_cache, d_scores[:, None])

    params, analytic, names = [], [], []
    for i, ((w, b), (dw, db)) in enumerate(zip(zip(scorer.weights, scorer.biases), grads)):
        params += [w, b]
        analytic += [dw, db]
        names += [f"w{i}", f"b{i}"]
    return finite_diff_check(objective, params, analytic, h=h, names=names)


@dataclass
class TrainResult:
    curve: list          # dicts: {step, loss, recall}
    final_recall: float
    scorer: object


def _selection_recall(scores, k, protos, truth):
    order = np.argsort(-scores.normalized, kind="stable")[:k]
    return float(truth[protos.center_indices[order]].mean())


def train_demo(spec, cfg, steps, lr):
    """Train the scorer alone with a prototype-matching surrogate loss.

    The loss is the squared distance between the mean of the soft-selected
    prototypes and the mean pooled feature of the ground-truth-relevant
    frames; gradients reach the scorer through the perturbed top-K.
    """
    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps}")
    frames, _text, truth = generate_synthetic(spec, dtype=np.float64)
    g = _pool_grid(spec.n_patches, cfg)
    pooled = np.stack([
        block_pool(frame, (g, g), (cfg.pool_block, cfg.pool_block))
        for frame in frames
    ])
    l_eff = min(cfg.L, spec.T)
    k_eff = min(cfg.K, l_eff)
    protos, _ = dpc.cluster(pooled, l_eff, cfg.C or None)
    target = pooled[truth > 0].mean(axis=0).reshape(-1)
    proto_flat = np.ascontiguousarray(
        protos.prototypes.reshape(protos.n_prototypes, -1)
    )
    proto_flat_t = np.ascontiguousarray(proto_flat.T)

    scorer = mlp_init(scorer_sizes(cfg.d), stream(cfg.seed, "scorer"), np.float64)
    curve = []
    for step in range(steps):
        scores, score_cache = dpe.score_prototypes(protos, scorer)
        if not np.isfinite(scores.raw).all():
            raise TrainingError(f"scores diverged at step {step}", step=step)
        perturb = dpe.PerturbConfig(
            cfg.sigma, cfg.n_samples, derive(cfg.seed, f"train-step-{step}")
        )
        soft, topk_cache = dpe.perturbed_topk_forward(scores.raw, k_eff, perturb)
        mixed = matmul(soft, proto_flat)                # (K, P*d)
        diff = mixed.mean(axis=0) - target
        loss = float(diff @ diff)
        if not np.isfinite(loss):
            raise TrainingError(f"loss diverged at step {step}", step=step)
        recall = _selection_recall(scores, k_eff, protos, truth)
        curve.append({"step": step, "loss": loss, "recall": recall})

        d_mixed = np.tile(diff * (2.0 / k_eff), (k_eff, 1))
        d_soft = matmul(d_mixed, proto_flat_t)          # (K, L)
        d_scores = dpe.perturbed_topk_backward(topk_cache, d_soft)
        _, grads = mlp_backward(scorer, score_cache.mlp_cache, d_scores[:, None])
        sgd_step(scorer, grads, lr)

    final_scores, _ = dpe.score_prototypes(protos, scorer)
    final_recall = _selection_recall(final_scores, k_eff, protos, truth)
    return TrainResult(curve=curve, final_recall=final_recall, scorer=scorer)
