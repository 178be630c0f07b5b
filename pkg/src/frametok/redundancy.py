"""Redundancy profiling over precomputed per-frame embeddings.

Two ratios per video: repeated-frame ratio (consecutive-frame cosine
similarity, min-max normalized, fraction above 0.6) and answer-irrelevant
ratio (frame-to-text cosine, normalized, fraction below 0.4). Corpus
estimates average a seeded sample of videos.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .rng import stream
from .storage import read_tensor

DEGENERATE_RANGE = 1e-9


@dataclass
class RedundancyReport:
    r_d: float
    r_a: float
    per_video: list   # dicts: {video_id, r_d, r_a}
    n_videos: int


def _row_norms(frames, what):
    norms = np.linalg.norm(frames, axis=1)
    if (norms == 0).any():
        raise ValidationError(f"{what} contains a zero-norm row")
    return norms


def _normalize_or_raw(sims):
    lo, hi = sims.min(), sims.max()
    if hi - lo < DEGENERATE_RANGE:
        return sims
    return (sims - lo) / (hi - lo)


def repeated_ratio(frames, threshold=0.6):
    """Fraction of consecutive-frame similarities above the threshold."""
    if frames.ndim != 2:
        raise ValidationError(f"frames must be (T, d), got {frames.shape}")
    t = frames.shape[0]
    if t < 2:
        raise ValidationError(f"need at least 2 frames, got {t}")
    norms = _row_norms(frames, "frames")
    sims = np.einsum("td,td->t", frames[:-1], frames[1:]) / (norms[:-1] * norms[1:])
    return float(np.count_nonzero(_normalize_or_raw(sims) > threshold) / (t - 1))


def irrelevant_ratio(frames, qa_embed, threshold=0.4):
    """Fraction of frame-to-text similarities below the threshold."""
    if frames.ndim != 2:
        raise ValidationError(f"frames must be (T, d), got {frames.shape}")
    if qa_embed.ndim != 1 or qa_embed.shape[0] != frames.shape[1]:
        raise ValidationError(
            f"qa embedding must be ({frames.shape[1]},), got {qa_embed.shape}"
        )
    qa_norm = np.linalg.norm(qa_embed)
    if qa_norm == 0:
        raise ValidationError("qa embedding has zero norm")
    norms = _row_norms(frames, "frames")
    sims = np.einsum("td,d->t", frames, qa_embed) / (norms * qa_norm)
    return float(np.count_nonzero(_normalize_or_raw(sims) < threshold) / frames.shape[0])


def profile_pairs(pairs, r_d_threshold=0.6, r_a_threshold=0.4):
    """Per-video ratios and their unweighted means.

    pairs is a list of (video_id, frames, qa_embed); order is preserved in
    the per-video listing.
    """
    if not pairs:
        raise ValidationError("empty corpus")
    per_video = []
    for video_id, frames, qa in pairs:
        per_video.append({
            "video_id": str(video_id),
            "r_d": repeated_ratio(frames, r_d_threshold),
            "r_a": irrelevant_ratio(frames, qa, r_a_threshold),
        })
    return RedundancyReport(
        r_d=float(np.mean([v["r_d"] for v in per_video])),
        r_a=float(np.mean([v["r_a"] for v in per_video])),
        per_video=per_video,
        n_videos=len(per_video),
    )


def ingest_video(frames_path, qa_path):
    """Read one (frames, qa) pair; 3-d frame stacks are patch-averaged to
    (T, d) and 2-d qa embeddings are row-averaged to (d,)."""
    frames = read_tensor(frames_path)
    if frames.ndim == 3:
        frames = frames.mean(axis=1)
    qa = read_tensor(qa_path)
    if qa.ndim == 2:
        qa = qa.mean(axis=0)
    return frames, qa


def profile_corpus(corpus_dir, sample_n=20, seed=0,
                   r_d_threshold=0.6, r_a_threshold=0.4):
    """Profile a seeded sample (without replacement) of a corpus directory.

    Layout: one subdirectory per video holding frames.dft and qa.dft.
    The per-video listing is sorted by video id for stable output.
    """
    ids = sorted(
        name for name in os.listdir(corpus_dir)
        if os.path.isfile(os.path.join(corpus_dir, name, "frames.dft"))
        and os.path.isfile(os.path.join(corpus_dir, name, "qa.dft"))
    )
    if not ids:
        raise ValidationError(f"no (frames.dft, qa.dft) videos under {corpus_dir}")
    take = min(sample_n, len(ids))
    chosen = stream(seed, "profile-sample").choice(len(ids), size=take, replace=False)
    pairs = []
    for i in sorted(chosen):
        video_id = ids[i]
        frames, qa = ingest_video(
            os.path.join(corpus_dir, video_id, "frames.dft"),
            os.path.join(corpus_dir, video_id, "qa.dft"),
        )
        pairs.append((video_id, frames, qa))
    return profile_pairs(pairs, r_d_threshold, r_a_threshold)


def report_dict(report, config_echo):
    return {
        "r_d": report.r_d,
        "r_a": report.r_a,
        "n_videos": report.n_videos,
        "per_video": report.per_video,
        "config": config_echo,
    }


def write_csv(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "r_d", "r_a"])
        for row in report.per_video:
            writer.writerow([row["video_id"], row["r_d"], row["r_a"]])
