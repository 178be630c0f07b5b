"""Cooperative frame encoding and token-budget accounting.

Selected frames take the fine path ("cones"): their event prototype and
multi-grained spatial prototypes pass token-wise through an encoder with
no pooling. Every frame also gets a two-token coarse pair ("rods"): one
text-guided attention summary and one global content summary. Fine frames
append the coarse pair, so at the default sizes they emit 16+22+2 = 40
tokens and the rest emit 2.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .numerics import matmul, mlp_forward, softmax_rows


@dataclass
class FrameEncoding:
    tokens: np.ndarray   # (n_tok, d_out)
    kind: str            # "fine" | "coarse"
    frame_index: int


@dataclass
class TokenSequence:
    per_frame: list
    budget: dict


def cones_encode(event_proto, spatial_protos, f_fine):
    """Fine tokens: concat event prototype rows with spatial prototype rows
    and map each row through the encoder. Row count is preserved."""
    if event_proto.shape[1] != spatial_protos.shape[1]:
        raise ValidationError(
            f"feature dims differ: {event_proto.shape} vs {spatial_protos.shape}"
        )
    stacked = np.concatenate([event_proto, spatial_protos], axis=0)
    out, _ = mlp_forward(f_fine, stacked)
    return out


def rods_attend(spatial_protos, text, f_q, f_k):
    """Text-guided summary vector: text rows attend over the prototypes.

    Attention is softmax(query(text) . key(protos)^T / sqrt(d)); the
    attended rows are averaged into a single d-vector.
    """
    d = spatial_protos.shape[1]
    if text.ndim != 2 or text.shape[1] != d:
        raise ValidationError(f"text must be (R, {d}), got {text.shape}")
    q, _ = mlp_forward(f_q, text)
    k, _ = mlp_forward(f_k, spatial_protos)
    logits = matmul(q, np.ascontiguousarray(k.T)) / np.sqrt(d)
    attended = matmul(softmax_rows(logits), spatial_protos)
    return attended.mean(axis=0)


def rods_encode(spatial_protos, text, f_q, f_k, f_coarse):
    """Coarse pair: encoded text-guided vector, then encoded global mean."""
    guided = rods_attend(spatial_protos, text, f_q, f_k)
    content = spatial_protos.mean(axis=0)
    out, _ = mlp_forward(f_coarse, np.stack([guided, content]))
    return out


def cooperative_combine(fine, coarse, flag, frame_index):
    """Per-frame token block: [fine tokens, coarse pair] when the frame is
    selected, the coarse pair alone otherwise."""
    if flag not in (0, 1):
        raise ValidationError(f"frame flag must be 0 or 1, got {flag}")
    if flag == 1:
        if fine is None:
            raise ValidationError("selected frame is missing its fine tokens")
        tokens = np.concatenate([fine, coarse], axis=0)
        return FrameEncoding(tokens=tokens, kind="fine", frame_index=frame_index)
    if fine is not None:
        raise ValidationError("unselected frame must not carry fine tokens")
    return FrameEncoding(tokens=coarse, kind="coarse", frame_index=frame_index)


def build_sequence(encodings):
    """Assemble per-frame encodings (frame order preserved) into a sequence
    with its token budget."""
    n_fine = sum(1 for e in encodings if e.kind == "fine")
    total = sum(e.tokens.shape[0] for e in encodings)
    return TokenSequence(
        per_frame=list(encodings),
        budget={
            "n_fine_frames": n_fine,
            "n_coarse_frames": len(encodings) - n_fine,
            "total_tokens": total,
        },
    )


def budget_accounting(histogram, n_fine, uniform_fine, uniform_coarse=2):
    """Totals and reduction ratios from a {tokens_per_frame: count} histogram.

    uniform_fine is the uncompressed per-frame token count (the patch
    count); uniform_coarse is the flat two-token alternative.
    """
    n_frames = sum(histogram.values())
    total = sum(n * count for n, count in histogram.items())

    def baseline(per_frame):
        base_total = per_frame * n_frames
        pct = 100.0 * (base_total - total) / base_total if base_total else 0.0
        return {"per_frame": per_frame, "total": base_total, "reduction_pct": pct}

    return {
        "n_frames": n_frames,
        "total_tokens": total,
        "n_fine_frames": n_fine,
        "n_coarse_frames": n_frames - n_fine,
        "per_frame_histogram": {str(k): v for k, v in sorted(histogram.items())},
        "baselines": {
            "uniform_fine": baseline(uniform_fine),
            "uniform_coarse": baseline(uniform_coarse),
        },
    }


def budget_report(seq, uniform_fine, uniform_coarse=2):
    """Budget accounting for an encoded sequence."""
    histogram = {}
    for enc in seq.per_frame:
        n = int(enc.tokens.shape[0])
        histogram[n] = histogram.get(n, 0) + 1
    return budget_accounting(
        histogram, seq.budget["n_fine_frames"], uniform_fine, uniform_coarse
    )
