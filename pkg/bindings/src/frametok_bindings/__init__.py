"""In-memory bindings for the frametok engine.

Stateless functions over host numpy arrays and JSON config strings, for
ML pipelines that want the compression engine without shelling out to the
CLI. Numeric outputs agree bit-exactly with the CLI on the same inputs
and seeds. Errors surface as BindingError carrying the engine's exit
code (2 validation, 3 numeric).
"""

import json

import numpy as np

from frametok import config_from_dict, pipeline, spec_from_dict
from frametok.errors import FrametokError
from frametok.redundancy import profile_pairs, report_dict

__all__ = ["BindingError", "compress", "profile", "synth", "as_tensor_view"]


class BindingError(Exception):
    """Engine failure crossing the binding boundary: (code, message)."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code
        self.message = message


def _translate(exc):
    return BindingError(exc.exit_code, str(exc))


def as_tensor_view(array, name, allowed_ndim):
    """Validate and present a host array to the engine.

    Contiguous float32/float64 arrays pass through zero-copy; anything
    else contiguous-copies. Wrong rank raises BindingError(2).
    """
    arr = np.asarray(array)
    if arr.ndim not in allowed_ndim:
        raise BindingError(
            2, f"{name} must have ndim in {sorted(allowed_ndim)}, got {arr.ndim}"
        )
    if arr.dtype not in (np.float32, np.float64):
        raise BindingError(
            2, f"{name} must be float32 or float64, got {arr.dtype}"
        )
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    return arr


def _load_config(config_json):
    data = json.loads(config_json) if config_json and config_json.strip() else {}
    if not isinstance(data, dict):
        raise BindingError(2, "config JSON must be an object")
    try:
        return config_from_dict(data)
    except FrametokError as exc:
        raise _translate(exc) from None


def compress(frames, text, config_json="", mode="infer"):
    """Run the pipeline on in-memory arrays.

    Returns (token_arrays, report_json): one (n_tok, d_out) array per
    frame in frame order, and the same report the CLI writes.
    """
    frames = as_tensor_view(frames, "frames", {3})
    text = as_tensor_view(text, "text", {2})
    cfg = _load_config(config_json)
    try:
        params = pipeline.init_params(cfg, frames.dtype)
        seq, report = pipeline.compress(frames, text, params, cfg, mode)
    except FrametokError as exc:
        raise _translate(exc) from None
    token_arrays = [enc.tokens for enc in seq.per_frame]
    return token_arrays, json.dumps(report, sort_keys=True)


def profile(pairs, thresholds=None):
    """Redundancy ratios over in-memory (frames, qa) pairs.

    pairs is a sequence of (frames (T, d), qa (d,)) arrays; thresholds is
    an optional {"r_d": float, "r_a": float} override. Videos are listed
    by their position, zero-padded, matching a sorted corpus directory.
    """
    thresholds = thresholds or {}
    r_d_threshold = thresholds.get("r_d", 0.6)
    r_a_threshold = thresholds.get("r_a", 0.4)
    validated = []
    for i, (frames, qa) in enumerate(pairs):
        frames = as_tensor_view(frames, f"frames[{i}]", {2})
        qa = as_tensor_view(qa, f"qa[{i}]", {1, 2})
        if qa.ndim == 2:
            qa = qa.mean(axis=0)
        validated.append((f"{i:03d}", frames, qa))
    try:
        report = profile_pairs(validated, r_d_threshold, r_a_threshold)
    except FrametokError as exc:
        raise _translate(exc) from None
    payload = report_dict(report, {
        "r_d_threshold": r_d_threshold,
        "r_a_threshold": r_a_threshold,
    })
    return json.dumps(payload, sort_keys=True)


def synth(spec_json):
    """Generate a planted synthetic video from a JSON spec string.

    Returns (frames, text, truth) arrays, identical to the CLI's
    synth output files.
    """
    data = json.loads(spec_json) if spec_json and spec_json.strip() else {}
    if not isinstance(data, dict):
        raise BindingError(2, "spec JSON must be an object")
    try:
        spec = spec_from_dict(data)
        return pipeline.generate_synthetic(spec)
    except FrametokError as exc:
        raise _translate(exc) from None
