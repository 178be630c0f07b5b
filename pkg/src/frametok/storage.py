"""Binary tensor files (.dft) and the JSON run configuration.

Layout, all little-endian:  magic "DFTN" | u32 version=1 | u8 dtype
(0=f32, 1=f64) | u8 ndim (1..4) | ndim x u64 dims | raw row-major payload.
Round-trips are bit-exact.
"""

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

MAGIC = b"DFTN"
VERSION = 1
_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {0: np.dtype(np.float32), 1: np.dtype(np.float64)}


def write_tensor(path, t):
    t = np.asarray(t)
    if t.dtype not in _DTYPE_TAGS:
        raise ValidationError(f"unsupported dtype {t.dtype}; use float32 or float64")
    if not 1 <= t.ndim <= 4:
        raise ValidationError(f"ndim must be in [1, 4], got {t.ndim}")
    header = struct.pack("<4sIBB", MAGIC, VERSION, _DTYPE_TAGS[t.dtype], t.ndim)
    dims = struct.pack(f"<{t.ndim}Q", *t.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(np.ascontiguousarray(t).tobytes())


def read_tensor(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 10:
        raise FormatError(f"{path}: too short for a header")
    magic, version, dtype_tag, ndim = struct.unpack_from("<4sIBB", raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype_tag not in _TAG_DTYPES:
        raise FormatError(f"{path}: unknown dtype tag {dtype_tag}")
    if not 1 <= ndim <= 4:
        raise FormatError(f"{path}: ndim {ndim} outside [1, 4]")
    if len(raw) < 10 + 8 * ndim:
        raise CorruptionError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{ndim}Q", raw, 10)
    dtype = _TAG_DTYPES[dtype_tag]
    expected = int(np.prod(dims)) * dtype.itemsize
    payload = raw[10 + 8 * ndim:]
    if len(payload) != expected:
        raise CorruptionError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


@dataclass
class RunConfig:
    """Pipeline hyperparameters; `load_config` fills defaults and validates."""

    d: int = 1408
    d_prime: int = 0  # 0 means "same as d"
    P: int = 16
    L: int = 25
    K: int = 20
    C: int = 0  # 0 means "auto": max(2, round(sqrt(n))) capped at n-1
    J: int = 2
    layer_sizes: list = field(default_factory=lambda: [16, 6])
    sigma: float = 0.05
    n_samples: int = 500
    seed: int = 0
    r_d_threshold: float = 0.6
    r_a_threshold: float = 0.4
    pool_block: int = 4

    @property
    def spatial_total(self):
        return sum(self.layer_sizes)

    def to_dict(self):
        return asdict(self)


_KEYS = set(RunConfig.__dataclass_fields__)


def validate_config(cfg):
    bad = []
    for key in ("d", "d_prime", "P", "L", "J", "pool_block"):
        if getattr(cfg, key) < 1:
            bad.append(key)
    if not 0 <= cfg.K <= cfg.L:
        bad.append("K")
    if cfg.C < 0:
        bad.append("C")
    if not cfg.layer_sizes or any(s < 1 for s in cfg.layer_sizes):
        bad.append("layer_sizes")
    elif any(a < b for a, b in zip(cfg.layer_sizes, cfg.layer_sizes[1:])):
        bad.append("layer_sizes")
    if len(cfg.layer_sizes) != cfg.J:
        bad.append("J")
    if cfg.sigma <= 0:
        bad.append("sigma")
    if cfg.n_samples < 1:
        bad.append("n_samples")
    for key in ("r_d_threshold", "r_a_threshold"):
        if not 0.0 <= getattr(cfg, key) <= 1.0:
            bad.append(key)
    if bad:
        raise ValidationError(f"invalid config values for keys: {sorted(set(bad))}")
    return cfg


def config_from_dict(data):
    unknown = set(data) - _KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(data)
    if "layer_sizes" in merged and "J" not in merged:
        merged["J"] = len(merged["layer_sizes"])
    cfg = RunConfig(**merged)
    cfg.layer_sizes = list(cfg.layer_sizes)
    if cfg.d_prime == 0:
        cfg.d_prime = cfg.d
    return validate_config(cfg)


def load_config(path_or_none):
    """Load a RunConfig from a JSON file; missing keys take defaults."""
    if path_or_none is None:
        return config_from_dict({})
    with open(path_or_none, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValidationError("config JSON must be an object")
    return config_from_dict(data)
