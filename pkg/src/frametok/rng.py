"""Counter-based random streams.

Every source of randomness in the package draws from a Philox generator
keyed by (seed, purpose tag), so independent stages cannot perturb each
other and results do not depend on evaluation order or thread count.
"""

import hashlib

import numpy as np


def _tag_key(tag: str) -> int:
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, tag: str) -> np.random.Generator:
    """Return a generator for `tag` that is independent of other tags."""
    return np.random.Generator(
        np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, _tag_key(tag)])
    )


def derive(seed: int, tag: str) -> int:
    """Mix a tag into a seed, giving a new independent 64-bit seed."""
    return (seed & 0xFFFFFFFFFFFFFFFF) ^ _tag_key(tag)
