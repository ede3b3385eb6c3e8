"""
Random streams: one independent generator per (base_seed, path, purpose).

Streams never depend on worker count or execution order, which is what makes
ensembles reproducible under any parallelism.
"""

import hashlib

import numpy as np

FAST_NOISE = "fast_noise"


def stream_key(tag: str) -> int:
    """Stable 32-bit key for a stream tag."""
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def spawn_rng(base_seed: int, path_index: int = 0, stream_tag: str = FAST_NOISE) -> np.random.Generator:
    if base_seed < 0 or path_index < 0:
        raise ValueError(f"base_seed and path_index must be nonnegative, got {base_seed}, {path_index}")
    seq = np.random.SeedSequence([int(base_seed), int(path_index), stream_key(stream_tag)])
    return np.random.default_rng(seq)
