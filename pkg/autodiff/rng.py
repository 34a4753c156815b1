"""Explicitly seeded random streams. No global RNG is used anywhere."""

import zlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _key_entropy(key: Key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError(f"RNG keys must be non-negative, got {key}")
    return int(key)


def derive_rng(seed: int, *keys: Key) -> np.random.Generator:
    """
    Independent generator for (seed, *keys).

    The same seed and keys always give the same stream, regardless of which
    thread asks or in which order streams are created.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(_key_entropy(k) for k in keys)]))
