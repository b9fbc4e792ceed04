"""Deterministic RNG derivation.

Every random draw in the toolkit goes through `rng_for(seed, tag)` so that
independent purposes (user drop, fading, deployment init, ...) get
decorrelated, reproducible streams from one experiment seed.
"""

import zlib

import numpy as np


def rng_for(seed: int, tag: str) -> np.random.Generator:
    """Generator for `tag` derived from `seed`; stable across processes."""
    key = zlib.crc32(tag.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(key,)))
