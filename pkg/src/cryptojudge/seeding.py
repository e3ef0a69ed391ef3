"""Deterministic seed fan-out.

One global seed is split into independent per-component streams:

    derive_seed(seed, component) = first 8 bytes (big-endian) of
                                   SHA-256(f"{seed}:{component}")

Streams are numpy ``Generator`` objects over the PCG64 bit generator, so a
partial re-run of any component replays exactly.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, component: str) -> int:
    """Map (global seed, component name) to a 64-bit stream seed."""
    if not component:
        raise ValueError("component name must be non-empty")
    digest = hashlib.sha256(f"{seed}:{component}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big", signed=False)


def rng_for(seed: int, component: str) -> np.random.Generator:
    """Return a fresh PCG64 generator for a named component."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, component)))
