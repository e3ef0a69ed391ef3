"""64-bit SimHash fingerprints and near-duplicate news removal.

Features are lowercase word 2-shingles of the text, each with weight 1.
Each shingle is hashed with MurmurHash3 (x64, 128-bit variant, low 64 bits)
under the pinned seed ``FEATURE_SEED``. Bit i of the fingerprint is 1 when the
accumulated signed weight for that bit is >= 0, so empty text maps to all ones.
"""

import datetime as dt
import re
from collections.abc import Sequence
from typing import Protocol, TypeVar

import mmh3
import numpy as np

from .errors import InvariantError

ORIGIN = "market-data"

FEATURE_SEED = 42
FINGERPRINT_BITS = 64

_TOKEN = re.compile(r"\w+", re.UNICODE)
_BIT_MASKS = np.array([1 << i for i in range(FINGERPRINT_BITS)], dtype=np.uint64)


def shingles(text: str) -> list[str]:
    """Lowercase word 2-shingles; a single token is its own feature."""
    tokens = _TOKEN.findall(text.lower())
    if len(tokens) < 2:
        return tokens
    return [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]


def feature_hash(feature: str) -> int:
    """Unsigned 64-bit MurmurHash3 of one feature."""
    return mmh3.hash64(feature, seed=FEATURE_SEED, signed=False)[0]


def simhash64(text: str) -> int:
    """Charikar SimHash over 2-shingles, ties resolved to 1."""
    features = shingles(text)
    weights = np.zeros(FINGERPRINT_BITS, dtype=np.int64)
    if features:
        hashes = np.array([feature_hash(f) for f in features], dtype=np.uint64)
        bits = (hashes[:, None] & _BIT_MASKS[None, :]) != 0
        weights = np.where(bits, 1, -1).sum(axis=0)
    fingerprint = 0
    for i in range(FINGERPRINT_BITS):
        if weights[i] >= 0:
            fingerprint |= 1 << i
    return fingerprint


def hamming64(a: int, b: int) -> int:
    """Number of differing bits between two fingerprints."""
    return (a ^ b).bit_count()


class Fingerprinted(Protocol):
    @property
    def simhash(self) -> int: ...

    @property
    def timestamp(self) -> dt.datetime: ...

    @property
    def id(self) -> str: ...


T = TypeVar("T", bound=Fingerprinted)


def dedup_news(articles: Sequence[T], max_hamming: int = 3) -> list[T]:
    """Drop near-duplicates, keeping the earliest article of each cluster.

    Articles are visited in (timestamp, id) order; one is kept only if its
    fingerprint is farther than ``max_hamming`` from every kept fingerprint.
    Survivors are returned in their original input order.
    """
    if not 0 <= max_hamming <= FINGERPRINT_BITS:
        raise InvariantError(f"max_hamming must be in [0, 64], got {max_hamming}", origin=ORIGIN)

    fingerprints = [a.simhash for a in articles]
    order = sorted(range(len(articles)), key=lambda i: (articles[i].timestamp, articles[i].id))
    kept: list[int] = []
    for i in order:
        if all(hamming64(fingerprints[i], fingerprints[j]) > max_hamming for j in kept):
            kept.append(i)
    return [articles[i] for i in sorted(kept)]
