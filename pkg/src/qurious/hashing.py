"""Deterministic 64-bit hashing and pseudo-random streams.

FNV-1a keys the mock embedder and content digests; splitmix64 expands a
64-bit key into a reproducible uniform stream. Both are fixed-width
integer recurrences, so results are identical across runs and platforms.
"""

from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of a byte string."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def content_digest(path) -> str:
    """64-bit content digest of a file, streamed, as 16 hex chars.

    blake2b keeps digesting large binary artifacts cheap; fnv1a64 is kept
    for short in-memory keys where the exact recurrence matters.
    """
    import hashlib

    h = hashlib.blake2b(digest_size=8)
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(1 << 20)
            if not chunk:
                break
            h.update(chunk)
    return h.hexdigest()


def splitmix64(seed: int, count: int) -> np.ndarray:
    """First `count` outputs of the splitmix64 stream started at `seed`.

    Output k is mix(seed + (k+1)*gamma) with wrapping uint64 arithmetic,
    which vectorizes without carrying sequential state.
    """
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    steps = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK64) + steps * _SPLITMIX_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def uniform01(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to float64 in (0, 1] using the top 53 bits."""
    return ((words >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)
