"""Deterministic randomness helpers.

All randomness in the package flows through counter-based Philox streams so
that every draw is a pure function of explicit keys: subsamples are keyed by
(seed,) alone, permutation i of a test by (seed, i). Results are therefore
independent of row order on disk, worker count, and scheduling.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, *tokens: object) -> int:
    """Derive a decorrelated 64-bit seed from a master seed and string-able tokens.

    Uses SHA-256 over a canonical encoding, so the result is stable across
    processes and platforms (unlike the builtin ``hash``).
    """
    payload = "\x1f".join([str(int(master))] + [str(t) for t in tokens])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, counter: int = 0) -> np.random.Generator:
    """Philox stream keyed by (seed, counter).

    The 128-bit Philox key holds the seed in the high word and the counter in
    the low word, so ``stream(s, i)`` and ``stream(s, j)`` are independent
    streams for i != j regardless of how many draws either one makes.
    """
    key = ((int(seed) & _MASK64) << 64) | (int(counter) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))
