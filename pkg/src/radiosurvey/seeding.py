"""Deterministic fan-out of one master seed into independent substreams.

Every stochastic component (shadowing draws, fading, measurement noise,
planner randomness, Monte Carlo runs) derives its own generator through
``derive_rng``, so any single component is reproducible without replaying
the others.  The splitting rule is: the master seed plus the stable
64-bit hashes of the stream labels are fed as the entropy list of a
``numpy.random.SeedSequence``.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_rng", "stream_key"]


def stream_key(label) -> int:
    """Stable 64-bit key for a stream label (int passes through)."""
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Generator for the substream named by ``labels`` under ``seed``.

    Labels may be ints (e.g. run or transmitter indices) or strings
    (e.g. "fading"); the same (seed, labels) always yields the same
    stream, independent of call order elsewhere.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [stream_key(x) for x in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))
