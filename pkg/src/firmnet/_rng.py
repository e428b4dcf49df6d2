"""Deterministic named RNG substreams.

Every stochastic routine in the package draws from a substream derived from
(master_seed, *tags). Tags are hashed with sha256, not Python's builtin
``hash``, so streams are stable across processes and platforms.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_words(tags):
    words = []
    for tag in tags:
        digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
        words.append(int.from_bytes(digest[:8], "little"))
    return words


def substream(master_seed, *tags):
    """Return a ``numpy.random.Generator`` for the named stream."""
    entropy = [int(master_seed) & _MASK64] + _tag_words(tags)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def stream_seed64(master_seed, *tags):
    """A single 64-bit seed for kernels that roll their own generator."""
    entropy = [int(master_seed) & _MASK64] + _tag_words(tags)
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])
