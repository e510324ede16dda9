"""Named random sub-streams derived from one 64-bit seed."""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stable_key(value) -> int:
    """64-bit key for a string or int that does not depend on PYTHONHASHSEED."""
    if isinstance(value, (int, np.integer)):
        return int(value) & _MASK64
    digest = hashlib.blake2b(str(value).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, name: str, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, name, *keys)``.

    Streams with different names never share state, so e.g. the shuffle order
    can change without perturbing dataset generation.
    """
    entropy = [int(seed) & _MASK64, stable_key(name)] + [stable_key(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
