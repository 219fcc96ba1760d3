"""Deterministic seed derivation.

Every random stream in the package is a ``numpy.random.Generator`` built from
a 64-bit seed plus a tuple of integer keys (epoch, sample index, fold, ...),
hashed through ``SeedSequence``. Streams therefore do not depend on the order
in which work is scheduled.
"""
import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & MASK64


def derive_seed(seed, *keys):
    """Hash ``(seed, *keys)`` to a new unsigned 64-bit seed."""
    entropy = [_key(seed)] + [_key(k) for k in keys]
    lo, hi = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def rng_for(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([_key(seed)] + [_key(k) for k in keys]))
