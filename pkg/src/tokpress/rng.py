"""Counter-based random streams keyed by structured labels.

Every random draw in the package comes from a Philox generator whose key is
a hash of ``(seed, label parts...)``. Streams therefore depend only on their
key, never on evaluation order or thread count, which is what makes
generation and training bit-reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(*parts: int | str) -> np.ndarray:
    """Hash arbitrary (int | str) parts into a 2-word Philox key."""
    canonical = "\x1f".join(
        f"i{p:d}" if isinstance(p, int) else f"s{p}" for p in parts
    )
    digest = hashlib.blake2b(canonical.encode("utf-8"), digest_size=16).digest()
    return np.frombuffer(digest, dtype=np.uint64)


def keyed_generator(*parts: int | str) -> np.random.Generator:
    """A fresh Generator whose stream is a pure function of the key parts."""
    return np.random.Generator(np.random.Philox(key=derive_key(*parts)))
